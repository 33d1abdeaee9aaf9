"""
Shared base for the ckls management commands.

Adds the global flags (--config, --seed, --out) and turns ckls errors into
CommandError with the exit code the error carries.
"""

from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from ckls.conf import ckls_settings
from ckls.exceptions import CklsError
from ckls.export import dumps, write_csv
from ckls.params import load_params

USAGE_ERROR = 3


class CklsCommand(BaseCommand):
    requires_system_checks = []
    requires_config = True

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            required=self.requires_config,
            help='Parameter file with flat key = value lines (a, b, sigma, k, lambda0, L)'
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=ckls_settings.SEED,
            help='Random seed (default %(default)s)'
        )
        parser.add_argument(
            '--out',
            help='Write the CSV part of the result to this file'
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except CklsError as exc:
            raise CommandError(f"{type(exc).__name__}: {exc}", returncode=exc.exit_code) from exc

    def usage_error(self, message):
        return CommandError(message, returncode=USAGE_ERROR)

    def load_params(self, options):
        return load_params(options['config'])

    def progress(self, message):
        self.stderr.write(self.style.NOTICE(message))

    def report(self, obj):
        """JSON report for stdout"""
        return dumps(obj)

    def write_table(self, options, header, rows):
        if not options['out']:
            return
        with Path(options['out']).open('w', newline='') as stream:
            write_csv(stream, header, rows)
        self.stderr.write(self.style.SUCCESS(f"Wrote {options['out']}"))
