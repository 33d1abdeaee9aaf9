"""
Programmatic entry point: ``run(argv)`` drives the management commands and
returns the exit code (0 ok, 1 rejected input, 2 numerical failure,
3 usage error).
"""

import os
import sys

import django
from django.core.management import load_command_class
from django.core.management.base import CommandError

SUBCOMMANDS = ('validate', 'transform', 'simulate', 'density', 'moments', 'girsanov', 'feller')
USAGE_ERROR = 3


def _setup():
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'ckls_lab.settings')
    django.setup()


def run(argv=None, stdout=None, stderr=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    _setup()

    if not argv or argv[0] not in SUBCOMMANDS:
        stderr.write(f"usage: ckls {{{','.join(SUBCOMMANDS)}}} [options]\n")
        return USAGE_ERROR

    name = argv[0]
    command = load_command_class('ckls', name)
    parser = command.create_parser('ckls', name)
    try:
        options = parser.parse_args(argv[1:])
    except CommandError as exc:
        stderr.write(f"ckls {name}: {exc}\n")
        return USAGE_ERROR
    except SystemExit as exc:
        # --help
        return 0 if exc.code in (0, None) else USAGE_ERROR

    cmd_options = vars(options)
    args = cmd_options.pop('args', ())
    try:
        command.execute(*args, stdout=stdout, stderr=stderr, **cmd_options)
    except CommandError as exc:
        stderr.write(f"ckls {name}: {exc}\n")
        return exc.returncode
    return 0


def main():
    sys.exit(run())
