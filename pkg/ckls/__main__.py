from ckls.cli import main

main()
