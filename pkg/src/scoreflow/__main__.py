from .expcli.cli import main

main()
