from fwforge.cli import main

main()
