from lift.cli import main

main()
