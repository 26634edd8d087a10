from whittaker_lab.cli import main

main()
