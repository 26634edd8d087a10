"""Entry script; ``python app.py <subcommand> ...`` is the same as ``python -m whittaker_lab``."""

from whittaker_lab.cli import main

if __name__ == "__main__":
    main()
