"""Entry point for `python -m mipclass`."""

import sys

from .pipeline_cli import main

if __name__ == "__main__":
    sys.exit(main())
