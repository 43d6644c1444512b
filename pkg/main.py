"""
Entry shim: ``python main.py <command> ...`` is the same as ``coa <command> ...``.
"""

import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
