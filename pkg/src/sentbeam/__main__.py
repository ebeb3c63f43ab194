"""Module entry point: python3 -m sentbeam <subcommand>."""

import sys

from .cli import main

sys.exit(main())
