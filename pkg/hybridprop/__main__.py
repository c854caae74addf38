"""Run the command line with ``python -m hybridprop``."""
import sys

from .cli import main

sys.exit(main())
