"""Allow `python -m isaqn_sim`."""

import sys

from .cli import main

sys.exit(main())
