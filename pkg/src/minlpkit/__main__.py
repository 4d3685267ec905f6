"""Allow ``python -m minlpkit``."""

import sys

from .cli import main

sys.exit(main())
