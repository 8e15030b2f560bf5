"""Allow ``python -m ambictrl``."""

import sys

from ambictrl.cli import main

sys.exit(main())
