"""Allow ``python -m dyadlab`` as an alternative to the console script."""

import sys

from dyadlab.cli import main

if __name__ == "__main__":
    sys.exit(main())
