"""Allow ``python -m compload`` as an alternative to the console script."""

import sys

from .harness import main

if __name__ == "__main__":
    sys.exit(main())
