import sys

from sparseform.cli import main

sys.exit(main())
