import sys

from dgem.harness.cli import main

sys.exit(main())
