import sys

from msnilm.cli import main

sys.exit(main())
