import sys

from posesync.cli import main

sys.exit(main())
