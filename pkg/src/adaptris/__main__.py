import sys

from adaptris.cli import main

sys.exit(main())
