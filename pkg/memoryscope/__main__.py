import sys

from memoryscope.cli import main

sys.exit(main())
