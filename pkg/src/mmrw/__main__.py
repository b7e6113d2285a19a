import sys

from mmrw.cli import main

sys.exit(main())
