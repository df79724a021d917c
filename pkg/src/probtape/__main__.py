import sys

from probtape.cli import main

sys.exit(main())
