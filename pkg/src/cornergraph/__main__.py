import sys

from cornergraph.cli import main

sys.exit(main())
