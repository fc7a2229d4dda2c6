import sys

from augsched.main import main

sys.exit(main())
