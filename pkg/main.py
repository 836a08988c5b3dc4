"""
Main entry point for cacherag
This file serves as the root entry point that imports from the cacherag package.
"""
import sys
from cacherag.main import main

if __name__ == "__main__":
    sys.exit(main())
