"""
Main entry point for cacherag
"""
import logging
import sys
from cacherag.config import LOG_FILE


def setup_logging(verbose: bool = False):
    """Setup logging configuration"""
    options = {
        'level': logging.DEBUG if verbose else logging.INFO,
        'format': "%(asctime)s [%(levelname)s] %(message)s",
    }
    if LOG_FILE:
        options['filename'] = str(LOG_FILE)
    logging.basicConfig(**options)


def main(argv=None) -> int:
    """Run one CLI command and return its exit code"""
    from cacherag.cli import CacheRagCli

    return CacheRagCli().run(argv)


if __name__ == "__main__":
    sys.exit(main())
