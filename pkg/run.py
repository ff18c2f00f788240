#!/usr/bin/env python3
"""
adtcert - command-line entry point
Run `python run.py --help` for the list of commands
"""

import logging
import sys

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

from adtcert import get_config  # noqa: E402
from adtcert.cli import main  # noqa: E402

cfg = get_config()
cfg.init_app()

logging.basicConfig(
    level=cfg.LOG_LEVEL,
    format='%(asctime)s [%(levelname)s] %(name)s: %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)

# Set specific loggers to appropriate levels
logging.getLogger('celery').setLevel(logging.WARNING)
logging.getLogger('kombu').setLevel(logging.WARNING)

if __name__ == '__main__':
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n✗ Interrupted")
        sys.exit(130)
