#!/usr/bin/env python3
"""Simple launcher script for the lgli command line."""

import sys

from app import main

if __name__ == "__main__":
    sys.exit(main())
