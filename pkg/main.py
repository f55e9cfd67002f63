#!/usr/bin/env python3
"""
U-statistic LIL laboratory

- Certify the LIL conditions of a kernel (conditions)
- Simulate LIL trajectories and limit sets (simulate, limit-set)
- Chaos norms and concentration bounds (chaos-norm, bounds)

This script supports running directly from a source checkout that uses a
src/ layout: it adds the local `src/` directory to sys.path before importing
the CLI. For regular use, install the project and use the `ulil-lab`
console script.
"""

import os
import sys

# Add src/ to path to import modules directly
REPO_ROOT = os.path.dirname(os.path.abspath(__file__))
SRC_PATH = os.path.join(REPO_ROOT, "src")
if SRC_PATH not in sys.path:
    sys.path.insert(0, SRC_PATH)

from cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
