#!/usr/bin/env python3
from __future__ import annotations

import sys
from pathlib import Path

# Ensure project root is on sys.path when running from ./scripts
PROJECT_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(PROJECT_ROOT))

from src.harness.cli import main  # noqa: E402

if __name__ == "__main__":
    raise SystemExit(main())
