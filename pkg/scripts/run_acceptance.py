#!/usr/bin/env python3
"""Run the acceptance suite and print only the per-criterion verdicts."""

import subprocess
import sys
from pathlib import Path

root = Path(__file__).resolve().parents[1]
proc = subprocess.run([sys.executable, "-m", "pytest", "-v", "-p", "no:cacheprovider",
                       str(root / "tests" / "test_acceptance.py")],
                      capture_output=True, text=True)
lines = [l for l in proc.stdout.splitlines() if l.startswith(("PASS criterion", "FAIL criterion"))]
print("\n".join(lines))
print(proc.stdout.splitlines()[-1] if proc.stdout else proc.stderr)
sys.exit(proc.returncode)
