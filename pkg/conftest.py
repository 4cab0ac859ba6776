import os
import sys

# Flat module layout: make the repository root importable from tests/
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

os.environ.setdefault("EIGN_LOG_LEVEL", "WARNING")
os.environ.setdefault("EIGN_THREADS", "1")
