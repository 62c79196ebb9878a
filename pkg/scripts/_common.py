import argparse
from pathlib import Path


def out_dir(default: str) -> Path:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("results") / default)
    out = ap.parse_args().out
    out.mkdir(parents=True, exist_ok=True)
    return out
