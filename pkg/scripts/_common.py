"""Shared bits for the experiment scripts."""

import argparse
import logging
import os


def parser(description):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seeds", type=int, default=10, help="number of seeds (0..seeds-1)")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--threads", type=int, default=None, help="default: BALLPARK_THREADS or 1")
    return p


def setup(args):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    os.makedirs(args.out, exist_ok=True)
