#!/usr/bin/env python

import sys
import os
import argparse

# Ensure project root is on Python path
script_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.abspath(os.path.join(script_dir, '..'))
sys.path.insert(0, project_root)

from hlseg.utils.synth import generate_skin_dataset


def main():
    parser = argparse.ArgumentParser(description='Write the synthetic five-tone portrait dataset')
    parser.add_argument('--out', default=os.path.join(project_root, 'data', 'skin'))
    parser.add_argument('--count', type=int, default=500)
    parser.add_argument('--size', type=int, default=96)
    parser.add_argument('--seed', type=int, default=42)
    args = parser.parse_args()

    out = generate_skin_dataset(args.out, args.count, args.size, args.seed)
    print(f"Dataset written to {out}")


if __name__ == "__main__":
    main()
