"""Builds data/tiny_mnist.hex from the digit tables of the npm `mnist` package.

usage: npm install mnist@1.1.0 && python3 tools/make_tiny_mnist.py node_modules/mnist/src/digits data/tiny_mnist.hex

Takes the first 200 images of each digit, interleaved by digit, binarized at
0.5. One image per line: 784 bits in row-major order as 196 hex digits.
"""
import json
import sys
from pathlib import Path

PER_DIGIT = 200
SIZE = 28 * 28


def main(src, dst):
    digits = [json.loads((Path(src) / f"{d}.json").read_text())["data"] for d in range(10)]
    lines = []
    for k in range(PER_DIGIT):
        for d in range(10):
            pixels = digits[d][k * SIZE:(k + 1) * SIZE]
            bits = "".join("1" if p >= 0.5 else "0" for p in pixels)
            lines.append(f"{int(bits, 2):0196x}")
    Path(dst).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
