"""Extracts data/boston.csv and data/boston.schema.json from a scikit-learn
1.1.x wheel, the last release that ships the Boston housing table.

usage: pip download --no-deps --only-binary=:all: scikit-learn==1.1.3 -d wheels
       python3 tools/make_boston.py wheels/scikit_learn-1.1.3-*.whl data
"""
import json
import sys
import zipfile
from pathlib import Path

MEMBER = "sklearn/datasets/data/boston_house_prices.csv"


def main(wheel, out_dir):
    lines = zipfile.ZipFile(wheel).read(MEMBER).decode().splitlines()
    header = [h.strip('"') for h in lines[1].split(",")]
    out = Path(out_dir)
    (out / "boston.csv").write_text("\n".join([",".join(header)] + lines[2:]) + "\n")
    variables = []
    for name in header:
        v = {"name": name, "kind": "binary" if name == "CHAS" else "continuous"}
        if name == "MEDV":
            v["target"] = True
        variables.append(v)
    (out / "boston.schema.json").write_text(json.dumps({"variables": variables}, indent=2) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2] if len(sys.argv) > 2 else "data")
