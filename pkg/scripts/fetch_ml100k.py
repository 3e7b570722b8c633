"""Fetch MovieLens-100k ratings as ``user_id,item_id,rating,timestamp`` CSV.

GroupLens hosting is not always reachable, so this pulls the copy bundled in
the RecBole wheel from PyPI (``recbole/dataset_example/ml-100k/ml-100k.inter``)
and rewrites it. A local ``u.data`` can be converted with ``--udata``.

    python scripts/fetch_ml100k.py --out data/ml-100k.csv
"""
import argparse
import csv
import glob
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path


def rows_from_inter(text):
    lines = text.splitlines()
    for line in lines[1:]:
        if line.strip():
            yield line.split("\t")[:4]


def rows_from_udata(text):
    for line in text.splitlines():
        if line.strip():
            yield line.split("\t")[:4]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/ml-100k.csv")
    ap.add_argument("--udata", help="convert an existing u.data instead of downloading")
    args = ap.parse_args(argv)
    if args.udata:
        rows = list(rows_from_udata(Path(args.udata).read_text()))
    else:
        with tempfile.TemporaryDirectory() as tmp:
            subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "--timeout", "60",
                            "-d", tmp, "recbole==1.2.1"], check=True)
            wheel = glob.glob(f"{tmp}/recbole-*.whl")[0]
            with zipfile.ZipFile(wheel) as z:
                text = z.read("recbole/dataset_example/ml-100k/ml-100k.inter").decode()
        rows = list(rows_from_inter(text))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["user_id", "item_id", "rating", "timestamp"])
    w.writerows(rows)
    out.write_text(buf.getvalue())
    print(f"wrote {len(rows)} interactions to {out}")


if __name__ == "__main__":
    main()
