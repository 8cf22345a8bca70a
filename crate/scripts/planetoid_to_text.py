#!/usr/bin/env python3
"""Convert a Planetoid dataset (Cora, CiteSeer, PubMed) to the text format
read by `bench`.

Input is the directory holding the raw `ind.<name>.*` files from the
Planetoid release. Output is a directory with `meta`, `features.csv`,
`edges.txt`, `labels.txt` and `split.txt`, using the standard fixed split:
20 labelled nodes per class for training, the next 500 for validation and
the 1000 listed test nodes.

    python3 scripts/planetoid_to_text.py raw/ cora data/cora
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load_object(raw: Path, name: str, key: str):
    with open(raw / f"ind.{name}.{key}", "rb") as f:
        return pickle.load(f, encoding="latin1")


def dense(m) -> np.ndarray:
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def convert(raw: Path, name: str, out: Path) -> None:
    x, y, tx, ty, allx, ally, graph = (
        load_object(raw, name, k) for k in ("x", "y", "tx", "ty", "allx", "ally", "graph")
    )
    test_index = [int(line) for line in (raw / f"ind.{name}.test.index").read_text().split()]
    test_sorted = sorted(test_index)

    tx, ty = dense(tx), np.asarray(ty)
    if name == "citeseer":
        # Some test ids have no features; pad them with zero rows.
        full = range(test_sorted[0], test_sorted[-1] + 1)
        tx_ext = np.zeros((len(full), tx.shape[1]))
        tx_ext[np.array(test_sorted) - test_sorted[0], :] = tx
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[np.array(test_sorted) - test_sorted[0], :] = ty
        tx, ty = tx_ext, ty_ext

    features = np.vstack([dense(allx), tx])
    onehot = np.vstack([np.asarray(ally), ty])
    features[test_index, :] = features[test_sorted, :]
    onehot[test_index, :] = onehot[test_sorted, :]
    n, d = features.shape
    c = onehot.shape[1]
    labelled = onehot.sum(axis=1) > 0
    labels = onehot.argmax(axis=1)

    split = ["none"] * n
    n_train = len(y)
    for i in range(n_train):
        split[i] = "train"
    for i in range(n_train, min(n_train + 500, n)):
        split[i] = "val"
    for i in test_sorted:
        if i < n:
            split[i] = "test"
    for i in range(n):
        if not labelled[i]:
            split[i] = "none"

    edges = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))

    out.mkdir(parents=True, exist_ok=True)
    (out / "meta").write_text(f"{n} {d} {c}\n")
    with open(out / "features.csv", "w") as f:
        for row in features:
            f.write(",".join(repr(float(v)) for v in row))
            f.write("\n")
    (out / "edges.txt").write_text("".join(f"{u} {v}\n" for u, v in sorted(edges)))
    (out / "labels.txt").write_text("".join(f"{int(l)}\n" for l in labels))
    (out / "split.txt").write_text("".join(f"{s}\n" for s in split))
    counts = {s: split.count(s) for s in ("train", "val", "test")}
    print(f"{name}: {n} nodes, {d} features, {c} classes, {len(edges)} edges, {counts}", file=sys.stderr)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("raw", type=Path, help="directory with ind.<name>.* files")
    ap.add_argument("name", choices=["cora", "citeseer", "pubmed"])
    ap.add_argument("out", type=Path)
    args = ap.parse_args()
    convert(args.raw, args.name, args.out)


if __name__ == "__main__":
    main()
