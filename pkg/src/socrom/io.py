"""Plain-text exchange formats: coordinate (triplet) matrices and CSV tables."""

import csv
import os

import numpy as np
import scipy.sparse as sp


def fmt(x):
    """Round-trip float formatting so reruns produce identical bytes."""
    return repr(float(x))


def write_triplets(path, a, drop_zeros=True):
    """Write ``rows cols`` header then one ``i j value`` line per stored entry."""
    if sp.issparse(a):
        coo = a.tocoo()
        shape = coo.shape
        entries = sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))
    else:
        arr = np.asarray(a, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        shape = arr.shape
        idx = np.argwhere(arr != 0) if drop_zeros else np.argwhere(np.ones_like(arr, bool))
        entries = [(int(i), int(j), float(arr[i, j])) for i, j in idx]
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"{shape[0]} {shape[1]}\n")
        for i, j, v in entries:
            fh.write(f"{i} {j} {fmt(v)}\n")


def read_triplets(path, dense=True):
    with open(path) as fh:
        nrows, ncols = (int(t) for t in fh.readline().split())
        lines = [ln for ln in fh if ln.strip()]
    data = np.loadtxt(lines, ndmin=2) if lines else np.zeros((0, 3))
    m = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                      shape=(nrows, ncols))
    return m.toarray() if dense else m.tocsr()


def write_csv(path, rows, columns):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) if isinstance(row[c], (float, np.floating)) else row[c]
                        for c in columns])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_matrix_csv(path, a):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        for row in np.atleast_2d(a):
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_samples_csv(path):
    """``(mu, y)`` pairs from a CSV with ``mu`` and ``y`` columns."""
    return [(float(r["mu"]), float(r["y"])) for r in read_csv(path)]
