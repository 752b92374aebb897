"""DDROM matrices on disk: one triplet file per term plus ``ddrom.json``."""

import json
import os

from .. import affine
from ..io import read_triplets, write_triplets
from .model import DdromMatrices


def save_ddrom(m, directory, extra=None):
    os.makedirs(directory, exist_ok=True)
    files = {"A": [], "B": [], "C": []}
    for key, terms in (("A", m.A_terms), ("B", m.B_terms), ("C", m.C_terms)):
        for i, t in enumerate(terms):
            name = f"{key}_{i}.txt"
            write_triplets(os.path.join(directory, name), t)
            files[key].append(name)
    meta = {
        "r": m.r,
        "blocks": list(m.blocks) if m.blocks is not None else None,
        "beta": m.beta,
        "theta_a": affine.to_json(m.theta_a),
        "theta_u": affine.to_json(m.theta_u),
        "theta_l": affine.to_json(m.theta_l),
        "files": files,
    }
    if extra:
        meta.update(extra)
    with open(os.path.join(directory, "ddrom.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return directory


def load_ddrom(directory):
    with open(os.path.join(directory, "ddrom.json")) as fh:
        meta = json.load(fh)

    def load(names, vector):
        out = []
        for n in names:
            a = read_triplets(os.path.join(directory, n))
            out.append(a.ravel() if vector else a)
        return out

    return DdromMatrices(
        A_terms=load(meta["files"]["A"], False),
        B_terms=load(meta["files"]["B"], True),
        C_terms=load(meta["files"]["C"], True),
        theta_a=affine.from_json(meta["theta_a"]),
        theta_u=affine.from_json(meta["theta_u"]),
        theta_l=affine.from_json(meta["theta_l"]),
        blocks=meta["blocks"],
        beta=meta["beta"],
    )
