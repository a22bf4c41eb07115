#!/usr/bin/env python3
"""Convert a FLAME model release to the flameguide FLMF container.

Usage:
    python tools/flame_to_flmf.py generic_model.pkl model.flmf
    python tools/flame_to_flmf.py flame.npz model.flmf --shape-dim 100 --expression-dim 50

Accepts the pickled release (chumpy arrays are read without installing
chumpy) or an .npz holding the same keys: v_template, f, shapedirs,
posedirs, J_regressor, weights, kintree_table. The combined shapedirs are
split into identity and expression bases at --release-shape-dim (300 in
the 2020 and 2023 releases) and then truncated to the requested widths.
"""

import argparse
import pickle
import struct
import sys
import types

import numpy as np

MAGIC = b"FLMF"
VERSION = 1
ROOT = 0xFFFFFFFF


class _ChumpyStub:
    """Stands in for chumpy objects; keeps the pickled state."""

    def __init__(self, *args, **kwargs):
        pass

    def __setstate__(self, state):
        self.__dict__.update(state if isinstance(state, dict) else {"x": state})

    def __array__(self, dtype=None, copy=None):
        for key in ("x", "a", "r"):
            if key in self.__dict__:
                return np.asarray(self.__dict__[key], dtype=dtype)
        raise TypeError("chumpy object without array state: %s" % sorted(self.__dict__))


class _Unpickler(pickle.Unpickler):
    def find_class(self, module, name):
        if module.split(".")[0] == "chumpy":
            return _ChumpyStub
        return super().find_class(module, name)


def _dense(value):
    if hasattr(value, "toarray"):
        return value.toarray()
    return np.asarray(value)


def load_release(path):
    if path.endswith(".npz"):
        with np.load(path, allow_pickle=False) as data:
            return {key: data[key] for key in data.files}
    # scipy sparse matrices are pickled too; make sure the module resolves.
    try:
        import scipy.sparse  # noqa: F401
    except ImportError:
        sys.modules.setdefault("scipy", types.ModuleType("scipy"))
    with open(path, "rb") as fh:
        return _Unpickler(fh, encoding="latin1").load()


def convert(raw, shape_dim, expression_dim, release_shape_dim):
    template = _dense(raw["v_template"]).astype(np.float64)
    faces = _dense(raw["f"]).astype(np.int64)
    shapedirs = _dense(raw["shapedirs"]).astype(np.float64)
    posedirs = _dense(raw["posedirs"]).astype(np.float64)
    regressor = _dense(raw["J_regressor"]).astype(np.float64)
    weights = _dense(raw["weights"]).astype(np.float64)
    kintree = _dense(raw["kintree_table"]).astype(np.int64)

    n = template.shape[0]
    joints = regressor.shape[0]
    k = joints - 1
    available_expr = shapedirs.shape[2] - release_shape_dim
    if shape_dim > release_shape_dim or expression_dim > available_expr:
        raise SystemExit(
            "requested (%d, %d) coefficients but the release has (%d, %d)"
            % (shape_dim, expression_dim, release_shape_dim, available_expr)
        )
    if posedirs.shape != (n, 3, 9 * k):
        raise SystemExit("posedirs shape %s, expected %s" % (posedirs.shape, (n, 3, 9 * k)))
    if weights.shape != (n, joints):
        raise SystemExit("weights shape %s, expected %s" % (weights.shape, (n, joints)))

    parents = []
    for j in range(joints):
        p = int(kintree[0, j])
        parents.append(ROOT if j == 0 else p)

    return {
        "template": template,
        "faces": faces,
        "shape": shapedirs[:, :, :shape_dim],
        "expression": shapedirs[:, :, release_shape_dim:release_shape_dim + expression_dim],
        "pose": posedirs,
        "regressor": regressor,
        "weights": weights,
        "parents": parents,
        "k": k,
    }


def write_flmf(model, path):
    n = model["template"].shape[0]
    f32 = lambda a: np.ascontiguousarray(a, dtype="<f4").tobytes()  # noqa: E731
    parts = [
        MAGIC,
        struct.pack("<H", VERSION),
        struct.pack(
            "<5I",
            n,
            model["faces"].shape[0],
            model["k"],
            model["shape"].shape[2],
            model["expression"].shape[2],
        ),
        f32(model["template"]),
        np.ascontiguousarray(model["faces"], dtype="<u4").tobytes(),
        f32(model["shape"]),
        f32(model["expression"]),
        f32(model["pose"]),
        f32(model["regressor"]),
        f32(model["weights"]),
        struct.pack("<%dI" % len(model["parents"]), *model["parents"]),
    ]
    with open(path, "wb") as fh:
        for part in parts:
            fh.write(part)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("release", help="FLAME .pkl or .npz")
    ap.add_argument("output", help="destination .flmf")
    ap.add_argument("--shape-dim", type=int, default=300)
    ap.add_argument("--expression-dim", type=int, default=100)
    ap.add_argument("--release-shape-dim", type=int, default=300,
                    help="identity columns at the start of shapedirs")
    args = ap.parse_args(argv)

    model = convert(load_release(args.release), args.shape_dim, args.expression_dim, args.release_shape_dim)
    write_flmf(model, args.output)
    print("%s: %d vertices, %d faces, %d joints, |beta|=%d, |psi|=%d" % (
        args.output, model["template"].shape[0], model["faces"].shape[0], model["k"] + 1,
        model["shape"].shape[2], model["expression"].shape[2]))


if __name__ == "__main__":
    main()
