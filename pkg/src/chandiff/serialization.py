"""Versioned model files: text header, then little-endian float64 weights.

Layout::

    chandiff-model v1
    kind trained_network
    role denoiser
    shape 33,64,64,16
    output linear
    conditioning_mode none
    n_labels 0
    seed 0
    end
    <raw weights: W1, b1, W2, b2, ... row-major, '<f8'>
"""

import numpy as np

from .errors import ModelFileError
from .nn import MLP

MAGIC = "chandiff-model v1"
_KEYS = ("kind", "role", "shape", "output", "conditioning_mode", "n_labels", "seed")


def write_model(path, mlp: MLP, role: str, conditioning_mode: str = "none",
                n_labels: int = 0, seed: int = 0) -> None:
    header = {
        "kind": "trained_network",
        "role": role,
        "shape": ",".join(str(s) for s in mlp.sizes),
        "output": mlp.output,
        "conditioning_mode": conditioning_mode,
        "n_labels": str(int(n_labels)),
        "seed": str(int(seed)),
    }
    lines = [MAGIC] + [f"{k} {header[k]}" for k in _KEYS] + ["end"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(mlp.get_flat().astype("<f8").tobytes())


def read_model(path, expected=None):
    """Return ``(mlp, header)``.

    ``expected`` maps header keys to required values; any mismatch raises
    :class:`ModelFileError`.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    header = {}
    pos = 0
    first = True
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise ModelFileError(f"{path}: truncated header")
        line = blob[pos:nl].decode("ascii", errors="replace")
        pos = nl + 1
        if first:
            if line != MAGIC:
                raise ModelFileError(f"{path}: not a model file (magic {line!r})")
            first = False
            continue
        if line == "end":
            break
        key, _, value = line.partition(" ")
        header[key] = value
    missing = [k for k in _KEYS if k not in header]
    if missing:
        raise ModelFileError(f"{path}: header lacks {', '.join(missing)}")
    for key, want in (expected or {}).items():
        if str(header.get(key)) != str(want):
            raise ModelFileError(
                f"{path}: header {key}={header.get(key)!r} but config expects {want!r}")
    try:
        sizes = [int(s) for s in header["shape"].split(",")]
    except ValueError:
        raise ModelFileError(f"{path}: malformed shape {header['shape']!r}") from None
    mlp = MLP(sizes, None, header["output"])
    weights = np.frombuffer(blob[pos:], dtype="<f8")
    if weights.size != mlp.n_params():
        raise ModelFileError(
            f"{path}: {weights.size} weights stored, shape needs {mlp.n_params()}")
    mlp.set_flat(weights.astype(np.float64))
    return mlp, header
