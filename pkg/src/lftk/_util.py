"""Small shared helpers: number formatting, file digests, dimension parsing."""

import hashlib

import numpy as np


def fmt_real(x):
    """Shortest decimal string that parses back to the same float64.

    Integral values drop the trailing point (1.0 -> "1") so record files
    stay compact; parsers accept both plain decimal and scientific forms.
    """
    return np.format_float_positional(float(x), unique=True, trim="-")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def parse_dims(text):
    """Parse an "IxJxK" dimension triple, e.g. "20x20x8"."""
    parts = str(text).lower().split("x")
    if len(parts) != 3:
        raise ValueError(f"expected dims as IxJxK, got {text!r}")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"expected dims as IxJxK, got {text!r}") from None
    if any(d <= 0 for d in dims):
        raise ValueError(f"dimensions must be positive, got {text!r}")
    return dims
