"""Rank-R CP factor model with per-entity biases.

A prediction for cell (i, j, k) is

    yhat = sum_r U[i,r] * S[j,r] * T[k,r] + a[i] + b[j] + c[k]

with every element of U, S, T, a, b, c nonnegative, which keeps
predictions nonnegative. The module also evaluates the squared-error and
Cauchy objectives over an observed entry set, and reads/writes the
versioned ``lft-model v1`` text format.
"""

import numpy as np

from ._util import fmt_real
from .errors import DataFormatError
from .tensor import entry_arrays

MODEL_HEADER = "lft-model v1"

_CHUNK = 1 << 18


class FactorModel:
    """Nonnegative latent factor matrices U, S, T and bias vectors a, b, c."""

    def __init__(self, U, S, T, a, b, c):
        self.U = np.array(U, dtype=np.float64, copy=True)
        self.S = np.array(S, dtype=np.float64, copy=True)
        self.T = np.array(T, dtype=np.float64, copy=True)
        self.a = np.array(a, dtype=np.float64, copy=True)
        self.b = np.array(b, dtype=np.float64, copy=True)
        self.c = np.array(c, dtype=np.float64, copy=True)
        self._validate()

    def _validate(self):
        for name, m in (("U", self.U), ("S", self.S), ("T", self.T)):
            if m.ndim != 2:
                raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
        if not (self.U.shape[1] == self.S.shape[1] == self.T.shape[1]):
            raise ValueError("factor matrices must share the same rank")
        if self.U.shape[1] < 1:
            raise ValueError("rank must be at least 1")
        pairs = (("a", self.a, self.U), ("b", self.b, self.S), ("c", self.c, self.T))
        for name, v, m in pairs:
            if v.shape != (m.shape[0],):
                raise ValueError(f"bias {name} must have length {m.shape[0]}")
        for name, arr in self.arrays():
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")
            if arr.size and arr.min() < 0:
                raise ValueError(f"{name} contains negative values")

    @classmethod
    def initialize(cls, dims, rank, seed):
        """Fresh model: factors uniform on [0, 0.1), biases zero.

        Small positive factors keep early predictions in range while
        respecting the nonnegativity constraints.
        """
        if rank < 1:
            raise ValueError("rank must be at least 1")
        ni, nj, nk = dims
        rng = np.random.default_rng(seed)
        return cls(
            rng.uniform(0.0, 0.1, (ni, rank)),
            rng.uniform(0.0, 0.1, (nj, rank)),
            rng.uniform(0.0, 0.1, (nk, rank)),
            np.zeros(ni),
            np.zeros(nj),
            np.zeros(nk),
        )

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def dims(self):
        return (self.U.shape[0], self.S.shape[0], self.T.shape[0])

    def arrays(self):
        return (
            ("U", self.U),
            ("S", self.S),
            ("T", self.T),
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
        )

    def copy(self):
        return FactorModel(self.U, self.S, self.T, self.a, self.b, self.c)

    def _check_index(self, mode, index, dim):
        if not 0 <= index < dim:
            raise IndexError(f"{mode} index {index} out of range for dimension {dim}")

    def predict(self, i, j, k):
        """Point prediction for cell (i, j, k); nonnegative by construction."""
        i, j, k = int(i), int(j), int(k)
        ni, nj, nk = self.dims
        self._check_index("user", i, ni)
        self._check_index("service", j, nj)
        self._check_index("time", k, nk)
        cp = float(np.dot(self.U[i] * self.S[j], self.T[k]))
        return cp + float(self.a[i] + self.b[j] + self.c[k])

    def predict_entries(self, ii, jj, kk):
        """Vectorized prediction over coordinate arrays (chunked for memory)."""
        ii = np.asarray(ii, dtype=np.int64)
        jj = np.asarray(jj, dtype=np.int64)
        kk = np.asarray(kk, dtype=np.int64)
        ni, nj, nk = self.dims
        for mode, idx, dim in (("user", ii, ni), ("service", jj, nj), ("time", kk, nk)):
            if idx.size and (idx.min() < 0 or idx.max() >= dim):
                bad = idx[(idx < 0) | (idx >= dim)][0]
                raise IndexError(f"{mode} index {bad} out of range for dimension {dim}")
        out = np.empty(ii.size, dtype=np.float64)
        for lo in range(0, ii.size, _CHUNK):
            hi = min(lo + _CHUNK, ii.size)
            ic, jc, kc = ii[lo:hi], jj[lo:hi], kk[lo:hi]
            out[lo:hi] = (self.U[ic] * self.S[jc] * self.T[kc]).sum(axis=1)
            out[lo:hi] += self.a[ic] + self.b[jc] + self.c[kc]
        return out

    def residual(self, entry):
        """Observed minus predicted value; sign preserved."""
        return float(entry[3]) - self.predict(entry[0], entry[1], entry[2])

    def __repr__(self):
        return f"FactorModel(dims={self.dims}, rank={self.rank})"


def objective(model, tensor, loss="cauchy", gamma=1.0):
    """Total loss of the model over the observed entries.

    ``cauchy``: sum of ln(1 + e^2 / gamma^2) over residuals e; grows only
    logarithmically in a residual, which is what bounds the influence of
    outlying entries. ``l2``: plain sum of squared residuals.
    """
    if loss not in ("cauchy", "l2"):
        raise ValueError(f"unknown loss mode {loss!r}")
    if loss == "cauchy" and not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    ii, jj, kk, yy = entry_arrays(tensor)
    e = yy - model.predict_entries(ii, jj, kk)
    if loss == "cauchy":
        return float(np.log1p((e / gamma) ** 2).sum())
    return float((e * e).sum())


def save_model(model, path):
    """Write the ``lft-model v1`` text format.

    Layout: header ``lft-model v1 R |I| |J| |K|``, then six labeled blocks
    U, S, T, a, b, c with one row per entity (R space-separated fields for
    factor matrices, a single field for bias vectors). Values use the
    shortest decimal form that round-trips exactly.
    """
    ni, nj, nk = model.dims
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{MODEL_HEADER} {model.rank} {ni} {nj} {nk}\n")
        for name, arr in model.arrays():
            fh.write(name + "\n")
            rows = arr if arr.ndim == 2 else arr[:, None]
            for row in rows:
                fh.write(" ".join(fmt_real(v) for v in row) + "\n")


def load_model(path):
    """Read a model written by :func:`save_model`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("empty model file")
    head = lines[0].split()
    if len(head) != 6 or " ".join(head[:2]) != MODEL_HEADER:
        raise DataFormatError(f"bad model header: {lines[0]!r}")
    try:
        rank, ni, nj, nk = (int(t) for t in head[2:])
    except ValueError:
        raise DataFormatError(f"bad model header: {lines[0]!r}") from None
    blocks = {}
    pos = 1
    for name, n_rows, n_cols in (
        ("U", ni, rank),
        ("S", nj, rank),
        ("T", nk, rank),
        ("a", ni, 1),
        ("b", nj, 1),
        ("c", nk, 1),
    ):
        if pos >= len(lines) or lines[pos].strip() != name:
            raise DataFormatError(f"expected block label {name!r} at line {pos + 1}")
        pos += 1
        if pos + n_rows > len(lines):
            raise DataFormatError(f"block {name!r} is truncated")
        rows = []
        for off in range(n_rows):
            fields = lines[pos + off].split()
            if len(fields) != n_cols:
                raise DataFormatError(
                    f"line {pos + off + 1}: expected {n_cols} fields in block {name!r},"
                    f" got {len(fields)}"
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise DataFormatError(
                    f"line {pos + off + 1}: non-numeric field in block {name!r}"
                ) from None
        pos += n_rows
        arr = np.asarray(rows, dtype=np.float64)
        blocks[name] = arr if name in ("U", "S", "T") else arr[:, 0]
    if pos != len(lines) and any(line.strip() for line in lines[pos:]):
        raise DataFormatError(f"unexpected trailing content at line {pos + 1}")
    try:
        return FactorModel(**blocks)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None
