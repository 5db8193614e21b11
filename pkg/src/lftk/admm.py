"""ADMM training of the nonnegative factor model.

The constrained fitting problem is split with one unconstrained auxiliary
copy per factor/bias group, tied to its nonnegative primal twin through an
augmented Lagrangian. Each epoch alternates three moves:

1. auxiliary coordinate updates: closed-form minimizers of the
   half-quadratic subproblem in which every residual carries the weight
   ``1 / (gamma^2 + e^2)`` (or 1 in plain squared-error mode), refreshed
   from the residual standing immediately before the coordinate's update;
2. projection of the primal factors onto the nonnegative orthant at the
   penalty minimizer ``max(0, aux + multiplier / constant)``;
3. dual gradient ascent on the multipliers.

Per-entity augmentation constants are scaled by local data density
(``lambda * slice size``), so sparsely observed entities feel the same
relative pull toward feasibility as heavily observed ones. Entities with
no observed entries have zero constants and are skipped everywhere; they
retain their initial values.

Within one phase (one factor column, or one bias vector), rows of the same
mode touch disjoint entry sets, so updating them in ascending index order
is identical to updating them simultaneously; the sweeps below exploit
this with vectorized per-phase updates. This single deterministic
partition is recorded in the training report.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._util import fmt_real
from .errors import DivergenceError
from .evaluation import EvalReport, mae
from .model import FactorModel, objective
from .tensor import MODES

LOSS_MODES = ("cauchy", "l2")

# Magnitude at which training is declared divergent; the coupled
# nonconvex updates carry no global convergence guarantee.
DIVERGENCE_LIMIT = 1e12


@dataclass
class TrainConfig:
    """Hyperparameters and stopping rules for one training run."""

    rank: int = 5
    gamma: float = 1.0
    lam: float = 0.1
    eta: float = 1.0
    loss: str = "cauchy"
    max_epochs: int = 1000
    patience: int = 20
    min_delta: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.eta <= 2:
            raise ValueError(f"eta must be in (0, 2], got {self.eta}")
        if self.loss not in LOSS_MODES:
            raise ValueError(f"loss must be one of {LOSS_MODES}, got {self.loss!r}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 0:
            raise ValueError(f"patience must be >= 0, got {self.patience}")
        if self.min_delta < 0:
            raise ValueError(f"min_delta must be >= 0, got {self.min_delta}")


@dataclass
class AugmentationConstants:
    """Per-entity penalty weights, one vector per mode.

    Factor and bias groups of the same mode share the same value
    (tau == alpha, nu == beta, omega == delta elementwise); zero exactly
    for entities with no observed entries.
    """

    tau: np.ndarray
    nu: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    delta: np.ndarray


def compute_augmentation_constants(tensor, lam):
    """Density-scaled penalty weights: lambda times the entity's entry count."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    tau, nu, omega = (
        lam * tensor.slice_counts(mode).astype(np.float64) for mode in MODES
    )
    return AugmentationConstants(tau, nu, omega, tau.copy(), nu.copy(), omega.copy())


def cauchy_weight(residual, gamma=1.0, loss="cauchy"):
    """Half-quadratic weight of a residual.

    ``cauchy``: 1 / (gamma^2 + e^2), in (0, 1/gamma^2]; this is exactly the
    factor that makes weight * e the derivative of (1/2) ln(1 + e^2/gamma^2).
    ``l2``: constant 1, recovering the plain squared-error updates.
    Accepts scalars or arrays.
    """
    if loss not in LOSS_MODES:
        raise ValueError(f"loss must be one of {LOSS_MODES}, got {loss!r}")
    e = np.asarray(residual, dtype=np.float64)
    if loss == "l2":
        w = np.ones_like(e)
    else:
        if not gamma > 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        w = 1.0 / (gamma * gamma + e * e)
    return w if e.ndim else float(w)


class AdmmState:
    """Auxiliary variables, multipliers, and constants of one training run.

    The auxiliary arrays mirror the model's shapes but are unconstrained in
    sign; multipliers start at zero. The loss mode and scale are carried
    here so the per-coordinate updates can evaluate their weights.
    """

    def __init__(self, aux, mult, constants, gamma, loss):
        self.aux_u, self.aux_s, self.aux_t, self.aux_a, self.aux_b, self.aux_c = aux
        self.phi, self.rho, self.psi, self.chi, self.vphi, self.sigma = mult
        self.constants = constants
        self.gamma = gamma
        self.loss = loss

    @classmethod
    def initialize(cls, model, tensor, config):
        aux = tuple(arr.copy() for _, arr in model.arrays())
        mult = tuple(np.zeros_like(arr) for _, arr in model.arrays())
        constants = compute_augmentation_constants(tensor, config.lam)
        return cls(aux, mult, constants, config.gamma, config.loss)

    def aux_prediction(self, tensor, positions=None):
        """Predictions from the auxiliary variables for all (or some) entries."""
        if positions is None:
            ii, jj, kk = tensor.i, tensor.j, tensor.k
        else:
            ii, jj, kk = tensor.i[positions], tensor.j[positions], tensor.k[positions]
        cp = (self.aux_u[ii] * self.aux_s[jj] * self.aux_t[kk]).sum(axis=1)
        return cp + self.aux_a[ii] + self.aux_b[jj] + self.aux_c[kk]

    def groups(self, model):
        """(name, aux, primal, multiplier, constants) for all six groups."""
        c = self.constants
        return (
            ("user factors", self.aux_u, model.U, self.phi, c.tau),
            ("service factors", self.aux_s, model.S, self.rho, c.nu),
            ("time factors", self.aux_t, model.T, self.psi, c.omega),
            ("user biases", self.aux_a, model.a, self.chi, c.alpha),
            ("service biases", self.aux_b, model.b, self.vphi, c.beta),
            ("time biases", self.aux_c, model.c, self.sigma, c.delta),
        )

    def max_primal_residual(self, model):
        """Largest gap |aux - primal| over all six variable groups."""
        gap = 0.0
        for _, aux, prim, _, _ in self.groups(model):
            if aux.size:
                gap = max(gap, float(np.abs(aux - prim).max()))
        return gap


def _factor_refs(state, model, tensor, mode):
    if mode == "user":
        return tensor.i, state.aux_u, model.U, state.phi, state.constants.tau
    if mode == "service":
        return tensor.j, state.aux_s, model.S, state.rho, state.constants.nu
    if mode == "time":
        return tensor.k, state.aux_t, model.T, state.psi, state.constants.omega
    raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")


def _bias_refs(state, model, tensor, mode):
    if mode == "user":
        return tensor.i, state.aux_a, model.a, state.chi, state.constants.alpha
    if mode == "service":
        return tensor.j, state.aux_b, model.b, state.vphi, state.constants.beta
    if mode == "time":
        return tensor.k, state.aux_c, model.c, state.sigma, state.constants.delta
    raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")


def _factor_coef(state, tensor, mode, r, positions=None):
    # Per-entry coefficient multiplying the mode's own auxiliary factor in
    # the prediction: the product of the other two modes' column-r values.
    if positions is None:
        ii, jj, kk = tensor.i, tensor.j, tensor.k
    else:
        ii, jj, kk = tensor.i[positions], tensor.j[positions], tensor.k[positions]
    if mode == "user":
        return state.aux_s[jj, r] * state.aux_t[kk, r]
    if mode == "service":
        return state.aux_u[ii, r] * state.aux_t[kk, r]
    return state.aux_u[ii, r] * state.aux_s[jj, r]


def update_auxiliary_factor_row(state, model, tensor, mode, index, r):
    """Closed-form update of one auxiliary factor coordinate.

    Minimizes the weighted squared residual over the entity's slice plus
    its augmentation penalty, with weights frozen at the residuals standing
    before the update. Empty slices are skipped (value unchanged). The
    returned value is unconstrained in sign; state is updated in place.
    """
    _, aux, prim, mult, const = _factor_refs(state, model, tensor, mode)
    pos = tensor.slice(mode, index)
    if pos.size == 0:
        return float(aux[index, r])
    y = tensor.y[pos]
    yhat = state.aux_prediction(tensor, pos)
    coef = _factor_coef(state, tensor, mode, r, pos)
    delta = cauchy_weight(y - yhat, state.gamma, state.loss)
    partial = yhat - aux[index, r] * coef
    num = float((delta * coef * (y - partial)).sum()) + const[index] * prim[index, r]
    num -= mult[index, r]
    den = const[index] + float((delta * coef * coef).sum())
    value = num / den
    aux[index, r] = value
    return float(value)


def update_auxiliary_bias(state, model, tensor, mode, index):
    """Closed-form update of one auxiliary bias coordinate.

    Same structure as the factor update with coefficient 1; the denominator
    accumulates the sum of the frozen weights over the entity's slice.
    """
    _, aux, prim, mult, const = _bias_refs(state, model, tensor, mode)
    pos = tensor.slice(mode, index)
    if pos.size == 0:
        return float(aux[index])
    y = tensor.y[pos]
    yhat = state.aux_prediction(tensor, pos)
    delta = cauchy_weight(y - yhat, state.gamma, state.loss)
    partial = yhat - aux[index]
    num = float((delta * (y - partial)).sum()) + const[index] * prim[index]
    num -= mult[index]
    den = const[index] + float(delta.sum())
    value = num / den
    aux[index] = value
    return float(value)


def project_nonnegative(state, model):
    """Clamp each primal group at the penalty minimizer max(0, aux + mult/const).

    Entities with zero constants are left untouched; afterwards every model
    element is >= 0. Returns the model (mutated in place).
    """
    for _, aux, prim, mult, const in state.groups(model):
        active = const > 0
        shift = np.zeros_like(aux)
        if aux.ndim == 2:
            np.divide(mult, const[:, None], out=shift, where=active[:, None])
            candidate = np.maximum(0.0, aux + shift)
            prim[active, :] = candidate[active, :]
        else:
            np.divide(mult, const, out=shift, where=active)
            candidate = np.maximum(0.0, aux + shift)
            prim[active] = candidate[active]
    return model


def update_multipliers(state, model, eta):
    """Dual gradient ascent: mult += eta * const * (aux - primal), per group.

    Feasible groups (aux equal to primal) leave their multipliers fixed;
    zero-constant entities never move.
    """
    for _, aux, prim, mult, const in state.groups(model):
        c = const[:, None] if aux.ndim == 2 else const
        mult += eta * c * (aux - prim)


def lagrangian_value(state, model, tensor, config):
    """Full augmented Lagrangian; diagnostics only.

    Half the loss over the auxiliary predictions, plus the quadratic
    penalties (const/2)(aux - primal + mult/const)^2, minus the constant
    term sum mult^2 / (2 const). Zero-constant entities contribute nothing.
    """
    e = tensor.y - state.aux_prediction(tensor)
    if config.loss == "cauchy":
        value = 0.5 * float(np.log1p((e / config.gamma) ** 2).sum())
    else:
        value = 0.5 * float((e * e).sum())
    for _, aux, prim, mult, const in state.groups(model):
        active = const > 0
        if not active.any():
            continue
        c = const[active]
        if aux.ndim == 2:
            gap = aux[active] - prim[active] + mult[active] / c[:, None]
            value += 0.5 * float((c[:, None] * gap * gap).sum())
            value -= float((mult[active] ** 2 / (2.0 * c[:, None])).sum())
        else:
            gap = aux[active] - prim[active] + mult[active] / c
            value += 0.5 * float((c * gap * gap).sum())
            value -= float((mult[active] ** 2 / (2.0 * c)).sum())
    return value


def _sweep_factor(state, model, tensor, mode, r, yhat):
    own, aux, prim, mult, const = _factor_refs(state, model, tensor, mode)
    coef = _factor_coef(state, tensor, mode, r)
    delta = cauchy_weight(tensor.y - yhat, state.gamma, state.loss)
    partial = yhat - aux[own, r] * coef
    dim = aux.shape[0]
    num = np.bincount(own, weights=delta * coef * (tensor.y - partial), minlength=dim)
    num += const * prim[:, r] - mult[:, r]
    den = const + np.bincount(own, weights=delta * coef * coef, minlength=dim)
    active = tensor.slice_counts(mode) > 0
    new = aux[:, r].copy()
    np.divide(num, den, out=new, where=active)
    yhat += (new[own] - aux[own, r]) * coef
    aux[:, r] = new


def _sweep_bias(state, model, tensor, mode, yhat):
    own, aux, prim, mult, const = _bias_refs(state, model, tensor, mode)
    delta = cauchy_weight(tensor.y - yhat, state.gamma, state.loss)
    partial = yhat - aux[own]
    dim = aux.shape[0]
    num = np.bincount(own, weights=delta * (tensor.y - partial), minlength=dim)
    num += const * prim - mult
    den = const + np.bincount(own, weights=delta, minlength=dim)
    active = tensor.slice_counts(mode) > 0
    new = aux.copy()
    np.divide(num, den, out=new, where=active)
    yhat += new[own] - aux[own]
    aux[:] = new


def _check_group(name, arr):
    if not np.isfinite(arr).all():
        raise DivergenceError(name, "non-finite value")
    if arr.size and np.abs(arr).max() > DIVERGENCE_LIMIT:
        raise DivergenceError(name, f"magnitude exceeds {DIVERGENCE_LIMIT:g}")


def train_epoch(state, model, tensor, config):
    """One full sweep over every variable group.

    Order: all auxiliary user-factor columns, then service, then time
    (each column over all entities at once); then the three auxiliary bias
    vectors; then the nonnegativity projection; then dual ascent. Returns
    the training objective of the projected model and the largest
    aux-primal gap. Raises :class:`DivergenceError` naming the variable
    group that first produced a non-finite or runaway value.
    """
    yhat = state.aux_prediction(tensor)
    aux_factor = (
        ("user", "auxiliary user factors", state.aux_u),
        ("service", "auxiliary service factors", state.aux_s),
        ("time", "auxiliary time factors", state.aux_t),
    )
    for mode, group_name, arr in aux_factor:
        for r in range(model.rank):
            _sweep_factor(state, model, tensor, mode, r, yhat)
        _check_group(group_name, arr)
    aux_bias = (
        ("user", "auxiliary user biases", state.aux_a),
        ("service", "auxiliary service biases", state.aux_b),
        ("time", "auxiliary time biases", state.aux_c),
    )
    for mode, group_name, arr in aux_bias:
        _sweep_bias(state, model, tensor, mode, yhat)
        _check_group(group_name, arr)
    project_nonnegative(state, model)
    for name, arr in model.arrays():
        _check_group(f"projected {name}", arr)
    update_multipliers(state, model, config.eta)
    for group_name, _, _, mult, _ in state.groups(model):
        _check_group(f"multipliers for {group_name}", mult)
    obj = objective(model, tensor, loss=config.loss, gamma=config.gamma)
    return obj, state.max_primal_residual(model)


def train(tensor_train, tensor_val, config, log=None):
    """Fit a model, keeping the snapshot with the lowest validation MAE.

    Runs up to ``config.max_epochs`` epochs; validation MAE is computed
    after each epoch and the best snapshot retained (ties keep the
    earliest epoch). Training stops once ``patience`` consecutive epochs
    fail to improve the best-seen MAE by at least ``min_delta``
    (``patience=0`` therefore stops after the first epoch). On divergence
    the best snapshot so far is returned with the report flagged.

    The training and validation tensors must share dims and are expected
    to hold disjoint entry sets (not enforced). ``log``, when given, is a
    writable sink receiving one diagnostic line per epoch:
    ``epoch <n> obj <v> val_mae <v> max_primal_residual <v>``.
    """
    config.validate()
    if tensor_train.n_entries == 0:
        raise ValueError("training set is empty")
    if tensor_val.n_entries == 0:
        raise ValueError("validation set is empty")
    if tensor_train.dims != tensor_val.dims:
        raise ValueError(
            f"train dims {tensor_train.dims} != validation dims {tensor_val.dims}"
        )
    model = FactorModel.initialize(tensor_train.dims, config.rank, config.seed)
    state = AdmmState.initialize(model, tensor_train, config)
    skipped = {
        mode: int((tensor_train.slice_counts(mode) == 0).sum()) for mode in MODES
    }

    best_model = model.copy()
    best_val = math.inf
    best_epoch = 0
    progress_ref = math.inf
    stall = 0
    rows = []
    diverged = False

    for epoch in range(1, config.max_epochs + 1):
        try:
            obj, max_gap = train_epoch(state, model, tensor_train, config)
        except DivergenceError:
            diverged = True
            break
        val = mae(model, tensor_val)
        rows.append((epoch, obj, val, max_gap))
        if log is not None:
            log.write(
                f"epoch {epoch} obj {fmt_real(obj)} val_mae {fmt_real(val)}"
                f" max_primal_residual {fmt_real(max_gap)}\n"
            )
        if val < best_val:
            best_model, best_val, best_epoch = model.copy(), val, epoch
        if val < progress_ref - config.min_delta:
            progress_ref = val
            stall = 0
        else:
            stall += 1
        if stall >= config.patience:
            break

    report = EvalReport(
        epochs=rows,
        best_epoch=best_epoch,
        best_val_mae=best_val,
        skipped_entities=skipped,
        diverged=diverged,
    )
    return best_model, report
