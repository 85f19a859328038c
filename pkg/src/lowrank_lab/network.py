"""Deep linear networks and tiny MLPs with manual gradients.

Implements full-batch gradient descent with multiplicative weight decay on
the factorization objective  1/2 ||W_L ... W_1 - Phi||_F^2, per-iteration
spectrum tracking, and verification of the invariant-subspace decomposition:
under a rank-r target and eps-scaled orthogonal initialization, each weight
matrix keeps d - 2r singular values equal to a shared value rho_l(t) that
follows  rho_l(t) = rho_l(t-1) * (1 - eta*lambda - eta * prod_{k!=l}
rho_k(t-1)^2),  with left/right singular subspaces frozen at their t = 0
positions and aligned across adjacent layers.

For a wide target (k < d rows), the decomposition covers layers 1..L-1 and
the shared value is exactly eps_l * (1 - eta*lambda)^t.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from lowrank_lab.linalg import (
    as_matrix,
    frob,
    max_principal_angle,
    nullspace,
    numerical_rank,
    orthonormal_columns,
    svd,
)
from lowrank_lab.report import CheckResult
from lowrank_lab.rng import Rng


class DivergenceError(RuntimeError):
    """Training loss exceeded the divergence guard (1e12)."""


class RankAssumptionError(RuntimeError):
    """A nullspace-intersection came out smaller than the theory requires."""


@dataclass
class DeepLinearNet:
    """Ordered layer weights W_1 .. W_L plus activation/dropout settings.

    weights[i] is W_{i+1} with shape d_{i+1} x d_i; adjacent shapes must
    chain. With identity activation and no dropout the network is the plain
    matrix product W_L ... W_1.
    """

    weights: list
    activation: str = "identity"
    dropout_keep: float | None = None

    def __post_init__(self):
        if not self.weights:
            raise ValueError("need at least one layer")
        self.weights = [as_matrix(w, f"W_{i+1}") for i, w in enumerate(self.weights)]
        for i in range(len(self.weights) - 1):
            if self.weights[i + 1].shape[1] != self.weights[i].shape[0]:
                raise ValueError(f"layer {i+2} input dim != layer {i+1} output dim")
        if self.activation not in ("identity", "relu"):
            raise ValueError("activation must be 'identity' or 'relu'")
        if self.dropout_keep is not None and not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must lie in (0, 1]")

    @property
    def depth(self) -> int:
        return len(self.weights)

    def product(self) -> np.ndarray:
        p = self.weights[0]
        for w in self.weights[1:]:
            p = w @ p
        return p

    def copy(self) -> "DeepLinearNet":
        return DeepLinearNet(
            [w.copy() for w in self.weights], self.activation, self.dropout_keep
        )


@dataclass
class TrainConfig:
    eta: float
    lam: float = 0.0
    steps: int = 0
    record_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")


@dataclass
class TargetSpec:
    """Rank-r synthetic target Phi (k x d) = (k x r)(r x d) Gaussians / sqrt(r)."""

    d: int
    k: int
    r: int
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.r <= min(self.k, self.d):
            raise ValueError("need 1 <= r <= min(k, d)")
        if self.k > self.d:
            raise ValueError("k must not exceed d")

    def build(self) -> np.ndarray:
        rng = Rng(self.seed)
        phi = (rng.normals((self.k, self.r)) @ rng.normals((self.r, self.d))) / np.sqrt(self.r)
        if numerical_rank(phi) != self.r:
            raise RankAssumptionError("generated target does not have the requested rank")
        return phi


def init_scaled_orthogonal_net(d: int, L: int, eps, rng: Rng, k: int | None = None) -> DeepLinearNet:
    """L-layer net of eps_l-scaled orthogonal d x d weights.

    When ``k`` is given (wide-target setting, k < d) the last layer is the
    first k rows of a scaled orthogonal matrix, so W_L W_L^T = eps^2 I_k.
    """
    from lowrank_lab.linalg import random_scaled_orthogonal

    eps_list = [float(eps)] * L if np.isscalar(eps) else [float(e) for e in eps]
    if len(eps_list) != L:
        raise ValueError("need one eps per layer")
    weights = []
    for l in range(L):
        w = random_scaled_orthogonal(d, eps_list[l], rng)
        if l == L - 1 and k is not None and k != d:
            w = w[:k, :]
        weights.append(w)
    return DeepLinearNet(weights)


def dln_loss(net: DeepLinearNet, phi) -> float:
    """Data term 1/2 ||W_L ... W_1 - Phi||_F^2 (decay lives in the update)."""
    phi = as_matrix(phi, "phi")
    if net.activation != "identity":
        raise ValueError("dln_loss requires identity activation")
    p = net.product()
    if p.shape != phi.shape:
        raise ValueError(f"product shape {p.shape} != target shape {phi.shape}")
    return 0.5 * frob(p - phi) ** 2


def dln_gradients(net: DeepLinearNet, phi) -> list:
    """Analytic per-layer gradients Q_l^T (W_L...W_1 - Phi) R_l^T."""
    phi = as_matrix(phi, "phi")
    if net.activation != "identity":
        raise ValueError("dln_gradients requires identity activation")
    ws = net.weights
    L = len(ws)
    prefixes = [np.eye(ws[0].shape[1])]  # R_l = W_{l-1} ... W_1
    for i in range(1, L):
        prefixes.append(ws[i - 1] @ prefixes[i - 1])
    suffixes = [None] * L  # Q_l = W_L ... W_{l+1}
    suffixes[L - 1] = np.eye(ws[L - 1].shape[0])
    for i in range(L - 2, -1, -1):
        suffixes[i] = suffixes[i + 1] @ ws[i + 1]
    residual = ws[L - 1] @ prefixes[L - 1] - phi
    if residual.shape != phi.shape:
        raise ValueError("dimension mismatch between network and target")
    return [suffixes[i].T @ residual @ prefixes[i].T for i in range(L)]


def gd_step_weights(weights, grads, eta: float, lam: float) -> list:
    """One descent step W <- (1 - eta*lambda) W - eta * grad, exactly."""
    return [(1.0 - eta * lam) * w - eta * g for w, g in zip(weights, grads)]


# ---------------------------------------------------------------------------
# spectrum tracking


@dataclass
class SpectrumRecord:
    layer: int  # 1-based
    iteration: int
    sing_vals: np.ndarray
    angle_left: float | None = None
    angle_right: float | None = None
    align: float | None = None
    rho_pred: float | None = None
    block: np.ndarray | None = None  # indices of the invariant block


@dataclass
class SpectrumTrace:
    """Per-iteration singular values and subspace-angle records.

    CSV schema: header ``layer,iter,kind,index,value`` with kinds sv,
    angle_left, angle_right, align, rho_pred (plus act_sv for activation
    spectra written by the runner); rows sorted by (layer, iter, kind,
    index).
    """

    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (iteration, [W_l copies])
    tracked_rank: int | None = None

    def iterations(self) -> list:
        return sorted({r.iteration for r in self.records})

    def rows(self):
        out = []
        for rec in self.records:
            for i, v in enumerate(rec.sing_vals):
                out.append((rec.layer, rec.iteration, "sv", i, float(v)))
            if rec.angle_left is not None:
                out.append((rec.layer, rec.iteration, "angle_left", 0, rec.angle_left))
            if rec.angle_right is not None:
                out.append((rec.layer, rec.iteration, "angle_right", 0, rec.angle_right))
            if rec.align is not None:
                out.append((rec.layer, rec.iteration, "align", 0, rec.align))
            if rec.rho_pred is not None:
                out.append((rec.layer, rec.iteration, "rho_pred", 0, rec.rho_pred))
        out.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
        return out

    def write_csv(self, path, extra_rows=()):
        rows = list(self.rows()) + list(extra_rows)
        rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["layer", "iter", "kind", "index", "value"])
            for layer, it, kind, idx, value in rows:
                w.writerow([layer, it, kind, idx, f"{value:.17g}"])


def invariant_block(res, r: int, v_ref: np.ndarray, u_ref: np.ndarray) -> np.ndarray:
    """Indices of the d-2r singular triples lying in the invariant subspaces.

    Identified by projection score onto the t = 0 reference rather than by
    sorted position: active singular values can cross the shared value
    mid-training, which would scramble a position-based cut.
    """
    d = res.v.shape[1]
    m = d - 2 * r if v_ref is None else v_ref.shape[1]
    score = np.linalg.norm(v_ref.T @ res.v, axis=0) ** 2
    score += np.linalg.norm(u_ref.T @ res.u[:, : res.v.shape[1]], axis=0) ** 2
    idx = np.argsort(-score, kind="stable")[:m]
    return np.sort(idx)


def invariant_reference(weights, phi, wide: bool):
    """Theoretical invariant bases (U_{l,2}, V_{l,2}) from the t = 0 weights.

    Square targets: V_{1,2} spans N(Phi) intersected with N(Phi^T W_L...W_1),
    realized as the nullspace of the vertically stacked pair. Wide targets
    (k < d): the second condition becomes W_L...W_1 v = 0 and the last layer
    is excluded. Higher layers follow by the alignment V_{l+1,2} = U_{l,2}
    with U_{l,2} = orthonormalized W_l V_{l,2}.
    """
    phi = as_matrix(phi, "phi")
    L = len(weights)
    chain = weights[0]
    for w in weights[1:]:
        chain = w @ chain  # W_L ... W_1
    if wide:
        stacked = np.vstack([phi, chain])
    else:
        stacked = np.vstack([phi, phi.T @ chain])
    v = nullspace(stacked, tol=1e-9)
    refs = {}
    last = L - 1 if wide else L
    for l in range(1, last + 1):
        u = orthonormal_columns(weights[l - 1] @ v)
        refs[l] = (u, v)
        v = u
    return refs


def construct_null_intersection(phi, w1, w2):
    """Two-layer invariant-subspace construction.

    v_basis spans N(Phi) intersected with N(Phi^T W_2 W_1); u_basis is the
    orthonormalized image W_1 v_basis. Raises RankAssumptionError when the
    intersection is smaller than d - 2r.
    """
    phi = as_matrix(phi, "phi")
    w1 = as_matrix(w1, "w1")
    w2 = as_matrix(w2, "w2")
    d = w1.shape[1]
    r = numerical_rank(phi) if phi.any() else 0
    stacked = np.vstack([phi, phi.T @ w2 @ w1])
    v = nullspace(stacked, tol=1e-9)
    if v.shape[1] < d - 2 * r:
        raise RankAssumptionError(
            f"nullspace intersection has {v.shape[1]} dims, expected >= {d - 2 * r}"
        )
    u = orthonormal_columns(w1 @ v)
    return u, v


def _estimate_eps(w: np.ndarray) -> float:
    rows = w.shape[0]
    return float(np.sqrt(np.trace(w @ w.T) / rows))


def _simulate_rho(eps_list, eta, lam, wide: bool, t_max: int) -> np.ndarray:
    """rho_l(t) table, shape (t_max + 1, n_layers)."""
    n = len(eps_list)
    out = np.empty((t_max + 1, n))
    rho = np.array(eps_list, dtype=np.float64)
    out[0] = rho
    for t in range(1, t_max + 1):
        if wide:
            rho = rho * (1.0 - eta * lam)
        else:
            prods = np.array(
                [np.prod(np.delete(rho, l) ** 2) for l in range(n)]
            )
            rho = rho * (1.0 - eta * lam - eta * prods)
        out[t] = rho
    return out


def train_gd(net: DeepLinearNet, phi, cfg: TrainConfig, track: int | None = None):
    """Full-batch GD  W_l <- (1 - eta*lambda) W_l - eta * grad_l.

    With ``track`` set to the target rank r, every recorded iteration also
    stores per-layer spectra, the drift of the bottom-(d-2r) singular
    subspaces against their theoretical t = 0 position, cross-layer
    alignment, and the shared-value prediction. Records land at iteration 0,
    every ``record_every`` steps, and the final step. Subspace angles at
    t = 0 are 0 by definition (the reference is the t = 0 construction; the
    fully degenerate spectrum makes the SVD blind to the split there).

    Returns (trained net, SpectrumTrace). Raises DivergenceError when the
    loss passes 1e12.
    """
    phi = as_matrix(phi, "phi")
    if net.activation != "identity":
        raise ValueError("train_gd requires identity activation")
    weights = [w.copy() for w in net.weights]
    L = len(weights)
    d = weights[0].shape[1]
    k = phi.shape[0]
    wide = k < d

    trace = SpectrumTrace(tracked_rank=track)
    refs = None
    rho_table = None
    if track is not None:
        refs = invariant_reference(weights, phi, wide)
        eps_list = [_estimate_eps(w) for w in weights]
        rho_table = _simulate_rho(
            eps_list[: L - 1] if wide else eps_list, cfg.eta, cfg.lam, wide, cfg.steps
        )

    def record(t):
        trace.snapshots.append((t, [w.copy() for w in weights]))
        results = {}
        for l in range(1, L + 1):
            res = svd(weights[l - 1])
            rec = SpectrumRecord(layer=l, iteration=t, sing_vals=res.s.copy())
            if refs is not None and l in refs:
                u_ref, v_ref = refs[l]
                if t == 0:
                    rec.angle_left = 0.0
                    rec.angle_right = 0.0
                    rec.block = np.arange(2 * track, d)
                else:
                    idx = invariant_block(res, track, v_ref, u_ref)
                    rec.block = idx
                    rec.angle_right = max_principal_angle(res.v[:, idx], v_ref)
                    rec.angle_left = max_principal_angle(res.u[:, idx], u_ref)
                rec.rho_pred = float(rho_table[t, l - 1])
            results[l] = (res, rec)
            trace.records.append(rec)
        if refs is not None:
            seq = sorted(refs)
            for l in seq[:-1]:
                res_l, rec_l = results[l]
                res_n, rec_n = results[l + 1]
                if t == 0:
                    rec_l.align = 0.0
                else:
                    bl = rec_l.block
                    bn = rec_n.block
                    rec_l.align = max_principal_angle(res_n.v[:, bn], res_l.u[:, bl])

    loss0 = dln_loss(DeepLinearNet(weights), phi)
    losses = [loss0]
    record(0)
    for t in range(1, cfg.steps + 1):
        grads = dln_gradients(DeepLinearNet(weights), phi)
        weights = gd_step_weights(weights, grads, cfg.eta, cfg.lam)
        loss = dln_loss(DeepLinearNet(weights), phi)
        losses.append(loss)
        if loss > 1e12:
            raise DivergenceError(f"loss {loss:.3e} at step {t}")
        if t == 10 and losses[10] > losses[0]:
            warnings.warn("loss increased over the first 10 steps; eta may be too large")
        if t % cfg.record_every == 0 or t == cfg.steps:
            record(t)
    out = DeepLinearNet(weights, net.activation, net.dropout_keep)
    return out, trace


@dataclass
class VerificationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_rows(self):
        return [c.to_dict() for c in self.checks]


def verify_invariant_subspaces(
    trace: SpectrumTrace,
    weights_history,
    r: int,
    eps,
    eta: float,
    lam: float,
    wide: bool = False,
    spread_tol: float = 1e-8,
    drift_tol: float = 1e-6,
    align_tol: float = 1e-5,
    rho_tol: float = 1e-8,
) -> VerificationReport:
    """Check the four decomposition claims along a recorded trajectory.

    Per layer: (a) the bottom d-2r singular values collapse to one shared
    value (spread); (b) the bottom singular subspaces stay at their t = 0
    position (drift, both sides); (c) the right subspace of layer l+1
    matches the left subspace of layer l (alignment); (d) the shared value
    follows the recursion exactly (and, for wide targets, the closed form
    eps_l (1 - eta*lambda)^t, checked at rho_tol).
    """
    if not weights_history:
        raise ValueError("need at least one snapshot")
    weights0 = weights_history[0][1]
    L = len(weights0)
    d = weights0[0].shape[1]
    refs_layers = L - 1 if wide else L

    eps_list = [float(eps)] * L if np.isscalar(eps) else [float(e) for e in eps]
    t_max = max(t for t, _ in weights_history)
    rho_table = _simulate_rho(
        eps_list[: L - 1] if wide else eps_list, eta, lam, wide, t_max
    )

    by_layer = {l: {} for l in range(1, L + 1)}
    for rec in trace.records:
        by_layer[rec.layer][rec.iteration] = rec

    spread_max = np.zeros(refs_layers)
    drift_left = np.zeros(refs_layers)
    drift_right = np.zeros(refs_layers)
    align_max = np.zeros(max(refs_layers - 1, 0))
    rho_gap = np.zeros(refs_layers)

    for l in range(1, refs_layers + 1):
        for t, rec in sorted(by_layer[l].items()):
            idx = rec.block if rec.block is not None else np.arange(2 * r, d)
            block_vals = rec.sing_vals[idx]
            spread = float(block_vals.max() - block_vals.min())
            spread_max[l - 1] = max(spread_max[l - 1], spread)
            if rec.angle_left is not None:
                drift_left[l - 1] = max(drift_left[l - 1], rec.angle_left)
            if rec.angle_right is not None:
                drift_right[l - 1] = max(drift_right[l - 1], rec.angle_right)
            measured = float(np.median(block_vals))
            rho_gap[l - 1] = max(rho_gap[l - 1], abs(measured - rho_table[t, l - 1]))
            if rec.align is not None and l <= refs_layers - 1:
                align_max[l - 1] = max(align_max[l - 1], rec.align)

    checks = []
    for l in range(1, refs_layers + 1):
        checks.append(CheckResult.bound(f"theorem2.spread.layer{l}", spread_max[l - 1], spread_tol))
    for l in range(1, refs_layers + 1):
        checks.append(CheckResult.bound(f"theorem2.drift_left.layer{l}", drift_left[l - 1], drift_tol))
        checks.append(CheckResult.bound(f"theorem2.drift_right.layer{l}", drift_right[l - 1], drift_tol))
    for l in range(1, refs_layers):
        checks.append(CheckResult.bound(f"theorem2.align.layer{l}", align_max[l - 1], align_tol))
    for l in range(1, refs_layers + 1):
        name = "rho_closed_form" if wide else "rho_recursion"
        checks.append(CheckResult.bound(f"theorem2.{name}.layer{l}", rho_gap[l - 1], rho_tol))
    return VerificationReport(checks)


# ---------------------------------------------------------------------------
# small MLPs


def mlp_forward_backward(net: DeepLinearNet, x, y, loss: str = "mse", masks=None):
    """Forward/backward pass for the MLP  W_L act(W_{L-1} act(... W_1 x)).

    ``x`` is d x n (columns are samples), ``y`` is k x n. Dropout masks, if
    given, are 0/1 arrays shaped like each hidden activation and are applied
    after the activation with 1/mu rescaling. Returns (loss value, per-layer
    gradients, activations [a_1 .. a_L] where a_L is the network output).
    """
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    ws = net.weights
    L = len(ws)
    mu = net.dropout_keep if net.dropout_keep is not None else 1.0
    if masks is not None:
        if net.dropout_keep is None:
            raise ValueError("masks given but dropout_keep is not set")
        if len(masks) != L - 1:
            raise ValueError("need one mask per hidden layer")

    acts = []
    pre = []
    a = x
    for i in range(L):
        z = ws[i] @ a
        pre.append(z)
        if i < L - 1:
            h = np.maximum(z, 0.0) if net.activation == "relu" else z
            if masks is not None:
                if masks[i].shape != h.shape:
                    raise ValueError("mask shape mismatch")
                h = h * masks[i] / mu
            a = h
        else:
            a = z
        acts.append(a)

    out = acts[-1]
    if out.shape != y.shape:
        raise ValueError("output/target shape mismatch")
    if loss == "mse":
        diff = out - y
        value = 0.5 * float(np.sum(diff * diff))
        delta = diff
    elif loss == "cross_entropy":
        zmax = out.max(axis=0, keepdims=True)
        ez = np.exp(out - zmax)
        denom = ez.sum(axis=0, keepdims=True)
        logp = (out - zmax) - np.log(denom)
        value = -float(np.sum(y * logp))
        delta = ez / denom - y
    else:
        raise ValueError("loss must be 'mse' or 'cross_entropy'")

    grads = [None] * L
    for i in range(L - 1, -1, -1):
        below = acts[i - 1] if i > 0 else x
        grads[i] = delta @ below.T
        if i > 0:
            delta = ws[i].T @ delta
            if masks is not None:
                delta = delta * masks[i - 1] / mu
            if net.activation == "relu":
                delta = delta * (pre[i - 1] > 0.0)
    return value, grads, acts
