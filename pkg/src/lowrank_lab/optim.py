"""Full-parameter optimizers: Adam, projected low-rank Adam/GD, and the
periodic merge-and-restart factor scheme, plus the harness proving the two
low-rank methods coincide.

The projected optimizer keeps a rank-r projector refreshed every T steps
from the SVD of the current full gradient and confines every weight update
to that subspace; the factor scheme accumulates b @ a into merged weights
every T steps and re-seeds b. With b re-seeded from the full-gradient SVD
(not at random), the two produce identical iterates in GD mode; the
equivalence harness checks that numerically, including the random-b
negative control that breaks it.

Sign convention: gradients here are descent gradients (W moves along
-eta * update); the scale factor alpha multiplies the projected-back
update. Adam bias correction uses the 1-based step count.
"""

from dataclasses import dataclass, replace

import numpy as np

from lowrank_lab.linalg import as_matrix, svd
from lowrank_lab.rng import Rng


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stab: float = 1e-8

    @classmethod
    def zeros(cls, shape, beta1: float = 0.9, beta2: float = 0.999, eps_stab: float = 1e-8):
        return cls(np.zeros(shape), np.zeros(shape), 0, beta1, beta2, eps_stab)


def adam_direction(grad, state: AdamState):
    """Bias-corrected Adam direction m_hat / (sqrt(v_hat) + eps).

    Returns (direction, new state); the caller applies W <- W - eta * dir.
    """
    g = np.asarray(grad, dtype=np.float64)
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    mhat = m / (1.0 - state.beta1 ** t)
    vhat = v / (1.0 - state.beta2 ** t)
    direction = mhat / (np.sqrt(vhat) + state.eps_stab)
    return direction, replace(state, m=m, v=v, t=t)


def adam_step(w, grad, state: AdamState, eta: float):
    """Standard Adam update on a weight matrix; returns (new w, new state)."""
    w = as_matrix(w, "w")
    g = as_matrix(grad, "grad")
    if g.shape != w.shape:
        raise ValueError("grad shape must match w")
    direction, state2 = adam_direction(g, state)
    return w - eta * direction, state2


@dataclass(frozen=True)
class GaloreState:
    """Projected-optimizer state: rank, refresh period, projector, inner Adam.

    ``inner`` None means GD mode (the projected gradient is used as-is).
    The projector lives on the left for m <= n and on the right otherwise;
    ``two_sided`` enables the P (...) Q^T form with an r x r compressed
    space instead.
    """

    rank: int
    refresh_period: int
    scale: float = 1.0
    projector: np.ndarray | None = None
    projector_right: np.ndarray | None = None
    inner: AdamState | None = None
    t: int = 0
    two_sided: bool = False

    @classmethod
    def fresh(cls, shape, rank, refresh_period, scale=1.0, adam=False,
              beta1=0.9, beta2=0.999, eps_stab=1e-8, two_sided=False):
        m, n = shape
        if rank > min(m, n):
            raise ValueError("rank exceeds matrix dimensions")
        if refresh_period < 1:
            raise ValueError("refresh period must be >= 1")
        if two_sided:
            inner_shape = (rank, rank)
        else:
            inner_shape = (rank, n) if m <= n else (m, rank)
        inner = AdamState.zeros(inner_shape, beta1, beta2, eps_stab) if adam else None
        return cls(rank=rank, refresh_period=refresh_period, scale=scale,
                   inner=inner, two_sided=two_sided)


def galore_step(w, grad, state: GaloreState, eta: float):
    """One projected step: refresh projector every T steps from the gradient
    SVD, compress the gradient, run the inner rule, project back, descend.

    The update is confined to the projector's span: with P the left
    projector, (I - P P^T)(W_new - W_old) vanishes to rounding.
    """
    w = as_matrix(w, "w")
    g = as_matrix(grad, "grad")
    if g.shape != w.shape:
        raise ValueError("grad shape must match w")
    m, n = w.shape
    r = state.rank
    left = m <= n

    p = state.projector
    q = state.projector_right
    if state.t % state.refresh_period == 0:
        res = svd(g)
        if state.two_sided:
            p = res.u[:, :r]
            q = res.v[:, :r]
        elif left:
            p = res.u[:, :r]
        else:
            p = res.v[:, :r]

    inner = state.inner
    if state.two_sided:
        compressed = p.T @ g @ q
    elif left:
        compressed = p.T @ g
    else:
        compressed = g @ p

    if inner is not None:
        direction, inner = adam_direction(compressed, inner)
    else:
        direction = compressed

    if state.two_sided:
        update = state.scale * (p @ direction @ q.T)
    elif left:
        update = state.scale * (p @ direction)
    else:
        update = state.scale * (direction @ p.T)

    new_state = replace(state, projector=p, projector_right=q, inner=inner, t=state.t + 1)
    return w - eta * update, new_state


@dataclass(frozen=True)
class RelorState:
    """Merge-and-restart factor state: accumulated weights plus b @ a.

    Between resets b is frozen and only a trains; at a reset b @ a is folded
    into ``merged``, b is re-seeded (gradient SVD or random), and a returns
    to zero, which leaves the effective weight unchanged at the reset
    itself.
    """

    merged: np.ndarray
    b: np.ndarray
    a: np.ndarray
    reset_period: int
    inner: AdamState | None = None
    b_init: str = "gradient"  # or "random"

    def effective(self) -> np.ndarray:
        return self.merged + self.b @ self.a

    @classmethod
    def fresh(cls, w0, rank, reset_period, adam=False, b_init="gradient",
              beta1=0.9, beta2=0.999, eps_stab=1e-8):
        w0 = as_matrix(w0, "w0")
        m, n = w0.shape
        if b_init not in ("gradient", "random"):
            raise ValueError("b_init must be 'gradient' or 'random'")
        inner = AdamState.zeros((rank, n), beta1, beta2, eps_stab) if adam else None
        return cls(merged=w0.copy(), b=np.zeros((m, rank)), a=np.zeros((rank, n)),
                   reset_period=reset_period, inner=inner, b_init=b_init)


def relora_step(state: RelorState, loss_grad_w, eta: float, t: int,
                rng: Rng | None = None) -> RelorState:
    """One step of the merge-and-restart scheme at global step ``t``.

    ``loss_grad_w`` maps an effective weight to the loss gradient at that
    weight. At t mod T = 0 the merge happens before the gradient is taken,
    so the full gradient is evaluated at the current effective weight; b is
    then re-seeded (top-r left singular vectors of that gradient, or random
    Gaussian when b_init = "random") and a restarts from zero. Every step,
    including the reset step, ends with a chain-rule update of a:
    a <- a - eta * dir(b^T grad). Adam moments on a persist across resets.
    """
    merged, b, a = state.merged, state.b, state.a
    if t % state.reset_period == 0:
        merged = merged + b @ a
        g = as_matrix(loss_grad_w(merged), "grad")
        if state.b_init == "gradient":
            b = svd(g).u[:, : b.shape[1]]
        else:
            if rng is None:
                raise ValueError("random b re-seeding needs an rng")
            b = rng.normals(b.shape)
        a = np.zeros_like(a)
    else:
        g = as_matrix(loss_grad_w(merged + b @ a), "grad")
    ga = b.T @ g
    inner = state.inner
    if inner is not None:
        direction, inner = adam_direction(ga, inner)
    else:
        direction = ga
    a = a - eta * direction
    return replace(state, merged=merged, b=b, a=a, inner=inner)


@dataclass
class EquivalenceResult:
    max_deviation: float
    max_span_angle: float
    control_deviation: float | None = None


def verify_galore_relora_equivalence(phi, w0, r: int, reset_period: int, eta: float,
                                     steps: int, adam: bool = False,
                                     control_rng: Rng | None = None) -> EquivalenceResult:
    """Run both optimizers on the quadratic 1/2 ||W - phi||_F^2 from the same
    start and measure how far apart the iterates get.

    Also tracks the largest principal angle between the projector span and
    the factor span at each step. When ``control_rng`` is given, a third run
    re-seeds b at random instead of from the gradient SVD; its deviation
    from the projected optimizer is returned as ``control_deviation`` (the
    equivalence genuinely needs the gradient re-seeding, so this is large).
    """
    from lowrank_lab.linalg import max_principal_angle_sin, orthonormal_columns

    phi = as_matrix(phi, "phi")
    w0 = as_matrix(w0, "w0")

    def grad_at(w):
        return w - phi

    gal_w = w0.copy()
    gal_state = GaloreState.fresh(w0.shape, r, reset_period, adam=adam)
    rel_state = RelorState.fresh(w0, r, reset_period, adam=adam)
    ctl_state = None
    if control_rng is not None:
        ctl_state = RelorState.fresh(w0, r, reset_period, adam=adam, b_init="random")

    max_dev = 0.0
    max_angle = 0.0
    max_ctl = 0.0
    for t in range(steps):
        gal_w, gal_state = galore_step(gal_w, grad_at(gal_w), gal_state, eta)
        rel_state = relora_step(rel_state, grad_at, eta, t)
        if ctl_state is not None:
            ctl_state = relora_step(ctl_state, grad_at, eta, t, rng=control_rng)
            max_ctl = max(max_ctl, float(np.max(np.abs(gal_w - ctl_state.effective()))))
        max_dev = max(max_dev, float(np.max(np.abs(gal_w - rel_state.effective()))))
        angle = max_principal_angle_sin(gal_state.projector, orthonormal_columns(rel_state.b))
        max_angle = max(max_angle, angle)
    return EquivalenceResult(
        max_deviation=max_dev,
        max_span_angle=max_angle,
        control_deviation=(max_ctl if ctl_state is not None else None),
    )


def memory_report(shapes, rank: int) -> list:
    """Optimizer-state float counts: full Adam (2 m n) vs projected
    (2 r max(m,n) moments + min(m,n) r projector), per layer."""
    rows = []
    for i, (m, n) in enumerate(shapes, start=1):
        full = 2 * m * n
        if m <= n:
            galore = 2 * n * rank + m * rank
        else:
            galore = 2 * m * rank + n * rank
        rows.append({
            "layer": i,
            "full_adam_floats": full,
            "galore_floats": galore,
            "ratio": galore / full,
        })
    return rows
