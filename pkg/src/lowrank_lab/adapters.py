"""Low-rank adapter families over frozen base weights.

Three parameterizations of the trainable update on top of a frozen matrix:
the two-factor form base + B A (with B zero-initialized and A Gaussian of
variance 1/d), the same form with a discrepant learning rate gamma on B,
and a depth-3 form base + C B A whose thin outer factors are seeded from
the singular subspace of the gradient at initialization and trained with a
slower rate. Steps are pure functions: adapter in, adapter out.
"""

from dataclasses import dataclass, replace

import numpy as np

from lowrank_lab.linalg import as_matrix, svd
from lowrank_lab.rng import Rng

VARIANTS = ("vanilla", "plus", "deep")


@dataclass(frozen=True)
class LoraAdapter:
    """Frozen base plus a trainable low-rank update.

    For the vanilla/plus variants the update is b @ a with b: m x r and
    a: r x n. For the deep variant it is c @ b @ a with c: m x r, b: r x r,
    a: r x n; the outer factors c and a move at gamma_outer times the inner
    rate.
    """

    base: np.ndarray
    b: np.ndarray
    a: np.ndarray
    rank: int
    variant: str = "vanilla"
    gamma: float = 1.0
    c: np.ndarray | None = None
    gamma_outer: float = 1e-2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant == "deep" and self.c is None:
            raise ValueError("deep variant needs the outer factor c")

    def delta(self) -> np.ndarray:
        if self.variant == "deep":
            return self.c @ self.b @ self.a
        return self.b @ self.a

    def effective_weight(self) -> np.ndarray:
        return self.base + self.delta()


def lora_init(base, r: int, rng: Rng, gamma: float = 1.0, variant: str = "vanilla") -> LoraAdapter:
    """Standard two-factor init: b = 0 exactly, a ~ N(0, 1/n) entrywise.

    The zero factor makes the effective weight equal the base at step 0 and
    freezes ``a`` for exactly one step (its gradient b^T grad vanishes).
    """
    base = as_matrix(base, "base")
    m, n = base.shape
    if not 1 <= r < min(m, n):
        raise ValueError("rank must satisfy 1 <= r < min(base dims)")
    if variant not in ("vanilla", "plus"):
        raise ValueError("lora_init builds the vanilla/plus variants")
    b = np.zeros((m, r))
    a = rng.normals((r, n)) / np.sqrt(n)
    return LoraAdapter(base=base, b=b, a=a, rank=r, variant=variant, gamma=gamma)


def deep_lora_init(
    base,
    r: int,
    grad_at_init,
    rng: Rng | None = None,
    eps: float = 1e-3,
    gamma_outer: float = 1e-2,
    subspace: str = "top",
) -> LoraAdapter:
    """Depth-3 adapter seeded from the gradient's singular subspace.

    c carries r left singular vectors of ``grad_at_init`` scaled by eps, a
    the matching right singular vectors transposed and scaled by eps, and
    b = eps * I_r, so the initial update has Frobenius norm eps^3 sqrt(r).
    ``subspace`` selects which end of the spectrum seeds the outer factors;
    the default "top" places the adapter in the directions the first
    gradient step actually moves, which is what lets the depth-3 form both
    fit the task and keep unused directions at the eps^3 floor. ("bottom"
    selects the complementary, update-free end; with an exactly low-rank
    gradient that choice receives zero gradient and never trains.) ``rng``
    is accepted for interface symmetry; the construction is deterministic.
    """
    base = as_matrix(base, "base")
    g = as_matrix(grad_at_init, "grad_at_init")
    m, n = base.shape
    if r > min(m, n):
        raise ValueError("rank exceeds matrix dimensions")
    if subspace not in ("top", "bottom"):
        raise ValueError("subspace must be 'top' or 'bottom'")
    res = svd(g)
    if subspace == "top":
        cols = np.arange(r)
    else:
        k = res.s.shape[0]
        cols = np.arange(k - r, k)
    c = eps * res.u[:, cols]
    a = eps * res.v[:, cols].T
    b = eps * np.eye(r)
    return LoraAdapter(
        base=base, b=b, a=a, rank=r, variant="deep", c=c, gamma_outer=gamma_outer
    )


def lora_grads(adapter: LoraAdapter, grad_w):
    """Factor gradients by the chain rule from the effective-weight gradient."""
    g = as_matrix(grad_w, "grad_w")
    if g.shape != adapter.base.shape:
        raise ValueError("grad_w shape must match the base weight")
    if adapter.variant == "deep":
        gc = g @ adapter.a.T @ adapter.b.T
        gb = adapter.c.T @ g @ adapter.a.T
        ga = adapter.b.T @ adapter.c.T @ g
        return {"c": gc, "b": gb, "a": ga}
    gb = g @ adapter.a.T
    ga = adapter.b.T @ g
    return {"b": gb, "a": ga}


def lora_step(adapter: LoraAdapter, grad_w, eta: float) -> LoraAdapter:
    """One simultaneous gradient step on the adapter factors.

    vanilla: b and a both step with eta. plus: b steps with gamma * eta.
    deep: the inner b steps with eta, the outer c and a with
    gamma_outer * eta.
    """
    grads = lora_grads(adapter, grad_w)
    if adapter.variant == "deep":
        return replace(
            adapter,
            c=adapter.c - adapter.gamma_outer * eta * grads["c"],
            b=adapter.b - eta * grads["b"],
            a=adapter.a - adapter.gamma_outer * eta * grads["a"],
        )
    eta_b = adapter.gamma * eta if adapter.variant == "plus" else eta
    return replace(
        adapter,
        b=adapter.b - eta_b * grads["b"],
        a=adapter.a - eta * grads["a"],
    )


def train_quadratic(adapter: LoraAdapter, target, eta: float, steps: int,
                    optimizer: str = "gd"):
    """Train the adapter on the quadratic loss 1/2 ||W_eff - target||_F^2.

    Returns (final adapter, loss history). This synthetic task keeps the
    update-rule math of real fine-tuning while staying at desk scale.
    ``optimizer`` is "gd" (lora_step) or "adam" (per-factor Adam with the
    same discrepant rate multipliers; the depth-3 variant needs this, since
    under plain GD its eps-scaled outer factors make the inner gradient
    eps^2-small and training stalls).
    """
    target = as_matrix(target, "target")
    if optimizer == "gd":
        stepper = _gd_stepper(eta)
    elif optimizer == "adam":
        stepper = _adam_stepper(adapter, eta)
    else:
        raise ValueError("optimizer must be 'gd' or 'adam'")
    losses = []
    for _ in range(steps):
        diff = adapter.effective_weight() - target
        losses.append(0.5 * float(np.sum(diff * diff)))
        adapter = stepper(adapter, diff)
    diff = adapter.effective_weight() - target
    losses.append(0.5 * float(np.sum(diff * diff)))
    return adapter, losses


def _gd_stepper(eta):
    def step(adapter, grad_w):
        return lora_step(adapter, grad_w, eta)

    return step


def _adam_stepper(adapter, eta):
    from lowrank_lab.optim import AdamState, adam_direction

    states = {"b": AdamState.zeros(adapter.b.shape), "a": AdamState.zeros(adapter.a.shape)}
    if adapter.variant == "deep":
        states["c"] = AdamState.zeros(adapter.c.shape)

    def step(ad, grad_w):
        grads = lora_grads(ad, grad_w)
        dirs = {}
        for key, g in grads.items():
            dirs[key], states[key] = adam_direction(g, states[key])
        if ad.variant == "deep":
            return replace(
                ad,
                c=ad.c - ad.gamma_outer * eta * dirs["c"],
                b=ad.b - eta * dirs["b"],
                a=ad.a - ad.gamma_outer * eta * dirs["a"],
            )
        eta_b = ad.gamma * eta if ad.variant == "plus" else eta
        return replace(ad, b=ad.b - eta_b * dirs["b"], a=ad.a - eta * dirs["a"])

    return step
