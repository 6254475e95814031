"""Discrete-time Langevin chains over finite-sum potentials.

Variants: full-gradient (lmc), plain minibatch (sgld), anchored
variance-reduced (svrg_ld), and recursive variance-reduced (sarah_ld), plus
the annealed runner that lowers the step size and raises the inverse
temperature once per epoch.

RNG discipline: every chain owns two Philox streams derived from
``SeedSequence((seed, replicate, 0|1))`` - stream 0 for the per-step Gaussian
noise, stream 1 for index subsets.  One standard-normal d-vector is drawn per
step, before any subset.  Keeping the streams separate means variants that
consume different numbers of subset draws still see the same noise sequence,
which is what makes the B = n, m = 1 reduction to lmc exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .potentials import FiniteSumObjective, NumericalDomainError

__all__ = [
    "VARIANTS",
    "SamplerConfig",
    "AnnealSchedule",
    "RunTrace",
    "DivergedError",
    "chain_rngs",
    "sample_index_set",
    "step_lmc",
    "step_sgld",
    "run_lmc",
    "run_sgld",
    "run_svrg_ld",
    "run_sarah_ld",
    "run_annealed",
    "run_chain",
    "grad_evals_at",
    "EnsembleResult",
    "run_ensemble",
]

VARIANTS = ("lmc", "sgld", "svrg_ld", "sarah_ld")


class DivergedError(RuntimeError):
    """A chain produced a non-finite iterate."""

    def __init__(self, step: int, msg: str | None = None):
        super().__init__(msg or f"non-finite iterate at step {step}")
        self.step = step


@dataclass(frozen=True)
class SamplerConfig:
    variant: str
    eta: float
    gamma: float = 1.0
    B: int = 1
    m: int = 1
    K: int = 1
    seed: int = 0
    store_every: int = 1
    burn_in: int = 0
    debug_checks: bool = False

    def validate(self, n: int) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.eta <= 0:
            raise ValueError("step size eta must be > 0")
        if self.gamma < 1.0:
            raise ValueError(f"inverse temperature gamma must be >= 1, got {self.gamma}")
        if not 1 <= self.B <= n:
            raise ValueError(f"batch size must satisfy 1 <= B <= n={n}, got {self.B}")
        if self.m < 1:
            raise ValueError("epoch length m must be >= 1")
        if self.K < 1:
            raise ValueError("total steps K must be >= 1")
        if self.variant in ("svrg_ld", "sarah_ld") and self.K % self.m != 0:
            raise ValueError(
                f"epoch length m={self.m} must divide K={self.K}; partial epochs are rejected"
            )
        if self.store_every < 1:
            raise ValueError("store_every must be >= 1")
        if not 0 <= self.burn_in <= self.K:
            raise ValueError("burn_in must lie in [0, K]")


@dataclass(frozen=True)
class AnnealSchedule:
    """Per-epoch schedule eta_s = eta_bar (s + sigma)^(-1/mu),
    gamma_s = gamma_bar log(g (s + sigma)^(1/mu))."""

    eta_bar: float
    gamma_bar: float
    sigma: float
    mu: float
    g: float

    def __post_init__(self) -> None:
        if self.eta_bar <= 0 or self.gamma_bar <= 0:
            raise ValueError("eta_bar and gamma_bar must be > 0")
        if self.mu <= 3.0:
            raise ValueError(f"need mu > 3, got {self.mu}")
        if self.g < math.e:
            raise ValueError(f"need g >= e, got {self.g}")
        if self.sigma < 3.0:
            raise ValueError(f"need sigma >= 3, got {self.sigma}")

    def eta(self, s: int) -> float:
        return self.eta_bar * (s + self.sigma) ** (-1.0 / self.mu)

    def gamma(self, s: int) -> float:
        return self.gamma_bar * (math.log(self.g) + math.log(s + self.sigma) / self.mu)


@dataclass
class RunTrace:
    """Iterate history of one chain at the stored (possibly thinned) steps."""

    variant: str
    steps: np.ndarray          # stored step indices, starting at 0
    iterates: np.ndarray       # (len(steps), d)
    grad_evals: np.ndarray     # cumulative component-gradient count at each stored step
    etas: np.ndarray           # step size in effect entering each stored step
    gammas: np.ndarray
    m: int
    final_x: np.ndarray = None
    diverged: bool = False
    diverged_step: int | None = None

    @property
    def total_grad_evals(self) -> int:
        return int(self.grad_evals[-1])

    @property
    def epoch_starts(self) -> np.ndarray:
        last = int(self.steps[-1])
        return np.arange(0, last + 1, self.m)

    def epoch_of(self, step: int) -> int:
        return step // self.m


def chain_rngs(seed: int, replicate: int = 0) -> tuple[np.random.Generator, np.random.Generator]:
    """(noise, index) Philox streams for one chain.

    Stream-splitting rule: chain ``replicate`` of a run seeded with ``seed``
    uses SeedSequence((seed, replicate, 0)) for noise and (..., 1) for index
    subsets.  Replicates therefore never share streams, and the noise stream
    is identical across variants regardless of subset consumption.
    """
    noise = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, replicate, 0))))
    index = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, replicate, 1))))
    return noise, index


def sample_index_set(n: int, B: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform size-B subset of {0..n-1} without replacement, sorted."""
    if not 1 <= B <= n:
        raise ValueError(f"need 1 <= B <= n, got B={B}, n={n}")
    if B == n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=B, replace=False))


def _langevin_update(x, v, eta: float, gamma: float, noise):
    # overflow here is the divergence signal, not a warning condition
    with np.errstate(over="ignore", invalid="ignore"):
        return x - eta * v + math.sqrt(2.0 * eta / gamma) * noise


def step_lmc(obj: FiniteSumObjective, x, eta: float, gamma: float, noise) -> np.ndarray:
    """One full-gradient step x - eta grad F(x) + sqrt(2 eta / gamma) noise."""
    new = _langevin_update(x, obj.gradient(x), eta, gamma, np.asarray(noise, dtype=float))
    if not np.all(np.isfinite(new)):
        raise DivergedError(step=0)
    return new


def step_sgld(obj: FiniteSumObjective, x, eta: float, gamma: float, idx, noise) -> np.ndarray:
    """One minibatch step using the subset idx in place of the full gradient."""
    new = _langevin_update(x, obj.minibatch_gradient(x, idx), eta, gamma, np.asarray(noise, dtype=float))
    if not np.all(np.isfinite(new)):
        raise DivergedError(step=0)
    return new


class _TraceBuilder:
    def __init__(self, variant: str, x0: np.ndarray, K: int, m: int, store_every: int):
        self.variant = variant
        self.m = m
        self.store_every = store_every
        self.K = K
        self.steps = [0]
        self.iterates = [np.array(x0, dtype=float)]
        self.grad_evals = [0]
        self.etas = [math.nan]
        self.gammas = [math.nan]

    def record(self, k: int, x, count: int, eta: float, gamma: float) -> None:
        if k % self.store_every == 0 or k == self.K:
            self.steps.append(k)
            self.iterates.append(np.array(x, dtype=float))
            self.grad_evals.append(count)
            self.etas.append(eta)
            self.gammas.append(gamma)

    def build(self, final_x, diverged: bool = False, diverged_step: int | None = None) -> RunTrace:
        return RunTrace(
            variant=self.variant,
            steps=np.asarray(self.steps, dtype=int),
            iterates=np.asarray(self.iterates, dtype=float),
            grad_evals=np.asarray(self.grad_evals, dtype=np.int64),
            etas=np.asarray(self.etas, dtype=float),
            gammas=np.asarray(self.gammas, dtype=float),
            m=self.m,
            final_x=np.array(final_x, dtype=float),
            diverged=diverged,
            diverged_step=diverged_step,
        )


def _finite_or_none(x) -> bool:
    return bool(np.all(np.isfinite(x)))


def run_lmc(obj: FiniteSumObjective, cfg: SamplerConfig, x0, replicate: int = 0) -> RunTrace:
    """K full-gradient Langevin steps; n component evaluations per step."""
    cfg.validate(obj.n)
    noise_rng, _ = chain_rngs(cfg.seed, replicate)
    x = np.array(x0, dtype=float)
    tb = _TraceBuilder("lmc", x, cfg.K, 1, cfg.store_every)
    count = 0
    for k in range(cfg.K):
        eps = noise_rng.standard_normal(obj.d)
        try:
            x = _langevin_update(x, obj.gradient(x), cfg.eta, cfg.gamma, eps)
        except NumericalDomainError:
            return tb.build(tb.iterates[-1], diverged=True, diverged_step=k)
        count += obj.n
        if not _finite_or_none(x):
            return tb.build(tb.iterates[-1], diverged=True, diverged_step=k + 1)
        tb.record(k + 1, x, count, cfg.eta, cfg.gamma)
    return tb.build(x)


def run_sgld(obj: FiniteSumObjective, cfg: SamplerConfig, x0, replicate: int = 0) -> RunTrace:
    """K minibatch steps; B component evaluations per step."""
    cfg.validate(obj.n)
    noise_rng, index_rng = chain_rngs(cfg.seed, replicate)
    x = np.array(x0, dtype=float)
    tb = _TraceBuilder("sgld", x, cfg.K, 1, cfg.store_every)
    count = 0
    for k in range(cfg.K):
        eps = noise_rng.standard_normal(obj.d)
        idx = sample_index_set(obj.n, cfg.B, index_rng)
        try:
            x = _langevin_update(x, obj.minibatch_gradient(x, idx), cfg.eta, cfg.gamma, eps)
        except NumericalDomainError:
            return tb.build(tb.iterates[-1], diverged=True, diverged_step=k)
        count += cfg.B
        if not _finite_or_none(x):
            return tb.build(tb.iterates[-1], diverged=True, diverged_step=k + 1)
        tb.record(k + 1, x, count, cfg.eta, cfg.gamma)
    return tb.build(x)


def _run_anchored(
    obj: FiniteSumObjective,
    variant: str,
    x0,
    K: int,
    m: int,
    B: int,
    seed: int,
    eta_of,
    gamma_of,
    store_every: int,
    debug_checks: bool,
    replicate: int = 0,
) -> RunTrace:
    """Shared engine for the anchored and recursive variance-reduced chains.

    Epoch s (steps sm .. sm+m-1): the anchor step applies the full gradient
    of the epoch's reference point, costing n; each of the m-1 inner steps
    draws noise, then a subset, and costs 2B component evaluations.
    """
    noise_rng, index_rng = chain_rngs(seed, replicate)
    x = np.array(x0, dtype=float)
    tb = _TraceBuilder(variant, x, K, m, store_every)
    count = 0
    recursive = variant == "sarah_ld"
    try:
        for s in range(K // m):
            eta, gamma = eta_of(s), gamma_of(s)
            anchor = x
            v_anchor = obj.gradient(anchor)
            eps = noise_rng.standard_normal(obj.d)
            x = _langevin_update(x, v_anchor, eta, gamma, eps)
            count += obj.n
            k = s * m + 1
            if not _finite_or_none(x):
                return tb.build(tb.iterates[-1], diverged=True, diverged_step=k)
            tb.record(k, x, count, eta, gamma)
            v_prev = v_anchor
            x_prev = anchor
            increments = np.zeros_like(x) if debug_checks else None
            for l in range(1, m):
                k = s * m + l
                eps = noise_rng.standard_normal(obj.d)
                idx = sample_index_set(obj.n, B, index_rng)
                if recursive:
                    inc = obj.minibatch_gradient(x, idx) - obj.minibatch_gradient(x_prev, idx)
                    v = inc + v_prev
                    if debug_checks:
                        increments += inc
                        gap = np.linalg.norm(v - increments - v_anchor)
                        assert gap <= 1e-12 * (1.0 + np.linalg.norm(v)), (
                            f"recursive estimator lost its telescoping anchor at step {k}: gap={gap}"
                        )
                else:
                    v = obj.minibatch_gradient(x, idx) - obj.minibatch_gradient(anchor, idx) + v_anchor
                count += 2 * B
                x_prev = x
                x = _langevin_update(x, v, eta, gamma, eps)
                v_prev = v
                if not _finite_or_none(x):
                    return tb.build(tb.iterates[-1], diverged=True, diverged_step=k + 1)
                tb.record(k + 1, x, count, eta, gamma)
    except NumericalDomainError:
        return tb.build(tb.iterates[-1], diverged=True, diverged_step=int(tb.steps[-1]))
    return tb.build(x)


def run_svrg_ld(obj: FiniteSumObjective, cfg: SamplerConfig, x0, replicate: int = 0) -> RunTrace:
    """Anchored variance-reduced chain: the reference point refreshes every m
    steps, and inner steps correct the minibatch gradient by the anchored
    control variate."""
    cfg.validate(obj.n)
    if cfg.variant not in ("svrg_ld",):
        raise ValueError(f"config variant {cfg.variant!r} is not svrg_ld")
    return _run_anchored(
        obj, "svrg_ld", x0, cfg.K, cfg.m, cfg.B, cfg.seed,
        lambda s: cfg.eta, lambda s: cfg.gamma, cfg.store_every, cfg.debug_checks, replicate,
    )


def run_sarah_ld(obj: FiniteSumObjective, cfg: SamplerConfig, x0, replicate: int = 0) -> RunTrace:
    """Recursive variance-reduced chain: the gradient estimate accumulates
    minibatch increments between consecutive iterates, resetting to the full
    gradient at each epoch start."""
    cfg.validate(obj.n)
    if cfg.variant not in ("sarah_ld",):
        raise ValueError(f"config variant {cfg.variant!r} is not sarah_ld")
    return _run_anchored(
        obj, "sarah_ld", x0, cfg.K, cfg.m, cfg.B, cfg.seed,
        lambda s: cfg.eta, lambda s: cfg.gamma, cfg.store_every, cfg.debug_checks, replicate,
    )


def run_annealed(
    obj: FiniteSumObjective,
    variant: str,
    sched: AnnealSchedule,
    B: int,
    m: int,
    K: int,
    seed: int,
    x0,
    store_every: int = 1,
    debug_checks: bool = False,
    replicate: int = 0,
) -> RunTrace:
    """Variance-reduced chain with per-epoch (eta_s, gamma_s) from the
    schedule; epoch s uses them for both the drift and the noise scale."""
    if variant not in ("svrg_ld", "sarah_ld"):
        raise ValueError("annealed runner supports svrg_ld and sarah_ld")
    if K % m != 0:
        raise ValueError(f"epoch length m={m} must divide K={K}")
    if not 1 <= B <= obj.n:
        raise ValueError(f"need 1 <= B <= n={obj.n}")
    return _run_anchored(
        obj, variant, x0, K, m, B, seed, sched.eta, sched.gamma, store_every, debug_checks, replicate
    )


def run_chain(obj: FiniteSumObjective, cfg: SamplerConfig, x0, replicate: int = 0) -> RunTrace:
    runner = {
        "lmc": run_lmc,
        "sgld": run_sgld,
        "svrg_ld": run_svrg_ld,
        "sarah_ld": run_sarah_ld,
    }[cfg.variant]
    return runner(obj, cfg, x0, replicate)


def grad_evals_at(variant: str, k: int, n: int, B: int, m: int) -> int:
    """Cumulative component-gradient count after k steps of the variant."""
    if variant == "lmc":
        return k * n
    if variant == "sgld":
        return k * B
    full, r = divmod(k, m)
    partial = 0 if r == 0 else n + 2 * B * (r - 1)
    return full * (n + 2 * B * (m - 1)) + partial


# -- vectorised replicate ensembles ---------------------------------------------


@dataclass
class EnsembleResult:
    variant: str
    checkpoints: dict[int, np.ndarray] = field(default_factory=dict)  # step -> (R, d)
    grad_evals: dict[int, int] = field(default_factory=dict)          # step -> per-chain count
    final: np.ndarray = None
    K: int = 0


def run_ensemble(
    obj: FiniteSumObjective,
    variant: str,
    n_chains: int,
    K: int,
    *,
    eta: float | None = None,
    gamma: float | None = None,
    B: int = 1,
    m: int = 1,
    seed: int = 0,
    x0=None,
    checkpoints=None,
    sched: AnnealSchedule | None = None,
) -> EnsembleResult:
    """Run n_chains independent chains of one variant, vectorised over chains.

    Statistically equivalent to independent single-chain runs but draws from a
    single pair of Philox streams in documented blocks (noise and index
    uniforms for a bounded span of steps at a time; subsets per chain come
    from ranking iid uniforms row-wise).  Deterministic in
    (seed, n_chains, shapes).  Intended for the replicate-heavy desk
    experiments; single chains keep the per-replicate stream rule of
    :func:`chain_rngs`.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if variant in ("svrg_ld", "sarah_ld") and K % m != 0:
        raise ValueError(f"epoch length m={m} must divide K={K}")
    if sched is None and (eta is None or gamma is None):
        raise ValueError("need eta and gamma (or a schedule)")
    R, d, n = n_chains, obj.d, obj.n
    noise_rng, index_rng = chain_rngs(seed)
    if x0 is None:
        X = np.zeros((R, d))
    else:
        x0 = np.asarray(x0, dtype=float)
        X = np.tile(x0, (R, 1)) if x0.ndim == 1 else np.array(x0)
    if X.shape != (R, d):
        raise ValueError(f"x0 must broadcast to ({R}, {d})")
    wanted = set(checkpoints) if checkpoints else {K}
    if max(wanted) > K:
        raise ValueError("checkpoints exceed K")
    out = EnsembleResult(variant=variant, K=K)

    def eta_gamma(s: int) -> tuple[float, float]:
        if sched is not None:
            return sched.eta(s), sched.gamma(s)
        return eta, gamma

    def snapshot(k: int) -> None:
        if k in wanted:
            out.checkpoints[k] = X.copy()
            out.grad_evals[k] = grad_evals_at(variant, k, n, B, m)

    snapshot(0)
    # bound each pre-drawn block to a few MB regardless of ensemble size
    span = max(1, 2_000_000 // max(1, R * max(d, n)))
    if variant in ("lmc", "sgld"):
        e0, g0 = eta_gamma(0)
        scale = math.sqrt(2.0 * e0 / g0)
        for start in range(0, K, span):
            stop = min(start + span, K)
            EPS = noise_rng.standard_normal((stop - start, R, d))
            if variant == "sgld":
                U = index_rng.random((stop - start, R, n))
                IDX = np.argpartition(U, B - 1, axis=-1)[..., :B]
            for j, k in enumerate(range(start, stop)):
                if variant == "lmc":
                    V = obj.gradient(X)
                else:
                    V = obj.minibatch_gradient_rows(X, IDX[j])
                with np.errstate(over="ignore", invalid="ignore"):
                    X = X - e0 * V + scale * EPS[j]
                if not np.all(np.isfinite(X)):
                    raise DivergedError(step=k + 1)
                snapshot(k + 1)
    else:
        recursive = variant == "sarah_ld"
        epochs = K // m
        epoch_span = max(1, span // m)
        s = 0
        while s < epochs:
            c = min(epoch_span, epochs - s)
            EPS = noise_rng.standard_normal((c, m, R, d))
            if m > 1:
                U = index_rng.random((c, m - 1, R, n))
                IDX = np.argpartition(U, B - 1, axis=-1)[..., :B]
            for e in range(c):
                e_s, g_s = eta_gamma(s + e)
                scale = math.sqrt(2.0 * e_s / g_s)
                anchor = X
                V_anchor = obj.gradient(anchor)
                with np.errstate(over="ignore", invalid="ignore"):
                    X = X - e_s * V_anchor + scale * EPS[e, 0]
                if not np.all(np.isfinite(X)):
                    raise DivergedError(step=(s + e) * m + 1)
                snapshot((s + e) * m + 1)
                V_prev = V_anchor
                X_prev = anchor
                for l in range(1, m):
                    idx = IDX[e, l - 1]
                    if recursive:
                        V = (
                            obj.minibatch_gradient_rows(X, idx)
                            - obj.minibatch_gradient_rows(X_prev, idx)
                            + V_prev
                        )
                    else:
                        V = (
                            obj.minibatch_gradient_rows(X, idx)
                            - obj.minibatch_gradient_rows(anchor, idx)
                            + V_anchor
                        )
                    X_prev = X
                    with np.errstate(over="ignore", invalid="ignore"):
                        X = X - e_s * V + scale * EPS[e, l]
                    V_prev = V
                    k = (s + e) * m + l + 1
                    if not np.all(np.isfinite(X)):
                        raise DivergedError(step=k)
                    snapshot(k)
            s += c
    out.final = X
    return out
