"""Update rules, step-size/resolution schedules and the trajectory runner."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import objective, spectral
from .capacity import CapacityReport, default_i_max, report_from_margins
from .distmodel import POPULATION, EmbeddingSet, FrequencyDistribution, draw_weights, population_weights
from .exceptions import NumericalError
from .spectral import NewtonSchulzSpec

KINDS = ("sgd", "muon-exact", "muon-stabilized", "muon-ns", "newton")


# --- single steps ------------------------------------------------------------

def _check_eta(eta):
    if not eta > 0:
        raise ValueError(f"learning rate must be positive, got {eta!r}")


def sgd_step(W, G, eta):
    _check_eta(eta)
    return W + eta * G


def muon_step(W, G, eta, lam=0.0, variant="exact"):
    """W + eta * h(G) where h is the polar map, h_lam, or a Newton-Schulz iterate.

    ``variant`` is ``"exact"``, ``"stabilized"`` or a :class:`NewtonSchulzSpec`.
    """
    _check_eta(eta)
    if isinstance(variant, NewtonSchulzSpec):
        D = spectral.newton_schulz_apply(G, variant)
    elif variant == "exact":
        D = spectral.polar(G)
    elif variant == "stabilized":
        D = spectral.h_lambda_apply(G, lam)
    else:
        raise ValueError(f"unknown muon variant {variant!r}")
    return W + eta * D


def newton_step(W, G0, factors, eta):
    """One Newton step from W = 0 with the Kronecker-factored initial Hessian."""
    _check_eta(eta)
    if np.any(W):
        raise ValueError("newton_step is only defined at W = 0 (initialization Hessian)")
    return W + eta * objective.hessian_inverse_apply(factors, G0)


# --- schedules ---------------------------------------------------------------

@dataclass(frozen=True)
class TheorySchedule:
    thresholds: tuple   # d_0 .. d_T
    lambdas: tuple      # lambda_0 .. lambda_{T-1}
    eta: float
    exponents: tuple    # recovery exponent of d at t = 0 .. T


def recovery_exponent(alpha, t):
    """2 - (1 - 1/(2 alpha))^t; equals 1 + 1/(2 alpha) at t = 1 and tends to 2."""
    return 2.0 - (1.0 - 1.0 / (2.0 * alpha)) ** t


def theory_schedules(d, alpha, B=POPULATION, T=1, n_items=None, multiplier=1.0,
                     lambda_form="next") -> TheorySchedule:
    """Multi-step Muon schedule with all hidden constants 1 and log factors dropped.

    d_0 = 0 and d_t = min(d^{2-(1-1/2a)^t}, B^{1/a}) clamped to [1, N] for t >= 1.
    lambda_t = d_{t+1}^{-a} sqrt(d) (``lambda_form="next"``) or
    d_t^{1/2-a} d^{-1/2} log d (``"current"``); eta = sqrt(d).
    """
    if T < 1 or d < 2:
        raise ValueError("need T >= 1 and d >= 2")
    cap = math.inf if B is POPULATION else float(B) ** (1.0 / alpha)
    hi = math.inf if n_items is None else float(n_items)
    exps = tuple(recovery_exponent(alpha, t) for t in range(T + 1))
    ds = [0.0]
    for t in range(1, T + 1):
        ds.append(min(max(min(d ** exps[t], cap), 1.0), hi))
    lams = []
    for t in range(T):
        if lambda_form == "next":
            lam = ds[t + 1] ** (-alpha) * math.sqrt(d)
        elif lambda_form == "current":
            lam = max(ds[t], 1.0) ** (0.5 - alpha) * math.log(d) / math.sqrt(d)
        else:
            raise ValueError(f"unknown lambda_form {lambda_form!r}")
        lams.append(multiplier * lam)
    return TheorySchedule(tuple(ds), tuple(lams), multiplier * math.sqrt(d), exps)


def gd_thresholds(d, alpha, T, d0=1.0, n_items=None):
    """SGD recovery thresholds d_0..d_T of the multi-step recursion."""
    hi = math.inf if n_items is None else float(n_items)
    ds = [float(d0)]
    for _ in range(T):
        dt = ds[-1]
        if dt < d:
            nxt = d ** (1.0 / (2 * alpha)) * dt
        else:
            nxt = d ** (1.0 / alpha) * dt ** (1.0 - 1.0 / (2 * alpha))
        ds.append(min(nxt, hi))
    return ds


def gd_schedule(d, alpha, T, c, d0=1.0, n_items=None):
    """Increasing SGD step sizes eta_t = c * d_{t+1}^alpha, t = 0..T-1."""
    ds = gd_thresholds(d, alpha, T, d0, n_items)
    return [c * ds[t + 1] ** alpha for t in range(T)]


@dataclass(frozen=True)
class EtaSchedule:
    """``constant`` (value), ``sqrt-d`` (value * sqrt(d)), ``gd-increasing``
    (value = c, uses the SGD recursion) or ``explicit`` (values)."""

    kind: str = "constant"
    value: float = 1.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "sqrt-d", "gd-increasing", "explicit"):
            raise ValueError(f"unknown eta schedule {self.kind!r}")

    def sequence(self, d, alpha, T, n_items=None):
        if self.kind == "constant":
            return [self.value] * T
        if self.kind == "sqrt-d":
            return [self.value * math.sqrt(d)] * T
        if self.kind == "gd-increasing":
            return gd_schedule(d, alpha, T, self.value, n_items=n_items)
        if len(self.values) < T:
            raise ValueError(f"explicit eta schedule has {len(self.values)} entries, need {T}")
        return list(self.values[:T])


@dataclass(frozen=True)
class LambdaSchedule:
    kind: str = "zero"          # zero | constant | theory
    value: float = 0.0          # constant value, or multiplier for theory
    form: str = "next"      # next | current: which threshold sets lambda_t

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "theory"):
            raise ValueError(f"unknown lambda schedule {self.kind!r}")
        if self.form not in ("next", "current"):
            raise ValueError(f"unknown lambda form {self.form!r}")

    def sequence(self, d, alpha, B, T, n_items=None):
        if self.kind == "zero":
            return [0.0] * T
        if self.kind == "constant":
            return [self.value] * T
        mult = self.value if self.value > 0 else 1.0
        return list(theory_schedules(d, alpha, B, T, n_items, mult, self.form).lambdas)


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str
    eta: EtaSchedule = EtaSchedule()
    lam: LambdaSchedule = LambdaSchedule()
    ns_spec: NewtonSchulzSpec | None = None
    ridge: float = objective.DEFAULT_RIDGE
    gradient_mode: str = "exact"    # exact | deflated
    label: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.kind == "muon-ns" and self.ns_spec is None:
            raise ValueError("muon-ns requires ns_spec")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.gradient_mode not in ("exact", "deflated"):
            raise ValueError(f"unknown gradient_mode {self.gradient_mode!r}")

    @property
    def name(self):
        return self.label or self.kind

    def thresholds(self, d, alpha, B, T, n_items):
        """Deflation thresholds d_0..d_{T-1} as integers."""
        if self.kind == "sgd":
            ds = [0.0] + gd_thresholds(d, alpha, T, d0=1.0, n_items=n_items)[1:]
        else:
            ds = theory_schedules(d, alpha, B, T, n_items).thresholds
        return [int(math.floor(x)) for x in ds[:T]]


# --- trajectories ------------------------------------------------------------

@dataclass
class EvalOptions:
    i_max: int | None = None            # None -> default rule
    check_all: bool = False
    i_max_multiplier: float = 8.0
    record_loss: bool = False
    n_eval: int | None = None           # truncate the input sum of the loss/gradient
    block_size: int = objective.DEFAULT_BLOCK
    early_stop_window: int | None = None
    early_stop_tol: float = 0.005
    keep_weights: bool = False


@dataclass
class StepRecord:
    step: int
    grad_norm: float | None = None
    loss: float | None = None
    capacity: CapacityReport | None = None
    wall_ms: float = 0.0
    weights: np.ndarray | None = field(default=None, repr=False)


@dataclass
class TrajectoryRecord:
    steps: list
    final_weights: np.ndarray = field(repr=False)
    stopped_early: bool = False

    def capacities(self):
        return [s.capacity.recovered_count for s in self.steps]


def _direction(spec: OptimizerSpec, G, lam, factors):
    if spec.kind == "sgd":
        return G
    if spec.kind == "muon-exact":
        return spectral.polar(G)
    if spec.kind == "muon-stabilized":
        return spectral.h_lambda_apply(G, lam)
    if spec.kind == "muon-ns":
        return spectral.newton_schulz_apply(G, spec.ns_spec)
    return objective.hessian_inverse_apply(factors, G)


def run_trajectory(emb: EmbeddingSet, dist: FrequencyDistribution, spec: OptimizerSpec, T,
                   batch_size=POPULATION, seed=0, options: EvalOptions | None = None) -> TrajectoryRecord:
    """Run T steps from W_0 = 0 and record capacity (and optionally loss) at steps 0..T.

    The recorded loss is always the population loss, also for minibatch runs.

    A fresh minibatch is drawn at every step unless ``batch_size`` is
    POPULATION. With ``options.early_stop_window = k`` the run stops once the
    recovered count improved by less than ``early_stop_tol`` (relative) over
    the last k steps.
    """
    opts = options or EvalOptions()
    N, d, alpha = emb.n_items, emb.dim, dist.alpha
    if dist.n_items != N:
        raise ValueError("distribution and embeddings disagree on N")
    if spec.kind == "newton" and T > 1:
        raise ValueError("newton is only defined for a single step from W = 0")
    if opts.check_all:
        i_max = N
    elif opts.i_max is not None:
        i_max = min(opts.i_max, N)
    else:
        i_max = default_i_max(d, alpha, N, multi_step=T > 1, multiplier=opts.i_max_multiplier)
    n_eval = N if opts.n_eval is None else min(opts.n_eval, N)

    etas = spec.eta.sequence(d, alpha, T, n_items=N)
    lams = spec.lam.sequence(d, alpha, batch_size, T, n_items=N)
    thresholds = spec.thresholds(d, alpha, batch_size, T, N) if spec.gradient_mode == "deflated" else None

    pop = population_weights(dist)
    W = np.zeros((d, d))
    steps = []
    stopped = False
    for t in range(T + 1):
        t0 = time.perf_counter()
        last = t == T
        need_grad = not last
        weights = None
        if need_grad:
            weights = draw_weights(dist, batch_size, seed, t)
        cap = None
        G = None
        loss_val = None

        if t == 0:
            cap = report_from_margins(np.zeros(i_max), np.zeros(i_max), N)
            if opts.record_loss:
                loss_val = math.log(N) * math.fsum(pop.restrict(stop=n_eval).weights)
            if need_grad and spec.gradient_mode == "exact":
                G = objective.gradient_at_zero(emb, weights.restrict(stop=n_eval))
        else:
            exact_grad = need_grad and spec.gradient_mode == "exact"
            population = batch_size is POPULATION
            fused = (exact_grad or opts.record_loss) and population and n_eval >= i_max
            if fused:
                # one sweep over the inputs yields gradient, loss and recovery margins
                res = objective.blocked_pass(
                    W, emb, pop, indices=np.arange(n_eval), want_gradient=exact_grad,
                    want_loss=opts.record_loss, want_margins=True, block_size=opts.block_size)
                cap = report_from_margins(res.signal[:i_max], res.best_other[:i_max], N)
                G = res.gradient
                loss_val = res.loss if opts.record_loss else None
            else:
                res = objective.blocked_pass(
                    W, emb, None, indices=np.arange(i_max), want_gradient=False,
                    want_loss=False, want_margins=True, block_size=opts.block_size)
                cap = report_from_margins(res.signal, res.best_other, N)
                if exact_grad:
                    G = objective.blocked_pass(W, emb, weights.restrict(stop=n_eval), want_loss=False,
                                               block_size=opts.block_size).gradient
                if opts.record_loss:
                    loss_val = objective.blocked_pass(W, emb, pop.restrict(stop=n_eval), want_gradient=False,
                                                      block_size=opts.block_size).loss

        if need_grad and spec.gradient_mode == "deflated":
            G = objective.deflated_gradient(emb, weights, thresholds[t])

        rec = StepRecord(t, loss=loss_val, capacity=cap,
                         grad_norm=None if G is None else float(np.linalg.norm(G)))
        if opts.keep_weights:
            rec.weights = W.copy()

        win = opts.early_stop_window
        if win and need_grad and t >= win:
            prev = steps[t - win].capacity.recovered_count
            if prev > 0 and (cap.recovered_count - prev) < opts.early_stop_tol * prev:
                stopped = True
                need_grad = False

        if need_grad:
            factors = None
            if spec.kind == "newton":
                factors = objective.hessian_factors(emb, weights, spec.ridge)
            try:
                W = W + etas[t] * _direction(spec, G, lams[t], factors)
            except NumericalError as exc:
                raise NumericalError(f"step {t}: {exc}") from exc
            if not np.all(np.isfinite(W)):
                raise NumericalError(f"step {t}: non-finite weights")
        rec.wall_ms = 1000.0 * (time.perf_counter() - t0)
        steps.append(rec)
        if stopped:
            break
    return TrajectoryRecord(steps, W, stopped)
