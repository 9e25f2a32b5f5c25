"""Fast oracle and property checks, run by ``python -m assocmem selftest``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import objective, spectral
from .capacity import capacity, is_recovered
from .distmodel import population_weights, power_law_dist, sample_embeddings
from .spectral import NewtonSchulzSpec

REL_TOL = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def _orth(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def check_gradient_hessian():
    worst_g = worst_h = 0.0
    for seed in range(3):
        emb = sample_embeddings(6, 10, seed=seed)
        w = population_weights(power_law_dist(10, 1.5))
        rng = np.random.default_rng(seed)
        W = 0.5 * rng.standard_normal((6, 6))
        G = objective.gradient(W, emb, w)
        h = 1e-5
        fd = np.empty((6, 6))
        for a in range(6):
            for b in range(6):
                E = np.zeros((6, 6))
                E[a, b] = h
                fd[a, b] = -(objective.loss(W + E, emb, w).value - objective.loss(W - E, emb, w).value) / (2 * h)
        worst_g = max(worst_g, _rel(G, fd))
        # Hessian at W = 0 against a central difference of the gradient
        f = objective.hessian_factors(emb, w, ridge=0.0)
        D = rng.standard_normal((6, 6))
        t = 1e-4
        Z = np.zeros((6, 6))
        fd_h = -(objective.gradient(Z + t * D, emb, w) - objective.gradient(Z - t * D, emb, w)) / (2 * t)
        worst_h = max(worst_h, _rel(objective.hessian_apply(f, D), fd_h))
    ok = worst_g <= REL_TOL and worst_h <= REL_TOL
    return CheckResult("a gradient/hessian", ok, f"gradient rel err {worst_g:.2e}, hessian rel err {worst_h:.2e}")


def check_frechet_and_slope():
    rng = np.random.default_rng(1)
    lam = 0.3
    worst_dk = worst_slope = 0.0

    def f(z):
        return 1.0 / np.sqrt(z + lam**2)

    def fp(z):
        return -0.5 * (z + lam**2) ** -1.5

    def matfun(M):
        w, P = np.linalg.eigh(M)
        return (P * f(w)) @ P.T

    for _ in range(5):
        Q = _orth(rng, 6)
        M = (Q * (0.5 + 0.1 * np.arange(6))) @ Q.T
        B = rng.standard_normal((6, 6))
        E = B + B.T
        t = 1e-5
        fd = (matfun(M + t * E) - matfun(M - t * E)) / (2 * t)
        worst_dk = max(worst_dk, _rel(spectral.dk_first_derivative(M, E, f, fp), fd))

        G = rng.standard_normal((8, 8)) / 8
        u, v = rng.standard_normal((2, 8)) / math.sqrt(8)

        def phi(q):
            return u @ spectral.h_lambda_apply(G + q * np.outer(u, v), 0.05) @ v

        t = 1e-6
        fd_s = (phi(t) - phi(-t)) / (2 * t)
        worst_slope = max(worst_slope, abs(spectral.signal_slope(G, u, v, 0.05) - fd_s) / abs(fd_s))
    ok = worst_dk <= REL_TOL and worst_slope <= REL_TOL
    return CheckResult("b frechet/signal slope", ok, f"DK rel err {worst_dk:.2e}, slope rel err {worst_slope:.2e}")


def check_polar():
    rng = np.random.default_rng(2)
    worst = 0.0
    for d in (2, 5, 16, 64):
        P = spectral.polar(rng.standard_normal((d, d)))
        worst = max(worst, float(np.max(np.abs(P.T @ P - np.eye(d)))))
    return CheckResult("c polar orthogonality", worst <= 1e-9, f"max |P^T P - I| = {worst:.2e}")


def check_lipschitz():
    rng = np.random.default_rng(3)
    violations = 0
    for lam in (0.1, 1.0):
        for _ in range(200):
            A, B = rng.standard_normal((2, 8, 8))
            B = A + rng.uniform(0.01, 1.0) * B
            lhs = np.linalg.norm(spectral.h_lambda_apply(A, lam) - spectral.h_lambda_apply(B, lam), 2)
            violations += lhs > np.linalg.norm(A - B, 2) / lam * (1 + 1e-12)
    return CheckResult("d operator Lipschitz", violations == 0, f"{violations} violations over 400 pairs")


def check_equivariance():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(10):
        M = rng.standard_normal((7, 7))
        Q1, Q2 = _orth(rng, 7), _orth(rng, 7)

        def h(z):
            return spectral.h_lambda(z, 0.2)

        lhs = spectral.spectral_map(Q1 @ M @ Q2.T, h)
        worst = max(worst, float(np.max(np.abs(lhs - Q1 @ spectral.spectral_map(M, h) @ Q2.T))))
    return CheckResult("e spectral equivariance", worst <= 1e-8, f"max deviation {worst:.2e}")


def check_newton_schulz():
    spec = NewtonSchulzSpec()
    fixed = abs(spec.scalar(1.0) - 1.0)
    zero = abs(spec.scalar(math.sqrt(3)))
    z = np.linspace(1e-3, math.sqrt(3) - 1e-3, 1000)
    monotone = all(np.all(np.diff(spec.scalar_iterate(z, k) / z) <= 1e-12) for k in range(1, 9))
    ok = fixed <= 1e-15 and zero <= 1e-15 and monotone
    return CheckResult("f newton-schulz scalar", ok,
                       f"|h(1)-1| = {fixed:.1e}, |h(sqrt3)| = {zero:.1e}, ratio nonincreasing: {monotone}")


def check_recovery_brute_force():
    mismatches = 0
    for seed in range(100):
        emb = sample_embeddings(4, 8, seed=seed)
        W = np.random.default_rng(seed).standard_normal((4, 4))
        L = emb.U.T @ W @ emb.V          # L[j, i] = u_j^T W v_i
        naive = [all(L[i, i] > L[j, i] for j in range(8) if j != i) for i in range(8)]
        fast = [is_recovered(W, emb, i)[0] for i in range(8)]
        mismatches += fast != naive or capacity(W, emb, block_size=3).recovered_count != sum(naive)
    return CheckResult("g recovery brute force", mismatches == 0, f"{mismatches}/100 instances disagree")


def check_eta_invariance():
    bad = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        emb = sample_embeddings(8, 200, seed=seed)
        w = population_weights(power_law_dist(200, float(rng.uniform(1.1, 2.5))))
        G = objective.gradient_at_zero(emb, w)
        D = spectral.polar(G) if seed % 2 else G
        reports = {(r.recovered_count, r.recovered_prefix)
                   for r in (capacity(eta * D, emb) for eta in (1e-3, 1.0, 1e3))}
        bad += len(reports) != 1
    return CheckResult("h eta invariance", bad == 0, f"{bad}/50 instances change under eta")


CHECKS = (check_gradient_hessian, check_frechet_and_slope, check_polar, check_lipschitz,
          check_equivariance, check_newton_schulz, check_recovery_brute_force, check_eta_invariance)


def run_selftest():
    results = []
    for check in CHECKS:
        try:
            results.append(check())
        except Exception as exc:
            results.append(CheckResult(check.__name__, False, f"raised {type(exc).__name__}: {exc}"))
    return results
