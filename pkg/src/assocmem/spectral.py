"""Spectral maps on square matrices and their Frechet derivatives.

A spectral map applies a scalar function h to the singular values,
``h(M) = U diag(h(s)) V^T``. The polar factor (h = sign), the stabilized map
``h_lam(z) = z / sqrt(z^2 + lam^2)`` and Newton-Schulz iterates are the
members used by the optimizers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import DomainError, NumericalError

COINCIDE_TOL = 1e-9
ZERO_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SvdTriple:
    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray

    def reconstruct(self):
        return (self.left * self.singulars) @ self.right.T


def svd(M) -> SvdTriple:
    M = np.asarray(M, dtype=np.float64)
    if not np.all(np.isfinite(M)):
        raise NumericalError("svd input has non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(M)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails where the slower QR-based driver succeeds
        try:
            U, s, Vt = scipy.linalg.svd(M, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"SVD did not converge (shape {M.shape}, Frobenius norm {np.linalg.norm(M):.3e})"
            ) from exc
    return SvdTriple(U, s, Vt.T)


def polar(M) -> np.ndarray:
    t = svd(M)
    return t.left @ t.right.T


def h_lambda(z, lam):
    z = np.asarray(z, dtype=np.float64)
    if lam == 0:
        return np.sign(z)
    return z / np.hypot(z, lam)


def h_lambda_prime(z, lam):
    z = np.asarray(z, dtype=np.float64)
    return lam**2 / (z * z + lam * lam) ** 1.5


def h_lambda_apply(M, lam) -> np.ndarray:
    """U diag(s / sqrt(s^2 + lam^2)) V^T; lam = 0 gives the polar factor."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if lam == 0:
        return polar(M)
    t = svd(M)
    return (t.left * h_lambda(t.singulars, lam)) @ t.right.T


def spectral_map(M, h) -> np.ndarray:
    """Apply a scalar function h with h(0) = 0 to the singular values of M."""
    h0 = float(np.asarray(h(np.zeros(1)))[0])
    if abs(h0) > 1e-12:
        raise ValueError(f"spectral map requires h(0) = 0, got {h0:g}")
    t = svd(M)
    return (t.left * np.asarray(h(t.singulars), dtype=np.float64)) @ t.right.T


# --- Newton-Schulz ---------------------------------------------------------

CUBIC = (1.5, -0.5)


@dataclass(frozen=True)
class NewtonSchulzSpec:
    """Odd polynomial z -> z * phi(z^2) iterated ``iterations`` times.

    ``coefficients`` are those of phi in increasing degree, so the classical
    cubic map 3/2 z - 1/2 z^3 is ``(1.5, -0.5)``.
    """

    coefficients: tuple = CUBIC
    iterations: int = 5
    prescale: str = "frobenius"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.prescale not in ("frobenius", "spectral-estimate", "none"):
            raise ValueError(f"unknown prescale {self.prescale!r}")
        if len(self.coefficients) < 1:
            raise ValueError("need at least one coefficient")
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    def scalar(self, z):
        """One application of the odd polynomial."""
        z = np.asarray(z, dtype=np.float64)
        x = z * z
        acc = np.zeros_like(z)
        for c in reversed(self.coefficients):
            acc = acc * x + c
        return z * acc

    def scalar_iterate(self, z, k=None):
        k = self.iterations if k is None else k
        for _ in range(k):
            z = self.scalar(z)
        return z

    @property
    def domain_bound(self) -> float:
        """Smallest positive root of the odd polynomial (sqrt(3) for the cubic).

        Polynomials without a positive root are only trusted on (0, 1].
        """
        # roots of phi(x) with x = z^2
        roots = np.roots(self.coefficients[::-1]) if len(self.coefficients) > 1 else np.array([])
        pos = [r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0]
        return math.sqrt(min(pos)) if pos else 1.0


def _spectral_norm_estimate(M, iters=30):
    # power iteration on M^T M, started from a fixed vector for determinism
    x = np.ones(M.shape[1]) / math.sqrt(M.shape[1])
    est = 0.0
    for _ in range(iters):
        y = M.T @ (M @ x)
        n = np.linalg.norm(y)
        if n == 0:
            return 0.0
        x = y / n
        est = math.sqrt(n)
    return est


def newton_schulz_apply(M, spec: NewtonSchulzSpec = NewtonSchulzSpec()) -> np.ndarray:
    X = np.array(M, dtype=np.float64)
    if spec.prescale == "frobenius":
        scale = np.linalg.norm(X)
    elif spec.prescale == "spectral-estimate":
        scale = _spectral_norm_estimate(X)
    else:
        scale = 1.0
    if scale == 0:
        return np.zeros_like(X)
    X = X / scale
    bound = spec.domain_bound
    top = np.linalg.norm(X, 2)
    if top >= bound:
        raise DomainError(
            f"singular value {top:.6g} after {spec.prescale} prescale is outside the "
            f"convergence interval (0, {bound:.6g})"
        )
    for _ in range(spec.iterations):
        A = X.T @ X
        P = np.zeros_like(A)
        for c in reversed(spec.coefficients):
            P = P @ A
            P[np.diag_indices_from(P)] += c
        X = X @ P
    return X


# --- Daleckii-Krein ---------------------------------------------------------

def divided_difference(f, fprime, x, y):
    """First divided difference matrix T_ij = f[x_i, y_j] (f' on near-coincidence)."""
    x = np.asarray(x, dtype=np.float64)[:, None]
    y = np.asarray(y, dtype=np.float64)[None, :]
    diff = x - y
    close = np.abs(diff) < COINCIDE_TOL
    safe = np.where(close, 1.0, diff)
    T = (f(x) - f(y)) / safe
    return np.where(close, fprime(0.5 * (x + y)), T)


def dk_first_derivative(M, E, f, fprime) -> np.ndarray:
    """Frechet derivative Df(M)[E] of a symmetric matrix function."""
    M = np.asarray(M, dtype=np.float64)
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(M), initial=0.0)):
        raise ValueError("M must be symmetric")
    lam, P = np.linalg.eigh(M)
    T = divided_difference(f, fprime, lam, lam)
    return P @ ((P.T @ E @ P) * T) @ P.T


def _second_divided(f, fp, fpp, x, y, z):
    """f[x, y, z] for scalars using the same coincidence conventions."""

    def f1(a, b):
        if abs(a - b) < COINCIDE_TOL:
            return fp(0.5 * (a + b))
        return (f(a) - f(b)) / (a - b)

    if abs(x - y) >= COINCIDE_TOL:
        return (f1(x, z) - f1(y, z)) / (x - y)
    if abs(x - z) >= COINCIDE_TOL:
        # d/dx of (f(x) - f(z)) / (x - z)
        return (fp(x) * (x - z) - (f(x) - f(z))) / (x - z) ** 2
    return 0.5 * fpp(x)


def dk_second_derivative(M, E, f, fprime, fsecond) -> np.ndarray:
    """d^2/dt^2 f(M + tE) at t = 0 via second divided differences."""
    M = np.asarray(M, dtype=np.float64)
    lam, P = np.linalg.eigh(M)
    Et = P.T @ E @ P
    d = len(lam)
    F2 = np.empty((d, d, d))
    for i in range(d):
        for j in range(d):
            for k in range(d):
                F2[i, j, k] = _second_divided(f, fprime, fsecond, lam[i], lam[j], lam[k])
    inner = 2.0 * np.einsum("ijk,ik,jk->ij", F2, Et, Et)
    return P @ inner @ P.T


def signal_slope(G_minus, u, v, lam) -> float:
    """d/dq of u^T h_lam(G_minus + q u v^T) v at q = 0, from the SVD of G_minus."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    t = svd(G_minus)
    s = t.singulars
    a = t.left.T @ u
    b = t.right.T @ v
    hs = h_lambda(s, lam)
    hp = h_lambda_prime(s, lam)

    sk, sl = s[:, None], s[None, :]
    ssum = sk + sl
    sdiff = sk - sl
    plus = np.where(ssum < ZERO_SUM_TOL, h_lambda_prime(0.0, lam),
                    (hs[:, None] + hs[None, :]) / np.where(ssum < ZERO_SUM_TOL, 1.0, ssum))
    close = np.abs(sdiff) < COINCIDE_TOL
    minus = np.where(close, h_lambda_prime(0.5 * ssum, lam),
                     (hs[:, None] - hs[None, :]) / np.where(close, 1.0, sdiff))
    ab = np.outer(a, b)
    anti = (ab - ab.T) ** 2
    sym = (ab + ab.T) ** 2
    off = plus * anti + minus * sym
    np.fill_diagonal(off, 0.0)
    return 0.25 * off.sum() + float(np.sum(hp * a**2 * b**2))
