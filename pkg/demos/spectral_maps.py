"""
Spectral maps and their derivatives
===================================

The update directions used here are all functions of the singular values:
the polar map sends every singular value to 1, the stabilized map
z / sqrt(z^2 + lam^2) only amplifies values above lam, and Newton-Schulz
approximates the polar map with a few matrix products.
"""
import numpy as np

from assocmem import spectral
from assocmem.spectral import NewtonSchulzSpec

rng = np.random.default_rng(0)
G = rng.standard_normal((6, 6)) @ np.diag([4.0, 2.0, 1.0, 0.3, 0.1, 0.01])
print("singular values of G:      ", np.round(spectral.svd(G).singulars, 3))
print("after polar:               ", np.round(spectral.svd(spectral.polar(G)).singulars, 3))
for lam in (0.05, 0.5):
    s = spectral.svd(spectral.h_lambda_apply(G, lam)).singulars
    print(f"after h_lambda, lam={lam:<5}:  ", np.round(s, 3))

# Newton-Schulz after Frobenius scaling; small singular values converge slowly
for k in (1, 3, 5, 10):
    out = spectral.newton_schulz_apply(G, NewtonSchulzSpec(iterations=k))
    print(f"newton-schulz, {k:2d} iterations:", np.round(spectral.svd(out).singulars, 3))

# derivative of 1/sqrt(M + lam^2) along E, closed form against a finite difference
lam = 0.3
A = rng.standard_normal((5, 5))
M = A @ A.T + 0.1 * np.eye(5)
B = rng.standard_normal((5, 5))
E = B + B.T


def f(z):
    return 1 / np.sqrt(z + lam**2)


def fp(z):
    return -0.5 * (z + lam**2) ** -1.5


def matfun(X):
    w, P = np.linalg.eigh(X)
    return (P * f(w)) @ P.T


t = 1e-5
fd = (matfun(M + t * E) - matfun(M - t * E)) / (2 * t)
dk = spectral.dk_first_derivative(M, E, f, fp)
print("Frechet derivative, max abs error vs finite difference:", np.abs(dk - fd).max())

# how fast the signal logit of one item grows when its own term is added back
u, v = rng.standard_normal((2, 6)) / np.sqrt(6)
print("signal slope at lam=0.05:", spectral.signal_slope(G / 10, u, v, 0.05))
