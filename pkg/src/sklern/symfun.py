"""Elementary symmetric functions and the Garding cones Gamma_k.

Everything here operates on plain eigenvalue vectors lam = (lam_1, ..., lam_n)
or on symmetric matrices.  sigma(k, lam) is the k-th elementary symmetric
function, computed by the one-pass recurrence on characteristic-polynomial
coefficients rather than by subset enumeration, so it costs O(n k) and is
stable for the moderate n used throughout this package.

The cone Gamma_k = {lam : sigma_1(lam) > 0, ..., sigma_k(lam) > 0} is the
ellipticity cone of the sigma_k operators; membership is tested through a
tolerance so the closed cone can be queried with tol > 0.

n_k(n, k) = 2^{-k} binom(n, k) = sigma_k(1/2, ..., 1/2) is the normalization
that makes the hyperbolic metric an exact solution of the blow-up problem
solved elsewhere in the package.

tangential_trace(M, m) = trace(M) - m^T M m is the sum M_ij (delta_ij -
m_i m_j); it is nonnegative whenever the eigenvalues of the symmetric matrix
M lie in the closed cone Gamma_2-bar, a fact the minimal-hypersurface
obstruction check relies on and the test suite samples heavily.
"""

import math

import numpy as np


def _as_eigenvector(lam):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1:
        raise ValueError("eigenvalue vector must be one-dimensional")
    if lam.size < 1:
        raise ValueError("eigenvalue vector must be nonempty")
    if not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalue vector must be finite")
    return lam


def elementary_all(lam, kmax=None):
    """All elementary symmetric functions e_0, ..., e_kmax of lam.

    One pass over the entries, updating the coefficient array downward in
    degree (the Newton/Horner update for prod (1 + lam_i t)).  Returns a
    float array of length kmax + 1 with e_0 = 1.
    """
    lam = _as_eigenvector(lam)
    n = lam.size
    if kmax is None:
        kmax = n
    e = np.zeros(kmax + 1)
    e[0] = 1.0
    for i, x in enumerate(lam):
        top = min(i + 1, kmax)
        e[1:top + 1] += x * e[0:top]
    return e


def sigma(k, lam):
    """k-th elementary symmetric function of the eigenvalue vector lam."""
    lam = _as_eigenvector(lam)
    n = lam.size
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range 1..{n}")
    return float(elementary_all(lam, k)[k])


def n_k(n, k):
    """Normalization 2^{-k} binom(n, k), equal to sigma(k, (1/2,...,1/2))."""
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range 1..{n}")
    return math.comb(n, k) / 2.0 ** k


def sigma_grad(k, lam):
    """Gradient of sigma(k, .): component i is sigma_{k-1} with entry i deleted.

    For lam in Gamma_k every component is positive (ellipticity of the
    operator); the property suite checks this on random cone samples.
    Deletion is done literally, which is O(n^2 k) but transparent; the
    vectors here never exceed a few dozen entries.
    """
    lam = _as_eigenvector(lam)
    n = lam.size
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range 1..{n}")
    if k == 1:
        return np.ones(n)
    grad = np.empty(n)
    for i in range(n):
        reduced = np.delete(lam, i)
        grad[i] = elementary_all(reduced, k - 1)[k - 1]
    return grad


def in_gamma(k, lam, tol=1e-10):
    """Whether sigma_j(lam) > -tol for all j = 1..k.

    tol = 0 tests the open cone Gamma_k; tol > 0 admits the closure, which
    is how the discrete admissibility checks on converged solutions are run.
    """
    lam = _as_eigenvector(lam)
    n = lam.size
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range 1..{n}")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    e = elementary_all(lam, k)
    return bool(np.all(e[1:k + 1] > -tol))


def tangential_trace(M, m):
    """Sum_ij M_ij (delta_ij - m_i m_j) = trace(M) - m^T M m for unit m.

    This is the trace of M restricted to the hyperplane orthogonal to m.
    It is >= 0 whenever the eigenvalues of M lie in the closed Gamma_2 cone,
    which is what makes the mean-curvature obstruction work.
    """
    M = np.asarray(M, dtype=float)
    m = np.asarray(m, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be a square matrix")
    if not np.array_equal(M, M.T):
        raise ValueError("M must be symmetric as stored")
    if m.shape != (M.shape[0],):
        raise ValueError("m must be a vector of matching dimension")
    if abs(np.dot(m, m) - 1.0) > 1e-12:
        raise ValueError("m must be a unit vector (within 1e-12)")
    return float(np.trace(M) - m @ M @ m)
