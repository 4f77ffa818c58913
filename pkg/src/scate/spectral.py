"""Eigendecomposition, truncated randomized SVD, and the decay-exponent fit.

Dense paths rely on LAPACK via numpy; the randomized range finder follows
Halko/Martinsson/Tropp with Gaussian test vectors, an oversample margin and
re-orthonormalized power iterations.  Sign convention everywhere: each
eigen/left-singular vector is flipped so its largest-magnitude entry is
positive (right singular vectors flip in tandem to keep U Σ Vᵀ intact).
"""

from dataclasses import dataclass

import numpy as np

from .errors import (ConvergenceFailure, NotSymmetric, RankTooLarge,
                     RequiresFullSpectrum, TooFewPositive)
from .rng import SplitMix64, derive


@dataclass
class EigenDecomposition:
    eigenvalues: np.ndarray   # descending
    eigenvectors: np.ndarray  # columns, orthonormal
    rank_full: int            # N; len(eigenvalues) < rank_full means truncated


@dataclass
class SvdTriplet:
    u: np.ndarray
    sigma: np.ndarray         # descending, nonnegative
    v: np.ndarray
    rank_full: int            # min(shape) of the decomposed matrix


@dataclass
class DecayFit:
    beta: float
    intercept: float
    r2: float
    n_points: int


def _fix_signs(U, V=None):
    """Largest-|entry| of each U column made positive; V flipped in tandem."""
    idx = np.argmax(np.abs(U), axis=0)
    flip = U[idx, np.arange(U.shape[1])] < 0.0
    U[:, flip] *= -1.0
    if V is not None:
        V[:, flip] *= -1.0


def _check_orthonormal(M, tol, what):
    G = M.T @ M
    err = np.abs(G - np.eye(M.shape[1])).max()
    if err > tol:
        raise ConvergenceFailure(f"{what} orthonormality off by {err:.3e}")


def _check_eigen_residuals(K, w, V, lam1):
    """Rayleigh residuals ||K v - w v|| <= 1e-6 * max(lam1, 1), checked per
    cluster: near-degenerate eigenvalues (gap < 1e-10*lam1) only pin down
    the invariant subspace, so the residual compares K V_c against V_c M_c.
    """
    tol = 1e-6 * max(lam1, 1.0)
    gap = 1e-10 * max(lam1, 1.0)
    KV = K @ V
    i = 0
    while i < w.shape[0]:
        j = i + 1
        while j < w.shape[0] and abs(w[j - 1] - w[j]) < gap:
            j += 1
        Vc, KVc = V[:, i:j], KV[:, i:j]
        Mc = Vc.T @ KVc
        resid = np.linalg.norm(KVc - Vc @ Mc) / max(np.sqrt(j - i), 1.0)
        if resid > tol:
            raise ConvergenceFailure(
                f"eigenpair block {i}:{j} residual {resid:.3e} > {tol:.3e}")
        i = j


def eig_sym(K, p=None, dense_cutoff=2000, seed=0):
    """Descending eigendecomposition of a symmetric matrix.

    p=None computes the full spectrum (always dense).  With p set and
    N > dense_cutoff, a randomized subspace iteration approximates the top
    p pairs instead; rank_full still records N so downstream consumers can
    tell the spectrum is truncated.
    """
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    if K.ndim != 2 or K.shape[1] != n:
        raise NotSymmetric("matrix is not square")
    asym = np.abs(K - K.T).max()
    if asym > 1e-10:
        raise NotSymmetric(f"asymmetry {asym:.3e}")
    if p is not None and not 1 <= p <= n:
        raise RankTooLarge(f"p={p} outside 1..{n}")
    M = (K + K.T) / 2.0
    if p is None or n <= dense_cutoff:
        try:
            w, V = np.linalg.eigh(M)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceFailure(str(exc)) from exc
        w = w[::-1].copy()
        V = np.ascontiguousarray(V[:, ::-1])
        if p is not None:
            w, V = w[:p].copy(), np.ascontiguousarray(V[:, :p])
    else:
        w, V = _randomized_eigh(M, p, seed)
    _fix_signs(V)
    _check_orthonormal(V, 1e-8, "eigenvector")
    _check_eigen_residuals(M, w, V, abs(w[0]))
    return EigenDecomposition(w, V, n)


def _randomized_eigh(M, p, seed, oversample=10, power_iters=4):
    n = M.shape[0]
    ell = min(p + oversample, n)
    rng = SplitMix64(derive(seed, "rsvd"))
    Omega = rng.normal(n * ell).reshape(n, ell)
    Q, _ = np.linalg.qr(M @ Omega)
    for _ in range(power_iters):
        Q, _ = np.linalg.qr(M @ Q)
    small = Q.T @ (M @ Q)
    small = (small + small.T) / 2.0
    w, U = np.linalg.eigh(small)
    order = np.argsort(w)[::-1][:p]
    return w[order].copy(), np.ascontiguousarray(Q @ U[:, order])


def svd_trunc(S, P, oversample=10, power_iters=4, seed=0):
    """Rank-P randomized SVD of a (possibly rectangular) matrix."""
    S = np.asarray(S, dtype=np.float64)
    n_min = min(S.shape)
    if not 1 <= P <= n_min:
        raise RankTooLarge(f"P={P} outside 1..{n_min}")
    if P + oversample > n_min:
        raise RankTooLarge(
            f"P + oversample = {P + oversample} exceeds min(shape) = {n_min}")
    ell = P + oversample
    rng = SplitMix64(derive(seed, "rsvd"))
    Omega = rng.normal(S.shape[1] * ell).reshape(S.shape[1], ell)
    Q, _ = np.linalg.qr(S @ Omega)
    for _ in range(power_iters):
        Z, _ = np.linalg.qr(S.T @ Q)
        Q, _ = np.linalg.qr(S @ Z)
    B = Q.T @ S
    try:
        Ub, sig, Vt = np.linalg.svd(B, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    U = np.ascontiguousarray((Q @ Ub)[:, :P])
    sig = sig[:P].copy()
    V = np.ascontiguousarray(Vt.T[:, :P])
    _fix_signs(U, V)
    _check_orthonormal(U, 1e-6, "left singular vector")
    _check_orthonormal(V, 1e-6, "right singular vector")
    return SvdTriplet(U, sig, V, n_min)


def svd_dense(S):
    """Exact full SVD, same conventions; reference path for small matrices."""
    S = np.asarray(S, dtype=np.float64)
    try:
        U, sig, Vt = np.linalg.svd(S, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    U = np.ascontiguousarray(U)
    V = np.ascontiguousarray(Vt.T)
    _fix_signs(U, V)
    return SvdTriplet(U, sig.copy(), V, min(S.shape))


def decay_fit(eigenvalues, top_m=100):
    """OLS fit of log lambda_i on log i over the top_m spectrum head.

    Entries <= 0 or below 1e-14 * lambda_1 are trimmed (machine-noise tail);
    at least three points must survive.  beta is the negated slope.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    m = min(top_m, lam.shape[0])
    lam = lam[:m]
    if lam.shape[0] == 0 or lam[0] <= 0.0:
        raise TooFewPositive("no positive leading eigenvalue")
    keep = lam > max(1e-14 * lam[0], 0.0)
    if keep.sum() < 3:
        raise TooFewPositive(f"only {int(keep.sum())} usable eigenvalues")
    ranks = np.arange(1, m + 1, dtype=np.float64)[keep]
    x = np.log(ranks)
    yv = np.log(lam[keep])
    xc = x - x.mean()
    slope = float(xc @ yv) / float(xc @ xc)
    intercept = float(yv.mean() - slope * x.mean())
    ss_res = float(((yv - (intercept + slope * x)) ** 2).sum())
    ss_tot = float(((yv - yv.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(-slope, intercept, r2, int(keep.sum()))


def eckart_young_error(decomp, P):
    """Frobenius error of the best rank-P approximation: sqrt of the summed
    squared trailing spectrum.  Requires the full spectrum."""
    if isinstance(decomp, EigenDecomposition):
        spectrum = decomp.eigenvalues
    else:
        spectrum = decomp.sigma
    if spectrum.shape[0] < decomp.rank_full:
        raise RequiresFullSpectrum(
            f"have {spectrum.shape[0]} of {decomp.rank_full} values")
    if not 0 <= P <= decomp.rank_full:
        raise RankTooLarge(f"P={P} outside 0..{decomp.rank_full}")
    tail = spectrum[P:]
    return float(np.sqrt((tail * tail).sum()))
