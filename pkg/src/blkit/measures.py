"""Finite-alphabet and Gaussian measure types plus the information functionals
used throughout the package.

All entropies and divergences are in nats.  Zero-mass conventions are exact
(0*log 0 = 0, 0*log(0/0) = 0); absolute-continuity failures yield +inf.  No
epsilon-smoothing happens here -- smoothing, where needed, is a solver-level
concern.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "DiscreteMeasure",
    "DiscreteDistribution",
    "Kernel",
    "CostFunction",
    "GaussianMeasure",
    "GaussianChannel",
    "relative_entropy",
    "pushforward",
    "renyi_divergence",
    "weighted_norm",
    "gaussian_entropy",
    "gaussian_relative_entropy",
    "gaussian_pushforward",
    "w2_gaussian",
]

_SUM_TOL = 1e-12
_PSD_REL_TOL = 1e-10
_RANK_CUTOFF = 1e-12


def _as_weights(w):
    arr = np.asarray(w, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"weight vector must be 1-D, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError("alphabet must have size >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError("weights must be finite")
    if np.any(arr < 0):
        raise ValueError("weights must be nonnegative")
    return arr


class DiscreteMeasure:
    """Nonnegative (possibly unnormalized) mass vector over a finite alphabet."""

    def __init__(self, weights):
        w = _as_weights(weights)
        if not np.any(w > 0):
            raise ValueError("measure must carry positive mass somewhere")
        self.weights = w
        self.weights.flags.writeable = False

    @property
    def n(self):
        return self.weights.size

    def total(self):
        return float(self.weights.sum())

    def normalized(self):
        """The probability vector proportional to this measure."""
        return DiscreteDistribution(self.weights / self.weights.sum())

    def __repr__(self):
        return f"{type(self).__name__}({np.array2string(self.weights, precision=6)})"


class DiscreteDistribution(DiscreteMeasure):
    """Probability vector: nonnegative weights summing to 1 within 1e-12."""

    def __init__(self, weights):
        super().__init__(weights)
        s = self.weights.sum()
        if abs(s - 1.0) > _SUM_TOL:
            raise ValueError(f"probabilities must sum to 1 +- 1e-12, got {s!r}")


class Kernel:
    """Row-stochastic matrix: a random transformation between finite alphabets."""

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("kernel must be a 2-D matrix")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("kernel entries must be finite and nonnegative")
        rows = m.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > _SUM_TOL):
            raise ValueError("kernel rows must sum to 1 +- 1e-12")
        self.matrix = m
        self.matrix.flags.writeable = False

    @property
    def n_in(self):
        return self.matrix.shape[0]

    @property
    def n_out(self):
        return self.matrix.shape[1]

    @staticmethod
    def identity(n):
        return Kernel(np.eye(n))

    @staticmethod
    def bsc(delta):
        """Binary symmetric channel with crossover probability ``delta``."""
        return Kernel([[1 - delta, delta], [delta, 1 - delta]])

    def __repr__(self):
        return f"Kernel({self.n_in}x{self.n_out})"


class CostFunction:
    """Per-symbol cost in nats; entries in (-inf, +inf], at least one finite."""

    def __init__(self, values):
        v = np.asarray(values, dtype=float)
        if v.ndim != 1:
            raise ValueError("cost must be a 1-D vector")
        if np.any(np.isnan(v)) or np.any(v == -np.inf):
            raise ValueError("cost entries must lie in (-inf, +inf]")
        if not np.any(np.isfinite(v)):
            raise ValueError("cost must be finite somewhere")
        self.values = v
        self.values.flags.writeable = False

    @property
    def n(self):
        return self.values.size

    @staticmethod
    def zero(n):
        return CostFunction(np.zeros(n))


def _check_same_alphabet(a, b):
    if a.size != b.size:
        raise ValueError(f"alphabet sizes differ: {a.size} vs {b.size}")


def relative_entropy(P, mu):
    """D(P || mu) = sum_x P(x) log(P(x)/mu(x)) in nats; +inf unless P << mu."""
    p = P.weights if isinstance(P, DiscreteMeasure) else _as_weights(P)
    m = mu.weights if isinstance(mu, DiscreteMeasure) else _as_weights(mu)
    _check_same_alphabet(p, m)
    supp = p > 0
    if np.any(m[supp] == 0):
        return math.inf
    ps = p[supp]
    return float(np.dot(ps, np.log(ps / m[supp])))


def pushforward(P, K):
    """Marginalize P through the kernel K: output(y) = sum_x P(x) K(x, y)."""
    p = P.weights if isinstance(P, DiscreteMeasure) else _as_weights(P)
    if p.size != K.n_in:
        raise ValueError(f"dimension mismatch: P has {p.size}, kernel expects {K.n_in}")
    out = p @ K.matrix
    if isinstance(P, DiscreteDistribution):
        # row-stochasticity preserves total mass; renormalize roundoff only
        return DiscreteDistribution(out / out.sum())
    return DiscreteMeasure(out)


def renyi_divergence(Q, R, alpha):
    """Renyi divergence of order alpha in (0,1) or (1,inf), in nats.

    Uses the reference-measure-free form (1/(alpha-1)) log sum Q^alpha R^(1-alpha),
    which also applies to unnormalized measures.
    """
    if alpha == 1:
        raise ValueError("alpha=1 is the relative entropy; use relative_entropy")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    q = Q.weights if isinstance(Q, DiscreteMeasure) else _as_weights(Q)
    r = R.weights if isinstance(R, DiscreteMeasure) else _as_weights(R)
    _check_same_alphabet(q, r)
    if alpha > 1 and np.any(q[r == 0] > 0):
        return math.inf
    both = (q > 0) & (r > 0)
    if not np.any(both):
        # disjoint supports: the sum is 0
        return math.inf
    qs, rs = q[both], r[both]
    s = np.exp(alpha * np.log(qs) + (1 - alpha) * np.log(rs)).sum()
    return float(np.log(s) / (alpha - 1))


def weighted_norm(f, mu, p):
    """(sum_x mu(x) f(x)^p)^(1/p) for f >= 0; for p < 1 this is not a norm."""
    if p <= 0:
        raise ValueError("order p must be positive")
    fv = np.asarray(f, dtype=float)
    m = mu.weights if isinstance(mu, DiscreteMeasure) else _as_weights(mu)
    _check_same_alphabet(fv, m)
    if np.any(fv < 0) or np.any(np.isnan(fv)):
        raise ValueError("f must be nonnegative")
    s = float(np.dot(m, fv**p))
    if s == 0.0:
        return 0.0
    return s ** (1.0 / p)


# ---------------------------------------------------------------------------
# Gaussian carriers
# ---------------------------------------------------------------------------


def _symmetrize(a):
    return 0.5 * (a + a.T)


def _check_psd(cov, what="covariance"):
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"{what} must be a square matrix")
    asym = np.max(np.abs(cov - cov.T))
    scale = max(np.max(np.abs(cov)), 1.0)
    if asym > _PSD_REL_TOL * scale:
        raise ValueError(f"{what} is not symmetric (asymmetry {asym:g})")
    sym = _symmetrize(cov)
    eigs = np.linalg.eigvalsh(sym)
    spec = max(abs(eigs[0]), abs(eigs[-1]), 0.0)
    if eigs[0] < -_PSD_REL_TOL * max(spec, 1e-300):
        raise ValueError(f"{what} is not PSD (min eigenvalue {eigs[0]:g})")
    return sym


class GaussianMeasure:
    """Gaussian distribution given by (mean, PSD covariance).

    Matrices are symmetrized on ingestion; singular covariances are legal and
    handled downstream by restriction to the column space.
    """

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float).reshape(-1)
        self.cov = _check_psd(cov)
        if self.cov.shape[0] != self.mean.size:
            raise ValueError("mean and covariance dimensions differ")
        self.mean.flags.writeable = False
        self.cov.flags.writeable = False

    @property
    def dim(self):
        return self.mean.size

    @staticmethod
    def standard(n):
        return GaussianMeasure(np.zeros(n), np.eye(n))

    def __repr__(self):
        return f"GaussianMeasure(dim={self.dim})"


class GaussianChannel:
    """Affine-plus-noise map x -> B x + w with w ~ N(0, noise_cov)."""

    def __init__(self, B, noise_cov):
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.noise_cov = _check_psd(noise_cov, what="noise covariance")
        if self.noise_cov.shape[0] != self.B.shape[0]:
            raise ValueError("noise covariance and B output dimensions differ")
        self.B.flags.writeable = False
        self.noise_cov.flags.writeable = False

    @property
    def n_in(self):
        return self.B.shape[1]

    @property
    def n_out(self):
        return self.B.shape[0]

    def is_nondegenerate(self):
        """True when the additive noise has invertible covariance."""
        eigs = np.linalg.eigvalsh(self.noise_cov)
        return bool(eigs[0] > _RANK_CUTOFF * max(eigs[-1], 1e-300))


def gaussian_entropy(cov):
    """Differential entropy (1/2) log det(2 pi e cov) in nats; -inf if singular."""
    sym = _check_psd(cov)
    n = sym.shape[0]
    eigs = np.linalg.eigvalsh(sym)
    cutoff = _RANK_CUTOFF * max(eigs[-1], 0.0)
    if eigs[0] <= cutoff:
        return -math.inf
    return float(0.5 * (n * math.log(2 * math.pi * math.e) + np.log(eigs).sum()))


def _column_space(cov):
    """Orthonormal basis of the column space of a PSD matrix."""
    eigval, eigvec = np.linalg.eigh(cov)
    cutoff = _RANK_CUTOFF * max(eigval[-1], 0.0)
    keep = eigval > cutoff
    return eigvec[:, keep], eigval[keep]


def gaussian_relative_entropy(P, Q):
    """D(P || Q) for Gaussian P, Q in nats.

    A singular Q.cov is handled by restricting to its column space; P must
    live on that space (mean shift included) or the divergence is +inf.
    """
    if P.dim != Q.dim:
        raise ValueError("dimension mismatch")
    n = P.dim
    dm = P.mean - Q.mean
    basis, qeigs = _column_space(Q.cov)
    r = basis.shape[1]
    scale = max(float(np.max(np.abs(Q.cov))), float(np.max(np.abs(P.cov))), 1.0)
    if r < n:
        # component of P outside Q's support => not absolutely continuous
        resid_mean = dm - basis @ (basis.T @ dm)
        proj = P.cov - basis @ (basis.T @ P.cov)
        if np.max(np.abs(resid_mean)) > 1e-8 * math.sqrt(scale) or np.max(
            np.abs(proj)
        ) > 1e-10 * scale:
            return math.inf
    q_r = np.diag(qeigs)
    s_r = basis.T @ P.cov @ basis
    d_r = basis.T @ dm
    qinv = np.diag(1.0 / qeigs)
    sign, logdet_s = np.linalg.slogdet(s_r)
    if sign <= 0:
        return math.inf
    logdet_q = float(np.log(qeigs).sum())
    val = 0.5 * (
        float(np.trace(qinv @ s_r))
        + float(d_r @ qinv @ d_r)
        - r
        + logdet_q
        - logdet_s
    )
    return float(max(val, 0.0)) if abs(val) < 1e-12 else float(val)


def gaussian_pushforward(P, ch):
    """Image of a Gaussian measure under an affine-plus-noise channel."""
    if ch.n_in != P.dim:
        raise ValueError("dimension mismatch")
    mean = ch.B @ P.mean
    cov = ch.B @ P.cov @ ch.B.T + ch.noise_cov
    return GaussianMeasure(mean, cov)


def _psd_sqrt(a):
    eigval, eigvec = np.linalg.eigh(_symmetrize(a))
    eigval = np.clip(eigval, 0.0, None)
    return eigvec @ (np.sqrt(eigval)[:, None] * eigvec.T)


def w2_gaussian(P, Q):
    """Quadratic Wasserstein distance between two Gaussians (closed form)."""
    if P.dim != Q.dim:
        raise ValueError("dimension mismatch")
    sq = _psd_sqrt(Q.cov)
    cross = _psd_sqrt(sq @ P.cov @ sq)
    gap = float(np.trace(P.cov) + np.trace(Q.cov) - 2.0 * np.trace(cross))
    gap = max(gap, 0.0)
    d2 = float(np.sum((P.mean - Q.mean) ** 2)) + gap
    return math.sqrt(d2)
