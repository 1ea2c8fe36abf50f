"""Gaussian reductions as finite-dimensional matrix optimizations.

Objective (nats):

    F0(S) = h(N(0,S)) - sum_j c_j h(N(0, B_j S B_j' + N_j)) - c0 tr(M S)

maximized over covariance caps {0 <= S <= cap} by projected gradient ascent,
plus the closed-form consequences built on it: Brascamp-Lieb constants for
Gaussian/Lebesgue references, common information of dependent Gaussians via
an interior-point log-det program, the Gaussian hypercontractivity region
(an eigenvalue test), key-generation and common-randomness rate regions, the
quadratic transportation-cost margin, and the Gaussian-restricted
forward-reverse functional.

Means never enter any objective here (translation invariance), so all
solvers work on covariances and zero means are canonical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .measures import (
    GaussianChannel,
    GaussianMeasure,
    gaussian_entropy,
    gaussian_relative_entropy,
    w2_gaussian,
)
from .reports import MembershipReport

__all__ = [
    "GaussianF0Problem",
    "GaussianJointSource",
    "RegionPoint",
    "f0_gaussian",
    "f0_gradient",
    "maximize_f0",
    "gaussian_bl_constant",
    "wyner_ci",
    "gaussian_hc_member",
    "keygen_region_member",
    "keygen_region_trace",
    "cr_onecom_rates",
    "gaussian_t2_margin",
    "f_mixture_eval",
    "frbl_gaussian_value",
]

_RANK_CUTOFF = 1e-12


def _sym(a):
    return 0.5 * (a + a.T)


def _check_psd_matrix(a, what):
    a = _sym(np.asarray(a, dtype=float))
    eigs = np.linalg.eigvalsh(a)
    if eigs[0] < -1e-10 * max(abs(eigs[-1]), 1e-300):
        raise ValueError(f"{what} must be PSD")
    return a


class GaussianF0Problem:
    """Channels with weights, the quadratic penalty (c0, M), and an optional
    covariance cap for the constrained maximization."""

    def __init__(self, channels, c0=0.0, M=None, cap=None):
        if not channels:
            raise ValueError("need at least one channel")
        chans = []
        n = None
        for ch, c in channels:
            if not isinstance(ch, GaussianChannel):
                raise TypeError("channels must be GaussianChannel instances")
            if n is None:
                n = ch.n_in
            elif ch.n_in != n:
                raise ValueError("all channels must share the input dimension")
            c = float(c)
            if c < 0:
                raise ValueError("channel weights must be nonnegative")
            chans.append((ch, c))
        self.channels = chans
        self.n = n
        self.c0 = float(c0)
        if self.c0 < 0:
            raise ValueError("c0 must be nonnegative")
        self.M = np.zeros((n, n)) if M is None else _check_psd_matrix(M, "M")
        if self.M.shape != (n, n):
            raise ValueError("M dimension mismatch")
        self.cap = None if cap is None else _check_psd_matrix(cap, "cap")
        if self.cap is not None and self.cap.shape != (n, n):
            raise ValueError("cap dimension mismatch")

    def degenerate_channels(self):
        """Channels whose output covariance is singular for every input law
        (noise singular on the orthogonal complement of the image of B)."""
        out = []
        for j, (ch, _) in enumerate(self.channels):
            g = ch.B @ ch.B.T + ch.noise_cov
            eigs = np.linalg.eigvalsh(_sym(g))
            if eigs[0] <= _RANK_CUTOFF * max(eigs[-1], 1e-300):
                out.append(j)
        return out


def _logdet_psd(a):
    eigs = np.linalg.eigvalsh(_sym(a))
    cutoff = _RANK_CUTOFF * max(eigs[-1], 0.0)
    if eigs[0] <= cutoff:
        return -math.inf
    return float(np.log(eigs).sum())


def f0_gaussian(SigmaX, prob):
    """F0 at a Gaussian input with covariance SigmaX; -inf when singular."""
    S = _sym(np.asarray(SigmaX, dtype=float))
    if S.shape != (prob.n, prob.n):
        raise ValueError("SigmaX dimension mismatch")
    val = gaussian_entropy(S)
    if val == -math.inf:
        return -math.inf
    for ch, c in prob.channels:
        h = gaussian_entropy(ch.B @ S @ ch.B.T + ch.noise_cov)
        if h == -math.inf:
            return math.inf  # singular output escapes through -c*h
        val -= c * h
    val -= prob.c0 * float(np.sum(prob.M * S))
    return float(val)


def f0_gradient(SigmaX, prob):
    """Gradient of F0 in the symmetric parametrization:
    (1/2) S^-1 - sum_j (c_j/2) B_j' (B_j S B_j' + N_j)^-1 B_j - c0 M."""
    S = _sym(np.asarray(SigmaX, dtype=float))
    if S.shape != (prob.n, prob.n):
        raise ValueError("SigmaX dimension mismatch")
    g = 0.5 * np.linalg.inv(S)
    for ch, c in prob.channels:
        inner = ch.B @ S @ ch.B.T + ch.noise_cov
        g -= 0.5 * c * ch.B.T @ np.linalg.inv(inner) @ ch.B
    g -= prob.c0 * prob.M
    return _sym(g)


def _cap_transform(cap):
    """Square root and pseudo-inverse square root of the cap (restriction to
    its column space when rank-deficient)."""
    eigval, eigvec = np.linalg.eigh(_sym(cap))
    cutoff = _RANK_CUTOFF * max(eigval[-1], 0.0)
    keep = eigval > cutoff
    sq = eigvec[:, keep] * np.sqrt(eigval[keep])
    sq_pinv = eigvec[:, keep] / np.sqrt(eigval[keep])
    return sq, sq_pinv


def _project_cap(S, sq, sq_pinv):
    """Exact projection of S onto {0 <= T' <= I} in the cap-transformed
    metric, mapped back: eigenvalue clipping of sq_pinv' S sq_pinv."""
    T = _sym(sq_pinv.T @ S @ sq_pinv)
    w, V = np.linalg.eigh(T)
    w = np.clip(w, 0.0, 1.0)
    return _sym(sq @ (V * w) @ V.T @ sq.T)


def _ascend(prob, S0, sq, sq_pinv, max_iters=600, tol=1e-12):
    S = _project_cap(S0, sq, sq_pinv)
    val = f0_gaussian(S, prob)
    if not np.isfinite(val):
        # nudge into the relative interior of the cap
        S = _project_cap(0.25 * (sq @ sq.T) + 0.25 * S, sq, sq_pinv)
        val = f0_gaussian(S, prob)
        if not np.isfinite(val):
            return S, val
    step = 1.0
    for _ in range(max_iters):
        g = f0_gradient(S, prob)
        improved = False
        while step > 1e-18:
            S_new = _project_cap(S + step * g, sq, sq_pinv)
            v_new = f0_gaussian(S_new, prob)
            gain_ref = float(np.sum(g * (S_new - S)))
            if np.isfinite(v_new) and v_new >= val + 1e-4 * gain_ref:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        move = float(np.max(np.abs(S_new - S)))
        gain = v_new - val
        S, val = S_new, v_new
        step = min(step * 1.5, 1e6)
        if gain < tol and move < 1e-11 * (1.0 + float(np.max(np.abs(S)))):
            break
    return S, val


def maximize_f0(prob, n_starts=6, rng_seed=0, agreement_tol=1e-6):
    """Maximize F0 over {0 <= S <= cap} by multi-start projected gradient.

    In the non-degenerate case (all noise covariances invertible) the optimum
    is unique, and multi-start agreement within ``agreement_tol`` is asserted.
    Returns (SigmaX*, value).
    """
    if prob.cap is None:
        raise ValueError("maximize_f0 needs a covariance cap")
    if prob.degenerate_channels():
        return None, math.inf
    sq, sq_pinv = _cap_transform(prob.cap)
    if sq.shape[1] == 0:
        return np.zeros_like(prob.cap), -math.inf
    rng = np.random.default_rng(rng_seed)
    n = prob.n
    starts = [prob.cap, 0.5 * prob.cap, 0.1 * prob.cap]
    for _ in range(max(n_starts - 3, 0)):
        r = sq.shape[1]
        q, _ = np.linalg.qr(rng.normal(size=(r, r)))
        t = q @ (rng.uniform(0.05, 1.0, size=r)[:, None] * q.T)
        starts.append(_sym(sq @ t @ sq.T))
    results = [_ascend(prob, S0, sq, sq_pinv) for S0 in starts]
    vals = [v for _, v in results]
    best_idx = int(np.argmax(vals))
    S_best, v_best = results[best_idx]
    nondegenerate = all(ch.is_nondegenerate() for ch, _ in prob.channels)
    if nondegenerate and np.isfinite(v_best):
        finite = [v for v in vals if np.isfinite(v)]
        spread = max(finite) - min(finite)
        if spread > agreement_tol:
            # keep the best but make the disagreement visible
            import warnings

            warnings.warn(
                f"multi-start values disagree by {spread:.2e} in a "
                "non-degenerate instance",
                RuntimeWarning,
                stacklevel=2,
            )
    return S_best, float(v_best)


def gaussian_bl_constant(mu, channels, coefficients, rng_seed=0):
    """Best constant of the Gaussian-reference (or Lebesgue-reference)
    inequality: the common supremum over functions equals

        sup_S [ h(S) - sum_j c_j h(B_j S B_j' + N_j) - quadratic term ],

    with the reference folded into (M, c0).  Returns (value, SigmaX*).

    For a Gaussian reference the stationary covariance satisfies S <= cov,
    so the cap is exact.  For the Lebesgue reference the supremum is probed
    through an expanding sequence of caps; +inf is reported when the value
    keeps growing (degenerate/unbounded family).
    """
    chans = [(ch, float(c)) for ch, c in zip(channels, coefficients)]
    if isinstance(mu, str):
        if mu != "lebesgue":
            raise ValueError("reference must be a GaussianMeasure or 'lebesgue'")
        n = chans[0][0].n_in
        prob0 = GaussianF0Problem(chans)
        if prob0.degenerate_channels():
            return math.inf, None
        scale = 1.0
        prev = None
        S_best = None
        for cap_mult in (1.0, 1e2, 1e4, 1e6):
            prob = GaussianF0Problem(chans, cap=cap_mult * scale * np.eye(n))
            S_best, val = maximize_f0(prob, rng_seed=rng_seed)
            if prev is not None and val - prev <= 1e-7:
                return float(val), S_best
            prev = val
        growth = val - prev if prev is not None else math.inf
        if growth > 1e-3:
            return math.inf, None
        return float(val), S_best
    if not isinstance(mu, GaussianMeasure):
        raise ValueError("reference must be a GaussianMeasure or 'lebesgue'")
    n = mu.dim
    eigs = np.linalg.eigvalsh(mu.cov)
    if eigs[0] <= _RANK_CUTOFF * max(eigs[-1], 1e-300):
        raise ValueError("Gaussian reference covariance must be invertible")
    M = 0.5 * np.linalg.inv(mu.cov)
    prob = GaussianF0Problem(chans, c0=1.0, M=_sym(M), cap=mu.cov)
    if prob.degenerate_channels():
        return math.inf, None
    S_best, val = maximize_f0(prob, rng_seed=rng_seed)
    shift = 0.5 * n * math.log(2 * math.pi) + 0.5 * _logdet_psd(mu.cov)
    return float(val - shift), S_best


# ---------------------------------------------------------------------------
# common information
# ---------------------------------------------------------------------------


def _wyner_barrier(Sigma_V, U, mu_b, lam0, newton_tol=1e-12, max_newton=100):
    """Maximize logdet A(lam) + mu_b [logdet(Sigma_V - A) + sum log lam] over
    lam > 0, where A(lam) = U' diag(lam) U on the restricted space."""
    lam = lam0.copy()

    def value(lam):
        A = _sym(U.T @ (lam[:, None] * U))
        la = _logdet_psd(A)
        lg = _logdet_psd(Sigma_V - A)
        if not np.isfinite(la) or not np.isfinite(lg) or np.any(lam <= 0):
            return -math.inf
        return la + mu_b * (lg + float(np.log(lam).sum()))

    for _ in range(max_newton):
        A = _sym(U.T @ (lam[:, None] * U))
        Ainv = np.linalg.inv(A)
        W = np.linalg.inv(_sym(Sigma_V - A))
        # per-coordinate quadratic forms u_i' Ainv u_j etc.
        GA = U @ Ainv @ U.T
        GW = U @ W @ U.T
        grad = np.diag(GA) - mu_b * np.diag(GW) + mu_b / lam
        hess = -(GA * GA.T) - mu_b * (GW * GW.T) - np.diag(mu_b / lam**2)
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        t = 1.0
        v0 = value(lam)
        while t > 1e-16 and value(lam + t * step) <= v0:
            t *= 0.5
        if t <= 1e-16:
            break
        lam = lam + t * step
        if float(np.max(np.abs(grad))) < newton_tol:
            break
    A = _sym(U.T @ (lam[:, None] * U))
    Ainv = np.linalg.inv(A)
    GA = U @ Ainv @ U.T
    W = np.linalg.inv(_sym(Sigma_V - A))
    GW = U @ W @ U.T
    residual = float(np.max(np.abs(np.diag(GA) - mu_b * np.diag(GW) + mu_b / lam)))
    return lam, residual


def wyner_ci(Sigma):
    """Common information of dependent Gaussian scalars with covariance Sigma:

        C = (1/2) inf { log(det Sigma / det Lambda) :
                        Lambda diagonal, 0 < Lambda <= Sigma },

    solved by barrier path-following (10 geometric stages, Newton steps).
    Zero-variance coordinates are deterministic and dropped; a singular
    covariance on the remaining coordinates is handled by restriction to its
    column space, as in the defining matrix formula.  Returns (C, Lambda*)
    with Lambda* a full-size diagonal PSD matrix.
    """
    Sigma = _check_psd_matrix(Sigma, "Sigma")
    m = Sigma.shape[0]
    diag = np.diag(Sigma)
    live = diag > 1e-14 * max(float(diag.max()), 1e-300)
    lam_full = np.zeros(m)
    if not np.any(live):
        return 0.0, np.zeros((m, m))
    S = Sigma[np.ix_(live, live)]
    k = S.shape[0]
    eigval, eigvec = np.linalg.eigh(S)
    cutoff = _RANK_CUTOFF * max(eigval[-1], 0.0)
    keep = eigval > cutoff
    r = int(keep.sum())
    # restricted representation: A(lam) = U' diag(lam) U with U (k x r)
    U = eigvec[:, keep]
    Sigma_V = np.diag(eigval[keep])
    lam = np.full(k, 0.5 * float(eigval[keep].min()))
    residual = math.inf
    for mu_b in np.geomspace(1.0, 1e-10, 10):
        lam, residual = _wyner_barrier(Sigma_V, U, mu_b, lam)
    A = _sym(U.T @ (lam[:, None] * U))
    C = 0.5 * (_logdet_psd(Sigma_V) - _logdet_psd(A))
    lam_full[np.where(live)[0]] = lam
    Lambda = np.diag(lam_full)
    wyner_ci.last_kkt_residual = residual  # exposed for diagnostics
    return float(max(C, 0.0)), Lambda


# ---------------------------------------------------------------------------
# hypercontractivity region (Gaussian)
# ---------------------------------------------------------------------------


def gaussian_hc_member(Sigma, p, tol=1e-9):
    """Exponent tuple membership for a Gaussian law with correlation matrix
    Sigma: member iff diag(p) - Sigma is PSD.  The reported margin is the
    minimum eigenvalue of diag(p) - Sigma (member iff margin >= -tol)."""
    Sigma = _check_psd_matrix(Sigma, "Sigma")
    if np.max(np.abs(np.diag(Sigma) - 1.0)) > 1e-9:
        raise ValueError("Sigma must be in correlation form (unit diagonal)")
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != Sigma.shape[0]:
        raise ValueError("exponent vector length mismatch")
    margin = float(np.linalg.eigvalsh(np.diag(p) - Sigma)[0])
    return MembershipReport(
        member=bool(margin >= -tol),
        margin=margin,
        certified=True,
        details={"p": p.tolist()},
    )


# ---------------------------------------------------------------------------
# key generation and common randomness rate regions
# ---------------------------------------------------------------------------


@dataclass
class RegionPoint:
    rates: tuple
    witness: np.ndarray | None
    feasible: bool
    margin: float
    details: dict = field(default_factory=dict)


def _keygen_margin_at(Sigma, A, T, R, Rlist):
    T = _sym(T)
    w = np.linalg.eigvalsh(T)
    if w[0] < -1e-12 or w[-1] > 1 + 1e-12:
        return -math.inf
    det_t = float(np.prod(np.clip(w, 0.0, 1.0)))
    if det_t <= 0:
        return -math.inf
    Sp = A @ T @ A.T
    r = -0.5 * math.log(det_t)
    margin = r - R
    for l, Rl in enumerate(Rlist):
        sl = float(Sp[l, l])
        if sl <= 0:
            return -math.inf
        margin = min(margin, Rl - r + 0.5 * math.log(Sigma[l, l] / sl))
    return margin


def _sqrt_pd(Sigma):
    w, V = np.linalg.eigh(_sym(Sigma))
    if w[0] <= 0:
        raise ValueError("Sigma must be positive definite")
    return V @ (np.sqrt(w)[:, None] * V.T)


def keygen_margin_grid(Sigma, R, Rlist, step=0.01):
    """Grid oracle for the m=2 key-generation region: the best membership
    margin over the normalized 3-parameter cone {0 <= T <= I}."""
    Sigma = _check_psd_matrix(Sigma, "Sigma")
    if Sigma.shape[0] != 2:
        raise ValueError("the grid oracle is for m = 2")
    A = _sqrt_pd(Sigma)
    t = np.arange(0.0, 1.0 + step / 2, step)
    w = np.arange(-1.0, 1.0 + step / 2, step)
    t11, t22, ww = np.meshgrid(t, t, w, indexing="ij")
    bound = np.minimum(np.sqrt(t11 * t22), np.sqrt((1 - t11) * (1 - t22)))
    t12 = ww * bound
    det_t = t11 * t22 - t12**2
    s11 = A[0, 0] ** 2 * t11 + 2 * A[0, 0] * A[0, 1] * t12 + A[0, 1] ** 2 * t22
    s22 = A[1, 0] ** 2 * t11 + 2 * A[1, 0] * A[1, 1] * t12 + A[1, 1] ** 2 * t22
    with np.errstate(divide="ignore", invalid="ignore"):
        r = -0.5 * np.log(det_t)
        margin = r - R
        margin = np.minimum(
            margin, Rlist[0] - r + 0.5 * np.log(Sigma[0, 0] / s11)
        )
        margin = np.minimum(
            margin, Rlist[1] - r + 0.5 * np.log(Sigma[1, 1] / s22)
        )
    margin = np.where(det_t > 0, margin, -np.inf)
    idx = np.unravel_index(np.nanargmax(margin), margin.shape)
    T = np.array(
        [
            [t11[idx], t12[idx]],
            [t12[idx], t22[idx]],
        ]
    )
    return float(margin[idx]), T


def keygen_region_member(Sigma, R, Rlist, tol=1e-6, step=0.01, rng_seed=0):
    """Decide membership of (R, R_1, ..., R_m) in the key-generation region
    (closure) of a non-degenerate Gaussian source.

    m = 2 is certified: exhaustive 3-parameter grid plus local polish.  For
    m >= 3 the search is multi-start local ascent only, flagged heuristic.
    Returns (MembershipReport, RegionPoint).
    """
    Sigma = _check_psd_matrix(Sigma, "Sigma")
    m = Sigma.shape[0]
    if np.linalg.eigvalsh(Sigma)[0] <= 0:
        raise ValueError("Sigma must be positive definite")
    Rlist = [float(x) for x in Rlist]
    if len(Rlist) != m:
        raise ValueError("need one communication rate per terminal")
    A = _sqrt_pd(Sigma)
    certified = m == 2
    best_margin = -math.inf
    best_T = None
    if certified:
        best_margin, best_T = keygen_margin_grid(Sigma, R, Rlist, step=step)

        def neg(params):
            a, b, wv = params
            a, b = np.clip(a, 0.0, 1.0), np.clip(b, 0.0, 1.0)
            wv = np.clip(wv, -1.0, 1.0)
            bound = min(math.sqrt(a * b), math.sqrt((1 - a) * (1 - b)))
            T = np.array([[a, wv * bound], [wv * bound, b]])
            v = _keygen_margin_at(Sigma, A, T, R, Rlist)
            return -v if np.isfinite(v) else 1e9

        x0 = np.array(
            [best_T[0, 0], best_T[1, 1],
             best_T[0, 1] / max(
                 min(math.sqrt(best_T[0, 0] * best_T[1, 1]),
                     math.sqrt((1 - best_T[0, 0]) * (1 - best_T[1, 1]))), 1e-12)]
        )
        res = minimize(neg, x0, method="Nelder-Mead",
                       options={"maxfev": 800, "fatol": 1e-13, "xatol": 1e-12})
        if -res.fun > best_margin:
            best_margin = -float(res.fun)
            a, b, wv = res.x
            a, b = np.clip(a, 0.0, 1.0), np.clip(b, 0.0, 1.0)
            wv = np.clip(wv, -1.0, 1.0)
            bound = min(math.sqrt(a * b), math.sqrt((1 - a) * (1 - b)))
            best_T = np.array([[a, wv * bound], [wv * bound, b]])
    else:
        rng = np.random.default_rng(rng_seed)
        dim = m * (m + 1) // 2
        iu = np.triu_indices(m)

        def unpack(theta):
            Sym = np.zeros((m, m))
            Sym[iu] = theta
            Sym = _sym(Sym + Sym.T - np.diag(np.diag(Sym)))
            w, V = np.linalg.eigh(Sym)
            return V @ (np.clip(w, 0.0, 1.0)[:, None] * V.T)

        def neg(theta):
            v = _keygen_margin_at(Sigma, A, unpack(theta), R, Rlist)
            return -v if np.isfinite(v) else 1e9

        for alpha in (0.9, 0.5, 0.2, 0.05):
            theta0 = (alpha * np.eye(m))[iu]
            res = minimize(neg, theta0, method="Nelder-Mead",
                           options={"maxfev": 2000})
            if -res.fun > best_margin:
                best_margin, best_T = -float(res.fun), unpack(res.x)
        for _ in range(6):
            theta0 = rng.uniform(-0.3, 0.8, size=dim)
            res = minimize(neg, theta0, method="Nelder-Mead",
                           options={"maxfev": 2000})
            if -res.fun > best_margin:
                best_margin, best_T = -float(res.fun), unpack(res.x)
    witness = None if best_T is None else _sym(A @ best_T @ A.T)
    member = bool(best_margin >= -tol)
    report = MembershipReport(
        member=member,
        margin=float(best_margin),
        certified=certified,
        details={"R": R, "Rlist": Rlist},
    )
    point = RegionPoint(
        rates=(float(R), *Rlist),
        witness=witness,
        feasible=member,
        margin=float(best_margin),
    )
    return report, point


def keygen_region_trace(Sigma, n_samples=30, seed=0):
    """Sample achievable (R, R_l) tuples from structured witness families:
    scaled copies of Sigma, diagonal congruences, and random PSD
    interpolants.  Deterministic under the seed."""
    Sigma = _check_psd_matrix(Sigma, "Sigma")
    m = Sigma.shape[0]
    if np.linalg.eigvalsh(Sigma)[0] <= 0:
        raise ValueError("Sigma must be positive definite")
    A = _sqrt_pd(Sigma)
    rng = np.random.default_rng(seed)
    Ts = []
    n_alpha = max(n_samples // 3, 1)
    for alpha in np.linspace(1.0, 0.05, n_alpha):
        Ts.append(alpha * np.eye(m))
    n_diag = max(n_samples // 3, 1)
    for _ in range(n_diag):
        Ts.append(np.diag(rng.uniform(0.05, 1.0, size=m)))
    while len(Ts) < n_samples:
        q, _ = np.linalg.qr(rng.normal(size=(m, m)))
        Ts.append(q @ (rng.uniform(0.05, 1.0, size=m)[:, None] * q.T))
    points = []
    for T in Ts[:n_samples]:
        T = _sym(T)
        Sp = _sym(A @ T @ A.T)
        det_t = float(np.prod(np.clip(np.linalg.eigvalsh(T), 1e-300, None)))
        r = -0.5 * math.log(det_t)
        rl = [
            r - 0.5 * math.log(float(Sigma[l, l]) / float(Sp[l, l]))
            for l in range(m)
        ]
        points.append(
            RegionPoint(
                rates=(r, *rl),
                witness=Sp,
                feasible=True,
                margin=0.0,
                details={"family": "trace"},
            )
        )
    return points


class GaussianJointSource:
    """Jointly Gaussian stacked vector with named blocks.

    ``blocks`` is an ordered list of (name, index list); the first block is
    the component observed by the communicator.
    """

    def __init__(self, Sigma, blocks):
        self.Sigma = _check_psd_matrix(Sigma, "Sigma")
        n = self.Sigma.shape[0]
        seen = []
        self.blocks = []
        for name, idx in blocks:
            idx = [int(i) for i in idx]
            seen.extend(idx)
            self.blocks.append((str(name), idx))
        if sorted(seen) != list(range(n)):
            raise ValueError("blocks must partition the index set")

    def block(self, k):
        return self.blocks[k][1]


def cr_onecom_rates(joint, SigmaPrime):
    """Rates of the one-communicator common-randomness region at the witness
    conditional covariance SigmaPrime = Sigma_{Z|U}:

        R   = (1/2) log(det Sigma_Z / det Sigma'),
        R_l = R - I(U; X_l),

    with I(U; X_l) from the jointly-Gaussian conditioning identity."""
    z_idx = joint.block(0)
    Sz = joint.Sigma[np.ix_(z_idx, z_idx)]
    Sp = _check_psd_matrix(SigmaPrime, "SigmaPrime")
    if Sp.shape != Sz.shape:
        raise ValueError("SigmaPrime dimension mismatch")
    slack = np.linalg.eigvalsh(Sz - Sp)
    if slack[0] < -1e-9 * max(float(np.max(np.abs(Sz))), 1e-300):
        raise ValueError("SigmaPrime must satisfy SigmaPrime <= Sigma_Z")
    ld_z = _logdet_psd(Sz)
    ld_p = _logdet_psd(Sp)
    R = 0.5 * (ld_z - ld_p) if np.isfinite(ld_p) else math.inf
    Sz_inv = np.linalg.inv(Sz)
    gap = Sz_inv @ (Sz - Sp) @ Sz_inv
    rates = []
    for name, idx in joint.blocks[1:]:
        Sl = joint.Sigma[np.ix_(idx, idx)]
        Clz = joint.Sigma[np.ix_(idx, z_idx)]
        cond = _sym(Sl - Clz @ gap @ Clz.T)
        il = 0.5 * (_logdet_psd(Sl) - _logdet_psd(cond))
        rates.append(R - il)
    return float(R), [float(x) for x in rates]


# ---------------------------------------------------------------------------
# T2 margin, mixtures, forward-reverse Gaussian functional
# ---------------------------------------------------------------------------


def gaussian_t2_margin(P, lam=1.0):
    """2 lam D(P || N(0,I)) - W2(P, N(0,I))^2; nonnegative for lam >= 1."""
    ref = GaussianMeasure.standard(P.dim)
    dv = gaussian_relative_entropy(P, ref)
    w2 = w2_gaussian(P, ref)
    return float(2.0 * lam * dv - w2**2)


def f_mixture_eval(components, prob):
    """Conditional-entropy objective for a finite Gaussian mixture:

        F = sum_u w_u [ h(S_u) - sum_j c_j h(B_j S_u B_j' + N_j) ]
            - c0 tr(M * sum_u w_u S_u).

    Component means never enter (conditional entropies are translation
    blind; the trace penalty uses the conditional covariance).
    """
    weights = np.array([w for w, _ in components], dtype=float)
    if abs(weights.sum() - 1.0) > 1e-9 or np.any(weights < 0):
        raise ValueError("mixture weights must be a probability vector")
    val = 0.0
    Sbar = np.zeros((prob.n, prob.n))
    for w, g in components:
        if g.dim != prob.n:
            raise ValueError("component dimension mismatch")
        Sbar += w * g.cov
        if w == 0:
            continue
        term = gaussian_entropy(g.cov)
        for ch, c in prob.channels:
            term -= c * gaussian_entropy(ch.B @ g.cov @ ch.B.T + ch.noise_cov)
        val += w * term
    val -= prob.c0 * float(np.sum(prob.M * Sbar))
    return float(val)


def _dykstra_project(S, sigma2, iters=200, tol=1e-12):
    """Projection onto {PSD} cut with {fixed diagonal sigma2} by Dykstra's
    alternating corrections."""
    X = _sym(S)
    p = np.zeros_like(X)
    q = np.zeros_like(X)
    for _ in range(iters):
        w, V = np.linalg.eigh(X + p)
        Y = V @ (np.clip(w, 0.0, None)[:, None] * V.T)
        p = X + p - Y
        Z = Y + q
        Xn = Z.copy()
        Xn[np.diag_indices_from(Xn)] = sigma2
        q = Z - Xn
        if float(np.max(np.abs(Xn - X))) < tol:
            X = Xn
            break
        X = Xn
    return _sym(X)


def frbl_gaussian_value(marginal_vars, channels, c, b, max_iters=400):
    """Gaussian-restricted forward-reverse value at fixed scalar marginals:

        inf over coupling covariances Sigma (PSD, diag = marginal_vars) of
            sum_j c_j D(Y_j || Lebesgue)  -  sum_i b_i D(N(0,s_i) || N(0,1)),

    where D(Y_j || Lebesgue) = -h(B_j Sigma B_j' + N_j).  The inner problem
    is a concave log-det maximization over the fixed-diagonal spectrahedron,
    solved by projected gradient (Dykstra projection).  A channel whose
    output is singular for every coupling makes the value +inf (flagged
    degenerate family).
    """
    s2 = np.asarray(marginal_vars, dtype=float).reshape(-1)
    if np.any(s2 <= 0):
        raise ValueError("marginal variances must be positive")
    l = s2.size
    chans = [(ch, float(cj)) for ch, cj in zip(channels, c)]
    for ch, _ in chans:
        if ch.n_in != l:
            raise ValueError("channel input dimension must match the marginals")
    b = [float(x) for x in b]
    if len(b) != l:
        raise ValueError("need one reverse coefficient per marginal")

    penalty = sum(bi * 0.5 * (si - 1.0 - math.log(si)) for bi, si in zip(b, s2))

    def entropy_sum(S):
        tot = 0.0
        for ch, cj in chans:
            h = gaussian_entropy(ch.B @ S @ ch.B.T + ch.noise_cov)
            if h == -math.inf:
                return -math.inf
            tot += cj * h
        return tot

    def grad(S):
        g = np.zeros((l, l))
        for ch, cj in chans:
            inner = ch.B @ S @ ch.B.T + ch.noise_cov
            g += 0.5 * cj * ch.B.T @ np.linalg.inv(inner) @ ch.B
        return _sym(g)

    if l == 1:
        S = np.array([[s2[0]]])
        hs = entropy_sum(S)
        return math.inf if hs == -math.inf else float(-hs - penalty)

    S = np.diag(s2)
    val = entropy_sum(S)
    if val == -math.inf:
        return math.inf
    step = 1.0
    for _ in range(max_iters):
        g = grad(S)
        improved = False
        while step > 1e-18:
            S_new = _dykstra_project(S + step * g, s2)
            v_new = entropy_sum(S_new)
            if np.isfinite(v_new) and v_new >= val + 1e-6 * step * float(np.sum(g * g)):
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        gain = v_new - val
        S, val = S_new, v_new
        step = min(step * 1.5, 1e3)
        if gain < 1e-13:
            break
    return float(-val - penalty)
