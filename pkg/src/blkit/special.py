"""Executable specializations of the duality machinery: Renyi variational
slack and the log probability comparison bound, strong data processing
constants, Loomis-Whitney / Shearer checks, discrete hypercontractivity and
reverse hypercontractivity membership, and transportation-cost functional
checks on finite metric samples.

Slack functions return RHS - LHS of the inequality they verify, so
nonnegative (up to stated tolerance) means "holds".
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import logsumexp, xlogy

from .forward import (
    BASolverOptions,
    ForwardBLProblem,
    _batch_deficit,
    best_constant,
    simplex_grid,
)
from .frbl import FRBLProblem, _afw_minimize, best_frbl_constant
from .measures import (
    DiscreteDistribution,
    DiscreteMeasure,
    Kernel,
    pushforward,
    relative_entropy,
    renyi_divergence,
    weighted_norm,
)
from .reports import CheckReport, MembershipReport

__all__ = [
    "MetricSpaceSample",
    "renyi_variational_slack",
    "lpcb_slack",
    "sdpi_constant",
    "sdpi_functional_slack",
    "shearer_check",
    "hc_member_discrete",
    "rhc_member_discrete",
    "rhcn_member_discrete",
    "t2_functional_slack",
    "tp_functional_slack",
    "transport_vs_entropy",
]


# ---------------------------------------------------------------------------
# Renyi divergence variational formula and LPCB
# ---------------------------------------------------------------------------


def _log_mgf(measure_weights, exponent):
    """log sum_x w(x) exp(exponent(x)) computed stably."""
    with np.errstate(divide="ignore"):
        lw = np.log(measure_weights)
    return float(logsumexp(lw + exponent))


def renyi_variational_slack(Q, R, g, alpha):
    """RHS - LHS of the variational bound

        (1/(a-1)) log E_Q[e^{(a-1)g}] - (1/a) log E_R[e^{a g}]
            <= (1/a) D_a(Q || R).

    Nonnegative for every bounded g; zero (within roundoff) exactly when
    g = log dQ/dR + constant.
    """
    if alpha == 1 or alpha <= 0:
        raise ValueError("alpha must lie in (0,1) or (1,inf)")
    q = Q.weights if isinstance(Q, DiscreteMeasure) else np.asarray(Q, float)
    r = R.weights if isinstance(R, DiscreteMeasure) else np.asarray(R, float)
    g = np.asarray(g, dtype=float)
    if q.size != r.size or g.size != q.size:
        raise ValueError("alphabet sizes differ")
    da = renyi_divergence(q, r, alpha)
    lhs = _log_mgf(q, (alpha - 1) * g) / (alpha - 1) - _log_mgf(r, alpha * g) / alpha
    return da / alpha - lhs


def lpcb_slack(Q, R, A, alpha):
    """Slack of the logarithmic probability comparison bound on a set A:

        (1/(a-1)) log Q(A) - (1/a) log R(A) <= (1/a) D_a(Q || R),  a > 1.
    """
    if alpha <= 1:
        raise ValueError("the LPCB requires alpha > 1")
    q = Q.weights if isinstance(Q, DiscreteMeasure) else np.asarray(Q, float)
    r = R.weights if isinstance(R, DiscreteMeasure) else np.asarray(R, float)
    idx = np.asarray(sorted({int(i) for i in A}), dtype=int)
    if idx.size == 0:
        raise ValueError("A must be nonempty")
    if idx.min() < 0 or idx.max() >= q.size:
        raise ValueError("A indexes outside the alphabet")
    qa, ra = float(q[idx].sum()), float(r[idx].sum())
    if qa <= 0 or ra <= 0:
        raise ValueError("A must carry positive mass under both measures")
    da = renyi_divergence(q, r, alpha)
    return da / alpha - (math.log(qa) / (alpha - 1) - math.log(ra) / alpha)


# ---------------------------------------------------------------------------
# strong data processing
# ---------------------------------------------------------------------------


def _sup_deficit_polished(prob, fine_grid, polish_starts=6):
    """sup_P J(P) for a forward problem, by dense grid plus local polish."""
    G = simplex_grid(prob.n, fine_grid)
    vals = _batch_deficit(prob, G)
    order = np.argsort(vals)[::-1]
    best = float(vals[order[0]])

    def neg(theta):
        w = np.exp(theta - theta.max())
        return -float(_batch_deficit(prob, (w / w.sum())[None, :])[0])

    for k in order[:polish_starts]:
        p = np.clip(G[k], 1e-12, None)
        res = minimize(neg, np.log(p), method="Nelder-Mead",
                       options={"maxfev": 500, "fatol": 1e-14, "xatol": 1e-10})
        best = max(best, -float(res.fun))
    return best


def sdpi_constant(QX, K, tol=1e-4, opts=None):
    """Strong data processing constant of (Q_X, K): the least c in [0,1] with
    D(P_Y || Q_Y) <= c D(P_X || Q_X) for every P_X, found by bisection.

    Convention: a channel whose output does not depend on the input makes the
    inequality hold for every c >= 0; the constant is reported as 1 (cap),
    documented here because the theory does not pin this edge.  Certified
    within tol on alphabets of size <= 3 (grid + polish inner oracle); larger
    alphabets use the multi-start alternating solver alone.
    """
    if not isinstance(QX, DiscreteDistribution):
        QX = DiscreteDistribution(QX)
    if not isinstance(K, Kernel):
        K = Kernel(K)
    if np.any(QX.weights <= 0):
        raise ValueError("Q_X must have full support")
    if np.max(np.abs(K.matrix - K.matrix[0])) <= 1e-15:
        return 1.0  # constant kernel: documented cap convention
    QY = pushforward(QX, K)
    certified = QX.n <= 3
    opts = opts or BASolverOptions(restarts=6)

    def holds(c):
        # D_Y <= c D_X for all P  <=>  sup [ (1/c) D_Y - D_X ] <= 0
        prob = ForwardBLProblem(QX, np.zeros(QX.n), [(K, QY, 1.0 / c)])
        sup = best_constant(prob, opts).value
        if certified:
            sup = max(sup, _sup_deficit_polished(prob, 5e-4 if QX.n == 2 else 5e-3))
        return sup <= 1e-11

    lo, hi = 0.0, 1.0
    if holds(max(tol / 4, 1e-9)):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return float(hi)


def sdpi_functional_slack(QX, K, f, c):
    """Slack of the functional form of the c-SDPI:

        log ||f||_{1/c} - log E[exp(E[log f(Y) | X])],

    which is >= -1e-9 whenever c is at least the SDPI constant of (Q_X, K).
    """
    if not isinstance(QX, DiscreteDistribution):
        QX = DiscreteDistribution(QX)
    if not isinstance(K, Kernel):
        K = Kernel(K)
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    if not np.any(f > 0):
        raise ValueError("f must not be identically zero")
    QY = pushforward(QX, K)
    with np.errstate(divide="ignore"):
        lf = np.log(f)
    cond = np.where(K.matrix > 0, K.matrix * lf[None, :], 0.0).sum(axis=1)
    log_lhs = _log_mgf(QX.weights, cond)
    nrm = weighted_norm(f, QY, 1.0 / c)
    log_rhs = math.log(nrm) if nrm > 0 else -math.inf
    return log_rhs - log_lhs


# ---------------------------------------------------------------------------
# Loomis-Whitney / Shearer
# ---------------------------------------------------------------------------


def shearer_check(A):
    """Check |A|^(m-1) <= prod_j |pi_j(A)| in exact integer arithmetic, plus
    the entropic form H(X^m) <= (1/(m-1)) sum_j H(X_{without j}) for the
    uniform distribution on A."""
    pts = [tuple(p) for p in A]
    if not pts:
        raise ValueError("A must be nonempty")
    m = len(pts[0])
    if m < 2 or any(len(p) != m for p in pts):
        raise ValueError("A must consist of m-tuples with m >= 2")
    cell = set(pts)
    size = len(cell)
    proj_sizes = [len({p[:j] + p[j + 1:] for p in cell}) for j in range(m)]
    comb_lhs = size ** (m - 1)
    comb_rhs = 1
    for s in proj_sizes:
        comb_rhs *= s
    comb_ok = comb_lhs <= comb_rhs

    h_joint = math.log(size)
    h_sum = 0.0
    for j in range(m):
        counts = {}
        for p in cell:
            key = p[:j] + p[j + 1:]
            counts[key] = counts.get(key, 0) + 1
        h_sum += -sum((c / size) * math.log(c / size) for c in counts.values())
    ent_margin = h_sum / (m - 1) - h_joint
    ent_ok = ent_margin >= -1e-10
    return CheckReport(
        name="shearer",
        passed=bool(comb_ok and ent_ok),
        margin=float(min(ent_margin, float(comb_rhs - comb_lhs))),
        details={
            "size": size,
            "projection_sizes": proj_sizes,
            "entropic_margin": ent_margin,
        },
        certified=True,
    )


# ---------------------------------------------------------------------------
# discrete hypercontractivity and its reverses
# ---------------------------------------------------------------------------


def _projection_kernels(n1, n2):
    """Coordinate-projection kernels from the flattened product alphabet."""
    k1 = np.zeros((n1 * n2, n1))
    k2 = np.zeros((n1 * n2, n2))
    for a in range(n1):
        k1[a * n2:(a + 1) * n2, a] = 1.0
        k2[a * n2:(a + 1) * n2, :] = np.eye(n2)
    return Kernel(k1), Kernel(k2)


def hc_member_discrete(Q_joint, p1, p2, tol=1e-9, opts=None):
    """Is (p1, p2) in the hypercontractivity region of Q on Y1 x Y2?

    Decides whether sup_P [sum_j (1/p_j) D(P_{Y_j} || Q_{Y_j}) - D(P || Q)]
    is <= 0; the signed supremum is the reported margin.  Grid-certified on
    alphabets up to 3x3.
    """
    Q = np.asarray(Q_joint, dtype=float)
    if Q.ndim != 2:
        raise ValueError("Q_joint must be a 2-D joint distribution")
    if p1 < 1 or p2 < 1:
        raise ValueError("exponents must be >= 1")
    n1, n2 = Q.shape
    flat = DiscreteDistribution(Q.reshape(-1))
    K1, K2 = _projection_kernels(n1, n2)
    prob = ForwardBLProblem(
        flat,
        np.zeros(n1 * n2),
        [
            (K1, pushforward(flat, K1), 1.0 / p1),
            (K2, pushforward(flat, K2), 1.0 / p2),
        ],
    )
    opts = opts or BASolverOptions(restarts=8)
    margin = best_constant(prob, opts).value
    certified = False
    n_flat = n1 * n2
    if n_flat <= 4:
        margin = max(margin, _sup_deficit_polished(prob, 0.01))
        certified = True
    elif n_flat <= 9:
        margin = max(margin, _sup_deficit_polished(prob, 0.1, polish_starts=10))
        certified = True
    return MembershipReport(
        member=bool(margin <= tol),
        margin=float(margin),
        certified=certified,
        details={"p": (float(p1), float(p2))},
    )


def rhc_member_discrete(Q_joint, b1, b2, tol=1e-9, grid_step=0.02):
    """Reverse hypercontractivity with positive parameters (b1, b2).

    Member iff for every marginal pair some coupling P with those marginals
    satisfies D(P || Q) <= b1 D(P_{Z_1} || Q_{Z_1}) + b2 D(P_{Z_2} || Q_{Z_2});
    decided through the coupling program, certified by a marginal grid on
    small alphabets.
    """
    Q = np.asarray(Q_joint, dtype=float)
    if Q.ndim != 2:
        raise ValueError("Q_joint must be a 2-D joint distribution")
    qz1, qz2 = Q.sum(axis=1), Q.sum(axis=0)
    bad = (Q > 0) & (np.multiply.outer(qz1, qz2) <= 0)
    if bad.any():
        raise ValueError("Q must be absolutely continuous w.r.t. its marginals")
    prob = FRBLProblem(
        reverse=[(qz1, b1), (qz2, b2)],
        forward=[(np.eye(Q.size), Q.reshape(-1), 1.0)],
        d=0.0,
    )
    rep = best_frbl_constant(prob, grid_step=grid_step)
    return MembershipReport(
        member=bool(rep.value <= tol),
        margin=float(rep.value),
        certified=rep.method == "grid",
        details={"b": (float(b1), float(b2)), "method": rep.method},
    )


def _rhcn_inner(Q, QY2, P1, c2, gap_tol=1e-9):
    """min over extensions pi (row sums = P1) of D(pi || Q) + c2 D(pi_Y || Q_Y2).

    Returns +inf when no extension is absolutely continuous w.r.t. Q.
    """
    n1, n2 = Q.shape
    live = P1 > 0
    if np.any(live & (Q.sum(axis=1) == 0)):
        return math.inf
    rows = np.where(live)[0]
    var_index = [(z, y) for z in rows for y in range(n2) if Q[z, y] > 0]
    nv = len(var_index)
    zi = np.array([z for z, _ in var_index])
    yi = np.array([y for _, y in var_index])
    logq = np.log(Q[zi, yi])
    ms = QY2 > 0

    def fun(x):
        xc = np.clip(x, 0.0, None)
        qy = np.bincount(yi, weights=xc, minlength=n2)
        if np.any(qy[~ms] > 1e-14):
            return math.inf
        val = float(np.sum(xlogy(xc, xc)) - xc @ logq)
        val += c2 * float(np.sum(xlogy(qy[ms], qy[ms])) - qy[ms] @ np.log(QY2[ms]))
        return val

    def grad(x):
        xc = np.clip(x, 0.0, None)
        qy = np.bincount(yi, weights=xc, minlength=n2)
        g = 1.0 + np.log(np.maximum(xc, 1e-300)) - logq
        ratio = np.zeros(n2)
        ratio[ms] = np.log(np.maximum(qy[ms], 1e-300) / QY2[ms])
        return g + c2 * (1.0 + ratio)[yi]

    def oracle(g):
        v = np.zeros(nv)
        for z in rows:
            sel = np.where(zi == z)[0]
            v[sel[np.argmin(g[sel])]] = P1[z]
        return v

    x0 = np.array([P1[z] * Q[z, y] / Q[z].sum() for z, y in var_index])
    _, val, _, _ = _afw_minimize(fun, grad, oracle, x0, gap_tol=gap_tol)
    return float(val)


def rhcn_member_discrete(Q_joint, b1, c2, tol=1e-9, grid_step=0.02):
    """Reverse hypercontractivity with one negative parameter.

    Member iff for every P_{Z_1} some extension P_{Z_1 Y_2} satisfies
    D(P || Q) <= b1 D(P_{Z_1} || Q_{Z_1}) - c2 D(P_{Y_2} || Q_{Y_2}); each
    inner minimization is a convex program over row-constrained couplings.
    Certified by a P_{Z_1}-grid on small alphabets.
    """
    Q = np.asarray(Q_joint, dtype=float)
    if Q.ndim != 2:
        raise ValueError("Q_joint must be a 2-D joint distribution")
    if b1 <= 0 or c2 <= 0:
        raise ValueError("b1 and c2 must be positive")
    qz1, qy2 = Q.sum(axis=1), Q.sum(axis=0)
    n1 = Q.shape[0]
    certified = n1 <= 4

    def margin_at(P1):
        dv = relative_entropy(DiscreteDistribution(P1), DiscreteMeasure(qz1))
        if not np.isfinite(dv):
            return -math.inf
        return _rhcn_inner(Q, qy2, P1, c2) - b1 * dv

    worst = -math.inf
    if certified:
        for P1 in simplex_grid(n1, grid_step):
            if np.any(P1[qz1 == 0] > 0):
                continue
            worst = max(worst, margin_at(P1))

    rng = np.random.default_rng(0)
    starts = [qz1 / qz1.sum()] + [rng.dirichlet(np.ones(n1)) for _ in range(4)]

    def neg(theta):
        w = np.exp(theta - theta.max())
        m = margin_at(w / w.sum())
        return -m if np.isfinite(m) else 1e9

    for s in starts:
        res = minimize(neg, np.log(np.clip(s, 1e-9, None)), method="Nelder-Mead",
                       options={"maxfev": 200, "fatol": 1e-12})
        worst = max(worst, -float(res.fun))
    return MembershipReport(
        member=bool(worst <= tol),
        margin=float(worst),
        certified=certified,
        details={"b1": float(b1), "c2": float(c2)},
    )


# ---------------------------------------------------------------------------
# transportation-cost checks on finite metric samples
# ---------------------------------------------------------------------------


class MetricSpaceSample:
    """Finite metric sample: optional point coordinates, a distance matrix
    validated for symmetry and the triangle inequality, and a base law Q."""

    def __init__(self, dist, Q, points=None):
        d = np.asarray(dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        if np.any(d < 0):
            raise ValueError("distances must be nonnegative")
        if np.max(np.abs(d - d.T)) > 1e-12:
            raise ValueError("distance matrix must be symmetric within 1e-12")
        if np.max(np.abs(np.diag(d))) > 0:
            raise ValueError("distance matrix must have zero diagonal")
        through = d[:, :, None] + d[None, :, :]  # d(x,z) + d(z,y) over middle z
        if float(np.min(np.min(through, axis=1) - d)) < -1e-9:
            raise ValueError("triangle inequality violated beyond 1e-9")
        if not isinstance(Q, DiscreteDistribution):
            Q = DiscreteDistribution(Q)
        if Q.n != d.shape[0]:
            raise ValueError("Q must live on the sampled points")
        self.dist = d
        self.Q = Q
        self.points = None if points is None else [np.asarray(p, float) for p in points]
        self.dist.flags.writeable = False

    @classmethod
    def from_points(cls, points, Q):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        return cls(d, Q, points=list(pts))

    @property
    def n(self):
        return self.dist.shape[0]


def _inf_convolution(space, f, power, scale):
    """u(x) = min_z [f(z) + d(x,z)^power / scale], exact on the sample."""
    f = np.asarray(f, dtype=float)
    if f.size != space.n:
        raise ValueError("f must live on the sampled points")
    return np.min(f[None, :] + space.dist**power / scale, axis=1)


def t2_functional_slack(space, f):
    """Q(f) - log Q(exp(inf_z [f(z) + d^2(.,z)/2])), nonnegative for every f
    exactly when Q satisfies the quadratic transportation-cost inequality."""
    u = _inf_convolution(space, f, 2.0, 2.0)
    qf = float(space.Q.weights @ np.asarray(f, float))
    return qf - _log_mgf(space.Q.weights, u)


def tp_functional_slack(space, f, t, p):
    """Slack of the order-p transportation functional bound at parameter t:

        (1/p - 1/2) t^(2/(2-p)) + t Q(f) - log Q(exp(t inf_z [f + d^p/p])).
    """
    if not (1 <= p < 2):
        raise ValueError("p must lie in [1, 2)")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0
    u = _inf_convolution(space, f, p, p)
    qf = float(space.Q.weights @ np.asarray(f, float))
    rhs = (1.0 / p - 0.5) * t ** (2.0 / (2.0 - p)) + t * qf
    return rhs - _log_mgf(space.Q.weights, t * u)


def transport_vs_entropy(space, P, p, lam):
    """(optimal transport cost, entropy bound) pair for testing T_p(lambda):

    lhs = inf over couplings of E^(1/p)[d^p(X,Y)] with X ~ P, Y ~ Q via an
    exact LP; rhs = sqrt(2 lambda D(P || Q)).
    """
    if space.n > 32:
        raise ValueError("exact transport LP is guarded to <= 32 points")
    if not isinstance(P, DiscreteDistribution):
        P = DiscreteDistribution(P)
    if P.n != space.n:
        raise ValueError("P must live on the sampled points")
    n = space.n
    cost = (space.dist**p).reshape(-1)
    A_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        A_eq[i, i * n:(i + 1) * n] = 1.0  # row marginal: P
        A_eq[n + i, i::n] = 1.0  # column marginal: Q
    b_eq = np.concatenate([P.weights, space.Q.weights])
    res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    lhs = float(max(res.fun, 0.0)) ** (1.0 / p)
    dv = relative_entropy(P, space.Q)
    rhs = math.sqrt(2.0 * lam * dv) if np.isfinite(dv) else math.inf
    return lhs, rhs
