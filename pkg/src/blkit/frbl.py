"""Forward-reverse Brascamp-Lieb inequality on finite product alphabets.

The entropic side is a convex program over the coupling polytope: given
marginals (P_{Z_1},...,P_{Z_l}) on the factors of X = Z_1 x ... x Z_l,

    min_coupling = inf_pi sum_j c_j D(T_j pi || mu_j)

over joint distributions pi with the prescribed marginals.  The functional
side is a pointwise-constraint verifier (weak duality direction).

Solver notes: couplings are flattened row-major in (z_1,...,z_l).  The
convex program runs away-step Frank-Wolfe with an exact LP vertex oracle on
the transportation polytope and an exact line search; entries that would
push mass onto zeros of some mu_j are pinned to zero up front, so gradients
stay finite along the whole path.  The common special case of a single
identity forward channel (min D(pi || Q)) takes the iterative-proportional-
fitting shortcut instead.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize, minimize_scalar
from scipy.special import xlogy

from .forward import simplex_grid
from .measures import (
    DiscreteDistribution,
    DiscreteMeasure,
    Kernel,
    relative_entropy,
)
from .reports import CheckReport

__all__ = [
    "FRBLProblem",
    "Coupling",
    "FRBLConstantReport",
    "min_coupling",
    "frbl_entropic_deficit",
    "best_frbl_constant",
    "frbl_functional_check",
    "sup_convolution_f",
]

_MAX_PRODUCT_ALPHABET = 4096


class FRBLProblem:
    """Reverse data (nu_i, b_i) on the factors, forward data (T_j, mu_j, c_j)
    from the product alphabet, and the additive constant d (nats)."""

    def __init__(self, reverse, forward, d=0.0):
        if not reverse:
            raise ValueError("need at least one reverse factor")
        if not forward:
            raise ValueError("need at least one forward channel")
        rev = []
        for nu, b in reverse:
            if not isinstance(nu, DiscreteMeasure):
                nu = DiscreteMeasure(nu)
            b = float(b)
            if b <= 0:
                raise ValueError("coefficients b_i must be positive")
            rev.append((nu, b))
        self.reverse = rev
        self.shape = tuple(nu.n for nu, _ in rev)
        n_flat = int(np.prod(self.shape))
        if n_flat > _MAX_PRODUCT_ALPHABET:
            raise ValueError(
                f"product alphabet size {n_flat} exceeds the hard cap "
                f"{_MAX_PRODUCT_ALPHABET}"
            )
        fwd = []
        for K, mu, c in forward:
            if not isinstance(K, Kernel):
                K = Kernel(K)
            if not isinstance(mu, DiscreteMeasure):
                mu = DiscreteMeasure(mu)
            c = float(c)
            if c <= 0:
                raise ValueError("coefficients c_j must be positive")
            if K.n_in != n_flat:
                raise ValueError(
                    "forward kernel input must match the flattened product alphabet"
                )
            if K.n_out != mu.n:
                raise ValueError("kernel output size does not match mu")
            fwd.append((K, mu, c))
        self.forward = fwd
        self.d = float(d)

    @property
    def l(self):
        return len(self.reverse)

    @property
    def m(self):
        return len(self.forward)

    @property
    def n_flat(self):
        return int(np.prod(self.shape))


class Coupling:
    """Joint distribution over the product alphabet, stored flattened row-major."""

    def __init__(self, joint, shape):
        flat = np.asarray(joint, dtype=float).reshape(-1)
        shape = tuple(int(s) for s in shape)
        if flat.size != int(np.prod(shape)):
            raise ValueError("joint size does not match the product shape")
        if np.any(flat < -1e-15):
            raise ValueError("coupling entries must be nonnegative")
        flat = np.clip(flat, 0.0, None)
        if abs(flat.sum() - 1.0) > 1e-12:
            raise ValueError("coupling must sum to 1 +- 1e-12")
        self.joint = flat
        self.shape = shape
        self.joint.flags.writeable = False

    def tensor(self):
        return self.joint.reshape(self.shape)

    def marginal(self, i):
        axes = tuple(k for k in range(len(self.shape)) if k != i)
        w = self.tensor().sum(axis=axes)
        return DiscreteDistribution(w / w.sum())


# ---------------------------------------------------------------------------
# coupling objective
# ---------------------------------------------------------------------------


def _coupling_value(prob, pi_flat):
    total = 0.0
    for K, mu, c in prob.forward:
        q = pi_flat @ K.matrix
        mz = mu.weights == 0
        if np.any(q[mz] > 1e-12):
            return math.inf
        ms = ~mz
        total += c * float(
            np.sum(xlogy(q[ms], q[ms])) - q[ms] @ np.log(mu.weights[ms])
        )
    return total


def _coupling_grad(prob, pi_flat):
    g = np.zeros(pi_flat.size)
    for K, mu, c in prob.forward:
        q = pi_flat @ K.matrix
        ratio = np.zeros(mu.n)
        ms = mu.weights > 0
        ratio[ms] = np.log(np.maximum(q[ms], 1e-300) / mu.weights[ms])
        g += c * (K.matrix @ (1.0 + ratio))
    return g


def _forbidden_mask(prob):
    """Entries z that would push mass onto a zero of some mu_j."""
    bad = np.zeros(prob.n_flat, dtype=bool)
    for K, mu, _ in prob.forward:
        mz = mu.weights == 0
        if mz.any():
            bad |= (K.matrix[:, mz] > 0).any(axis=1)
    return bad


def _marginal_constraints(shape, allowed):
    """Equality rows A (one per factor symbol) over the allowed flat entries."""
    n_flat = int(np.prod(shape))
    idx = np.arange(n_flat)[allowed]
    coords = np.array(np.unravel_index(idx, shape)).T  # (n_allowed, l)
    rows = []
    for i, ni in enumerate(shape):
        block = np.zeros((ni, idx.size))
        block[coords[:, i], np.arange(idx.size)] = 1.0
        rows.append(block)
    return np.vstack(rows), idx


def _lp_vertex(A, b, cost):
    res = linprog(cost, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if not res.success:
        return None
    return res.x


def _max_support_start(A, b, n_vars, delta=1e-6):
    """A feasible point maximizing sum min(x_z, delta): near-maximal support."""
    cost = np.concatenate([np.zeros(n_vars), -np.ones(n_vars)])
    A_eq = np.hstack([A, np.zeros((A.shape[0], n_vars))])
    A_ub = np.hstack([-np.eye(n_vars), np.eye(n_vars)])  # t - x <= 0
    b_ub = np.zeros(n_vars)
    bounds = [(0, None)] * n_vars + [(0, delta)] * n_vars
    res = linprog(cost, A_eq=A_eq, b_eq=b, A_ub=A_ub, b_ub=b_ub, bounds=bounds,
                  method="highs")
    if not res.success:
        return None
    return res.x[:n_vars]


def _afw_minimize(fun, grad, vertex_oracle, x0, gap_tol=1e-8, max_iters=2000):
    """Away-step Frank-Wolfe with exact line search on a polytope.

    ``vertex_oracle(g)`` must return an exact minimizer of <g, v> over the
    polytope.  Returns (x, value, gap, converged).
    """
    x = x0.copy()
    atoms = {x0.tobytes(): [x0.copy(), 1.0]}
    val = fun(x)
    gap = math.inf
    for _ in range(max_iters):
        g = grad(x)
        v = vertex_oracle(g)
        if v is None:
            break
        gap = float(g @ (x - v))
        if gap <= gap_tol:
            return x, val, gap, True
        fw_dir = v - x
        away_key = max(atoms, key=lambda k: float(g @ atoms[k][0]))
        a, alpha_a = atoms[away_key]
        aw_gain = float(g @ (x - a))  # descent potential of moving off a
        use_away = len(atoms) > 1 and aw_gain > float(g @ (-fw_dir)) and alpha_a < 1.0
        if use_away:
            direction = x - a
            gamma_max = alpha_a / (1.0 - alpha_a)
        else:
            direction = fw_dir
            gamma_max = 1.0
        if gamma_max <= 1e-16:
            direction = fw_dir
            gamma_max = 1.0
            use_away = False

        def phi(t, _d=direction):
            return fun(x + t * _d)

        res = minimize_scalar(phi, bounds=(0.0, gamma_max), method="bounded",
                              options={"xatol": 1e-14})
        t = float(res.x)
        new_val = float(res.fun)
        if new_val > val and t > 0:  # safeguard: never go uphill
            t, new_val = 0.0, val
        x = x + t * direction
        if use_away:
            for k in atoms:
                atoms[k][1] *= 1.0 + t
            atoms[away_key][1] -= t
        else:
            for k in atoms:
                atoms[k][1] *= 1.0 - t
            key = v.tobytes()
            if key in atoms:
                atoms[key][1] += t
            else:
                atoms[key] = [v.copy(), t]
        atoms = {k: aw for k, aw in atoms.items() if aw[1] > 1e-15}
        if not atoms:
            atoms = {x.tobytes(): [x.copy(), 1.0]}
        val = new_val
    return x, val, gap, gap <= gap_tol


def _is_identity_fast_path(prob):
    if prob.m != 1:
        return False
    K = prob.forward[0][0]
    return K.n_in == K.n_out and np.array_equal(K.matrix, np.eye(K.n_in))


def _ipf_projection(mu_flat, shape, marginals, tol=1e-13, max_iters=50_000):
    """Iterative proportional fitting: the D(. || mu)-projection onto the
    transportation polytope.  Returns the coupling tensor or None on stall."""
    pi = (mu_flat / mu_flat.sum()).reshape(shape).copy()
    targets = [m.weights for m in marginals]
    l = len(shape)
    for _ in range(max_iters):
        resid = 0.0
        for i in range(l):
            axes = tuple(k for k in range(l) if k != i)
            cur = pi.sum(axis=axes)
            resid = max(resid, float(np.max(np.abs(cur - targets[i]))))
            if np.any((cur == 0) & (targets[i] > 1e-15)):
                return None  # support cannot carry the target marginal
            factor = np.ones_like(cur)
            pos = cur > 0
            factor[pos] = targets[i][pos] / cur[pos]
            pi *= np.reshape(factor, [-1 if k == i else 1 for k in range(l)])
        if resid < tol:
            s = pi.sum()
            if abs(s - 1.0) > 1e-9:
                return None
            return pi / s
    return None


def min_coupling(prob, marginals, gap_tol=1e-8):
    """Minimize sum_j c_j D(T_j pi || mu_j) over couplings of ``marginals``.

    Returns (value, Coupling).  When no coupling avoids the zeros of the
    mu_j, the infimum runs over an empty set and the value is +inf (the
    coupling slot is then None).
    """
    if len(marginals) != prob.l:
        raise ValueError("need one marginal per reverse factor")
    margs = []
    for P, (nu, _) in zip(marginals, prob.reverse):
        if not isinstance(P, DiscreteDistribution):
            P = DiscreteDistribution(P)
        if P.n != nu.n:
            raise ValueError("marginal dimension mismatch")
        margs.append(P)

    if prob.l == 1:
        pi = margs[0].weights.copy()
        val = _coupling_value(prob, pi)
        return val, Coupling(pi, prob.shape)

    forbidden = _forbidden_mask(prob)

    # the product coupling is the maximal-support feasible point
    prod = margs[0].weights
    for P in margs[1:]:
        prod = np.multiply.outer(prod, P.weights)
    prod = prod.reshape(-1)

    if _is_identity_fast_path(prob) and not np.any(forbidden & (prod > 0)):
        mu = prob.forward[0][1]
        pi = _ipf_projection(mu.weights, prob.shape, margs)
        if pi is not None:
            flat = pi.reshape(-1)
            return _coupling_value(prob, flat), Coupling(flat, prob.shape)
        # fall through to Frank-Wolfe on stall

    allowed = ~forbidden
    if not np.any(allowed):
        return math.inf, None
    A, idx = _marginal_constraints(prob.shape, allowed)
    b = np.concatenate([P.weights for P in margs])

    if not np.any(forbidden):
        x0 = prod[idx]
    else:
        x0 = _max_support_start(A, b, idx.size)
        if x0 is None:
            return math.inf, None

    def embed(x):
        full = np.zeros(prob.n_flat)
        full[idx] = np.clip(x, 0.0, None)
        return full

    def fun(x):
        return _coupling_value(prob, embed(x))

    def grad(x):
        return _coupling_grad(prob, embed(x))[idx]

    def oracle(g):
        return _lp_vertex(A, b, g)

    x, val, gap, _ = _afw_minimize(fun, grad, oracle, x0, gap_tol=gap_tol)
    flat = embed(x)
    flat /= flat.sum()
    return float(val), Coupling(flat, prob.shape)


def frbl_entropic_deficit(prob, marginals, gap_tol=1e-8):
    """min_coupling minus the weighted reverse divergences minus d.

    The entropic statement with constant d holds iff the supremum of this
    deficit over marginal lists is <= 0.
    """
    penalty = 0.0
    for P, (nu, b) in zip(marginals, prob.reverse):
        dv = relative_entropy(P, nu)
        if not np.isfinite(dv):
            return -math.inf
        penalty += b * dv
    value, _ = min_coupling(prob, marginals, gap_tol=gap_tol)
    return value - penalty - prob.d


@dataclass
class FRBLConstantReport:
    value: float
    method: str
    argmax_marginals: list | None = None
    details: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def best_frbl_constant(prob, grid_step=0.02, max_grid_points=20_000,
                       restarts=4, rng_seed=0):
    """Least d making the entropic statement hold: sup over marginal lists of
    [min_coupling - sum_i b_i D(P_{Z_i} || nu_i)].

    Certified by an exhaustive marginal grid when every factor alphabet has
    size <= 4 and the grid is small enough (the general-kernel inner solve is
    expensive, so non-identity problems get a tighter budget); otherwise
    multi-start ascent in softmax coordinates, flagged "heuristic".
    """
    base = FRBLProblem(prob.reverse, prob.forward, d=0.0)
    grids = [simplex_grid(n, grid_step) for n in base.shape]
    total = int(np.prod([g.shape[0] for g in grids]))
    small = all(n <= 4 for n in base.shape)
    cheap_inner = base.l == 1 or _is_identity_fast_path(base)

    if small and total <= max_grid_points and (cheap_inner or total <= 600):
        best_val = -math.inf
        best_marg = None
        for rows in itertools.product(*[range(g.shape[0]) for g in grids]):
            margs = [DiscreteDistribution(grids[i][r]) for i, r in enumerate(rows)]
            val = frbl_entropic_deficit(base, margs)
            if val > best_val:
                best_val, best_marg = val, margs
        return FRBLConstantReport(
            value=float(best_val),
            method="grid",
            argmax_marginals=best_marg,
            details={"grid_step": grid_step, "grid_points": total},
        )

    rng = np.random.default_rng(rng_seed)
    sizes = list(base.shape)
    splits = np.cumsum(sizes)[:-1]

    def unpack(theta):
        margs = []
        for block in np.split(theta, splits):
            w = np.exp(block - block.max())
            margs.append(DiscreteDistribution(w / w.sum()))
        return margs

    def neg_objective(theta):
        val = frbl_entropic_deficit(base, unpack(theta))
        return -val if np.isfinite(val) else 1e6

    best_val = -math.inf
    best_marg = None
    for r in range(restarts):
        theta0 = rng.normal(scale=0.5 if r else 1e-6, size=int(sum(sizes)))
        res = minimize(neg_objective, theta0, method="Nelder-Mead",
                       options={"maxfev": 400, "xatol": 1e-8, "fatol": 1e-10})
        val = -res.fun
        if val > best_val:
            best_val, best_marg = val, unpack(res.x)
    return FRBLConstantReport(
        value=float(best_val),
        method="heuristic",
        argmax_marginals=best_marg,
        details={"restarts": restarts},
    )


def frbl_functional_check(prob, g, f):
    """Verify the pointwise log-constraint over the product alphabet, then
    report the slack log RHS - log LHS of the integral inequality.

    With d at least the best constant, weak duality forces the slack to be
    >= -1e-9 for every feasible pair.
    """
    if len(g) != prob.l or len(f) != prob.m:
        raise ValueError("need one g per reverse factor and one f per channel")
    gs = [np.asarray(gi, dtype=float) for gi in g]
    fs = [np.asarray(fj, dtype=float) for fj in f]
    for gi, (nu, _) in zip(gs, prob.reverse):
        if gi.size != nu.n:
            raise ValueError("g size mismatch")
        if np.any(gi <= 0) or not np.all(np.isfinite(gi)):
            raise ValueError("g_i must be strictly positive and finite")
    for fj, (K, _, _) in zip(fs, prob.forward):
        if fj.size != K.n_out:
            raise ValueError("f size mismatch")
        if np.any(fj <= 0) or not np.all(np.isfinite(fj)):
            raise ValueError("f_j must be strictly positive and finite")

    coords = np.array(np.unravel_index(np.arange(prob.n_flat), prob.shape)).T
    lhs = np.zeros(prob.n_flat)
    for i, (gi, (_, b)) in enumerate(zip(gs, prob.reverse)):
        lhs += b * np.log(gi)[coords[:, i]]
    rhs = np.zeros(prob.n_flat)
    for fj, (K, _, c) in zip(fs, prob.forward):
        rhs += c * (K.matrix @ np.log(fj))
    violation = float(np.max(lhs - rhs))
    details = {"constraint_violation": violation}
    if violation > 1e-12:
        return CheckReport(
            name="frbl_functional",
            passed=False,
            margin=-violation,
            details=details,
        )
    log_lhs = sum(
        b * math.log(float(nu.weights @ gi))
        for gi, (nu, b) in zip(gs, prob.reverse)
    )
    log_rhs = prob.d + sum(
        c * math.log(float(mu.weights @ fj))
        for fj, (_, mu, c) in zip(fs, prob.forward)
    )
    slack = log_rhs - log_lhs
    details["slack"] = slack
    return CheckReport(
        name="frbl_functional",
        passed=bool(slack >= -1e-9),
        margin=float(slack),
        details=details,
    )


def sup_convolution_f(g, phi, n_out):
    """Optimal forward function for a deterministic map phi on the product
    alphabet: f(y) = max over the preimage of y of prod_i g_i(z_i); 0 on
    empty preimages."""
    gs = [np.asarray(gi, dtype=float) for gi in g]
    shape = tuple(gi.size for gi in gs)
    phi = np.asarray(phi, dtype=int).reshape(-1)
    if phi.size != int(np.prod(shape)):
        raise ValueError("phi must be a total map on the product alphabet")
    if np.any(phi < 0) or np.any(phi >= n_out):
        raise ValueError("phi values must index the output alphabet")
    prod = gs[0]
    for gi in gs[1:]:
        prod = np.multiply.outer(prod, gi)
    prod = prod.reshape(-1)
    out = np.zeros(n_out)
    np.maximum.at(out, phi, prod)
    return out
