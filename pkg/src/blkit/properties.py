"""Falsification suites for the structural properties of best constants:
additivity under tensor products, convexity in the coefficient vector, and
shrinkage under output degradation.

Every check solves its instances by the certified brute-force path (simplex
grid plus local polish) and reports the inner resolution, so a failure is
attributable.  Tolerances are widened to 1e-4 here because two nested
grid-based solves compound error.
"""

from __future__ import annotations

import numpy as np

from .forward import ForwardBLProblem, _batch_deficit, simplex_grid
from .measures import CostFunction, DiscreteMeasure, Kernel
from .reports import CheckReport
from .special import _sup_deficit_polished

__all__ = [
    "CheckReport",
    "tensorization_check",
    "convexity_check",
    "data_processing_check",
    "product_problem",
    "certified_best_constant",
]


def certified_best_constant(prob, grid_step=None):
    """Grid + polish supremum of the deficit; the certified inner solve used
    by every property check (alphabet size <= 6)."""
    if prob.n > 6:
        raise ValueError("certified path is guarded to |X| <= 6")
    if grid_step is None:
        grid_step = {1: 1.0, 2: 0.002, 3: 0.01, 4: 0.01}.get(prob.n, 0.05)
    return _sup_deficit_polished(prob, grid_step, polish_starts=8), grid_step


def product_problem(prob1, prob2):
    """Tensor product of two forward problems sharing a coefficient vector:
    Kronecker kernels, product references, and added costs."""
    cs1 = [c for _, _, c in prob1.channels]
    cs2 = [c for _, _, c in prob2.channels]
    if len(cs1) != len(cs2) or np.max(np.abs(np.array(cs1) - np.array(cs2))) > 0:
        raise ValueError("problems must share the coefficient vector")
    nu = DiscreteMeasure(np.kron(prob1.nu.weights, prob2.nu.weights))
    d = CostFunction(
        (prob1.d.values[:, None] + prob2.d.values[None, :]).reshape(-1)
    )
    channels = []
    for (K1, mu1, c), (K2, mu2, _) in zip(prob1.channels, prob2.channels):
        channels.append(
            (
                Kernel(np.kron(K1.matrix, K2.matrix)),
                DiscreteMeasure(np.kron(mu1.weights, mu2.weights)),
                c,
            )
        )
    return ForwardBLProblem(nu, d, channels)


def tensorization_check(prob1, prob2, tol=1e-4):
    """Best constants add under tensor products: d(prob1 x prob2) equals
    d(prob1) + d(prob2).  (<= is the additivity of valid constants; >= comes
    from product input distributions.)"""
    prod = product_problem(prob1, prob2)
    if prod.n > 16:
        raise ValueError("product alphabet is guarded to <= 16")
    d1, s1 = certified_best_constant(prob1)
    d2, s2 = certified_best_constant(prob2)
    d12, s12 = certified_best_constant(prod)
    gap = d12 - d1 - d2
    return CheckReport(
        name="tensorization",
        passed=bool(abs(gap) <= tol),
        margin=float(tol - abs(gap)),
        details={
            "d1": d1,
            "d2": d2,
            "d_product": d12,
            "gap": gap,
            "grid_steps": (s1, s2, s12),
        },
        certified=True,
    )


def _with_coefficients(base, cs):
    channels = [(K, mu, c) for (K, mu, _), c in zip(base.channels, cs)]
    return ForwardBLProblem(base.nu, base.d, channels)


def convexity_check(base, c_samples, tol=1e-4):
    """The best constant is convex in the coefficient vector: on a segment
    c0, midpoint, c1 the midpoint constant is at most the average."""
    if len(c_samples) < 3:
        raise ValueError("need at least endpoints and a midpoint on a segment")
    cs = [np.asarray(c, dtype=float) for c in c_samples]
    lo, hi = cs[0], cs[-1]
    worst = np.inf
    details = {"values": []}
    for mid_c in cs[1:-1]:
        # locate the segment parameter of this sample
        span = hi - lo
        nz = np.argmax(np.abs(span))
        if abs(span[nz]) < 1e-15:
            raise ValueError("degenerate segment")
        theta = float((mid_c[nz] - lo[nz]) / span[nz])
        if np.max(np.abs(lo + theta * span - mid_c)) > 1e-12:
            raise ValueError("samples must lie on one segment")
        d_lo, _ = certified_best_constant(_with_coefficients(base, lo))
        d_hi, _ = certified_best_constant(_with_coefficients(base, hi))
        d_mid, _ = certified_best_constant(_with_coefficients(base, mid_c))
        bound = (1 - theta) * d_lo + theta * d_hi
        worst = min(worst, bound + tol - d_mid)
        details["values"].append(
            {"theta": theta, "d_lo": d_lo, "d_mid": d_mid, "d_hi": d_hi}
        )
    return CheckReport(
        name="convexity",
        passed=bool(worst >= 0),
        margin=float(worst),
        details=details,
        certified=True,
    )


def data_processing_check(prob, post_channels, tol=1e-4):
    """Degrading every output through a post-channel shrinks the best
    constant: d(degraded) <= d(original) + tol.  (Degradation enlarges the
    set of valid (d, c) pairs.)"""
    if len(post_channels) != prob.m:
        raise ValueError("need one post-channel per output")
    channels = []
    for (K, mu, c), post in zip(prob.channels, post_channels):
        if not isinstance(post, Kernel):
            post = Kernel(post)
        if post.n_in != K.n_out:
            raise ValueError("post-channel input must match the channel output")
        channels.append(
            (
                Kernel(K.matrix @ post.matrix),
                DiscreteMeasure(mu.weights @ post.matrix),
                c,
            )
        )
    degraded = ForwardBLProblem(prob.nu, prob.d, channels)
    d_orig, s1 = certified_best_constant(prob)
    d_deg, s2 = certified_best_constant(degraded)
    margin = d_orig + tol - d_deg
    return CheckReport(
        name="data_processing",
        passed=bool(margin >= 0),
        margin=float(margin),
        details={
            "d_original": d_orig,
            "d_degraded": d_deg,
            "grid_steps": (s1, s2),
        },
        certified=True,
    )
