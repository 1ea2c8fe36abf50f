import math

import numpy as np
import numpy.testing as npt
import pytest

from blkit.forward import ForwardBLProblem, best_constant_bruteforce
from blkit.frbl import (
    Coupling,
    FRBLProblem,
    best_frbl_constant,
    frbl_entropic_deficit,
    frbl_functional_check,
    min_coupling,
    sup_convolution_f,
)
from blkit.measures import (
    DiscreteDistribution,
    DiscreteMeasure,
    Kernel,
    pushforward,
    relative_entropy,
)


def binary_coupling_value_oracle(Q, p, q, n_grid=300_001):
    """1-D line-search oracle: binary marginals pin all but one coupling
    entry, so min D(pi || Q) reduces to a scalar minimization."""
    lo, hi = max(0.0, p + q - 1.0), min(p, q)
    ts = np.linspace(lo, hi, n_grid)
    pis = np.stack([ts, p - ts, q - ts, 1 - p - q + ts], axis=1)
    qf = np.asarray(Q, dtype=float).reshape(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(pis > 1e-300, pis * np.log(pis / qf[None, :]), 0.0)
        terms = np.where((pis > 1e-300) & (qf[None, :] == 0), np.inf, terms)
    return float(terms.sum(axis=1).min())


def doubly_symmetric(delta):
    return np.array([[0.5 - delta, delta], [delta, 0.5 - delta]])


class TestMinCoupling:
    def test_product_reference_zero(self):
        # T identity on the product, mu = product of the marginals
        m1 = DiscreteDistribution([0.3, 0.7])
        m2 = DiscreteDistribution([0.6, 0.4])
        mu = np.outer(m1.weights, m2.weights).reshape(-1)
        prob = FRBLProblem(
            reverse=[(m1.weights, 1.0), (m2.weights, 1.0)],
            forward=[(np.eye(4), mu, 1.0)],
        )
        val, pi = min_coupling(prob, [m1, m2])
        assert abs(val) < 1e-10
        npt.assert_allclose(pi.joint, mu, atol=1e-8)

    def test_joint_reference_zero_at_own_marginals(self):
        Q = np.array([[0.4, 0.1], [0.2, 0.3]])
        prob = FRBLProblem(
            reverse=[(Q.sum(1), 1.0), (Q.sum(0), 1.0)],
            forward=[(np.eye(4), Q.reshape(-1), 1.0)],
        )
        val, pi = min_coupling(
            prob,
            [DiscreteDistribution(Q.sum(1)), DiscreteDistribution(Q.sum(0))],
        )
        assert abs(val) < 1e-10
        npt.assert_allclose(pi.tensor(), Q, atol=1e-8)

    def test_against_line_search_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(8):
            Q = rng.dirichlet(np.ones(4)).reshape(2, 2)
            p, q = rng.uniform(0.05, 0.95, size=2)
            prob = FRBLProblem(
                reverse=[(Q.sum(1), 1.0), (Q.sum(0), 1.0)],
                forward=[(np.eye(4), Q.reshape(-1), 1.0)],
            )
            m = [DiscreteDistribution([p, 1 - p]), DiscreteDistribution([q, 1 - q])]
            val, _ = min_coupling(prob, m)
            oracle = binary_coupling_value_oracle(Q, p, q)
            assert abs(val - oracle) < 1e-6

    def test_nonidentity_forward_kernel(self):
        # general kernel exercises the Frank-Wolfe path; compare against a
        # dense grid over the one-parameter coupling family
        rng = np.random.default_rng(1)
        K = rng.dirichlet(np.ones(3), size=4)
        mu = DiscreteMeasure(rng.dirichlet(np.ones(3)) + 0.05)
        prob = FRBLProblem(
            reverse=[([0.5, 0.5], 1.0), ([0.5, 0.5], 1.0)],
            forward=[(K, mu.weights, 0.8)],
        )
        p, q = 0.4, 0.7
        margs = [DiscreteDistribution([p, 1 - p]), DiscreteDistribution([q, 1 - q])]
        val, _ = min_coupling(prob, margs)
        lo, hi = max(0.0, p + q - 1.0), min(p, q)
        ts = np.linspace(lo, hi, 200_001)
        pis = np.stack([ts, p - ts, q - ts, 1 - p - q + ts], axis=1)
        pys = pis @ K
        terms = 0.8 * (pys * np.log(pys / mu.weights[None, :])).sum(axis=1)
        assert abs(val - terms.min()) < 1e-7

    def test_unavoidable_zero_gives_inf(self):
        # Q concentrated on the diagonal: only equal marginals admit a
        # coupling that stays absolutely continuous
        Q = np.array([[0.5, 0.0], [0.0, 0.5]])
        prob = FRBLProblem(
            reverse=[(Q.sum(1), 1.0), (Q.sum(0), 1.0)],
            forward=[(np.eye(4), Q.reshape(-1), 1.0)],
        )
        val, pi = min_coupling(
            prob, [DiscreteDistribution([0.8, 0.2]), DiscreteDistribution([0.2, 0.8])]
        )
        assert val == math.inf
        val2, _ = min_coupling(
            prob, [DiscreteDistribution([0.8, 0.2]), DiscreteDistribution([0.8, 0.2])]
        )
        assert abs(val2 - relative_entropy([0.8, 0.2], [0.5, 0.5])) < 1e-8

    def test_marginal_dim_mismatch(self):
        prob = FRBLProblem(
            reverse=[([0.5, 0.5], 1.0), ([0.5, 0.5], 1.0)],
            forward=[(np.eye(4), np.full(4, 0.25), 1.0)],
        )
        with pytest.raises(ValueError):
            min_coupling(prob, [DiscreteDistribution([1.0]), DiscreteDistribution([0.5, 0.5])])

    def test_convexity_in_marginals(self):
        rng = np.random.default_rng(2)
        Q = rng.dirichlet(np.ones(4)).reshape(2, 2)
        prob = FRBLProblem(
            reverse=[(Q.sum(1), 1.0), (Q.sum(0), 1.0)],
            forward=[(np.eye(4), Q.reshape(-1), 1.0)],
        )
        for _ in range(5):
            a = rng.uniform(0.1, 0.9, size=2)
            b = rng.uniform(0.1, 0.9, size=2)
            th = rng.uniform()
            mids = th * a + (1 - th) * b

            def value(pair):
                margs = [
                    DiscreteDistribution([pair[0], 1 - pair[0]]),
                    DiscreteDistribution([pair[1], 1 - pair[1]]),
                ]
                return min_coupling(prob, margs)[0]

            assert value(mids) <= th * value(a) + (1 - th) * value(b) + 1e-7


class TestEntropicDeficit:
    def test_zero_by_construction(self):
        Q = np.array([[0.4, 0.1], [0.2, 0.3]])
        prob0 = FRBLProblem(
            reverse=[(Q.sum(1), 1.0), (Q.sum(0), 1.0)],
            forward=[(np.eye(4), Q.reshape(-1), 1.0)],
        )
        margs = [DiscreteDistribution(Q.sum(1)), DiscreteDistribution(Q.sum(0))]
        base_val, _ = min_coupling(prob0, margs)
        prob = FRBLProblem(prob0.reverse, prob0.forward, d=base_val)
        assert abs(frbl_entropic_deficit(prob, margs)) < 1e-9

    def test_product_reference_nonpositive(self):
        # rHC with b1 = b2 = 1 holds for product Q: deficit <= 0 everywhere
        m1 = np.array([0.3, 0.7])
        m2 = np.array([0.6, 0.4])
        Q = np.outer(m1, m2)
        prob = FRBLProblem(
            reverse=[(m1, 1.0), (m2, 1.0)],
            forward=[(np.eye(4), Q.reshape(-1), 1.0)],
        )
        rng = np.random.default_rng(3)
        for _ in range(10):
            margs = [
                DiscreteDistribution(rng.dirichlet(np.ones(2))),
                DiscreteDistribution(rng.dirichlet(np.ones(2))),
            ]
            assert frbl_entropic_deficit(prob, margs) <= 1e-9

    def test_large_d_drives_deficit_down(self):
        Q = np.array([[0.4, 0.1], [0.2, 0.3]])
        margs = [DiscreteDistribution([0.5, 0.5]), DiscreteDistribution([0.5, 0.5])]
        lo = FRBLProblem(
            [(Q.sum(1), 1.0), (Q.sum(0), 1.0)],
            [(np.eye(4), Q.reshape(-1), 1.0)],
            d=0.0,
        )
        hi = FRBLProblem(lo.reverse, lo.forward, d=50.0)
        assert frbl_entropic_deficit(hi, margs) == frbl_entropic_deficit(lo, margs) - 50.0


class TestBestConstant:
    def test_l1_reduces_to_forward(self):
        # l=1 with identity reverse: the coupling is pinned, so the constant
        # coincides with the forward problem's on the same grid
        rng = np.random.default_rng(4)
        for _ in range(5):
            QX = DiscreteDistribution(rng.dirichlet(np.ones(2)))
            K = Kernel(rng.dirichlet(np.ones(2), size=2))
            c = float(rng.uniform(0.4, 1.3))
            mu = pushforward(QX, K)
            fprob = ForwardBLProblem(QX, np.zeros(2), [(K, mu, c)])
            rprob = FRBLProblem([(QX.weights, 1.0)], [(K.matrix, mu.weights, c)])
            v_forward = best_constant_bruteforce(fprob, 0.002)
            rep = best_frbl_constant(rprob, grid_step=0.002)
            assert rep.method == "grid"
            assert abs(rep.value - v_forward) < 1e-6

    def test_hc_product_zero(self):
        # hypercontractivity instance with product Q and c1 = c2 = 1
        m1 = np.array([0.3, 0.7])
        m2 = np.array([0.6, 0.4])
        Q = np.outer(m1, m2)
        prob = FRBLProblem(
            reverse=[(m1, 1.0), (m2, 1.0)],
            forward=[(np.eye(4), Q.reshape(-1), 1.0)],
        )
        rep = best_frbl_constant(prob, grid_step=0.02)
        assert abs(rep.value) <= 1e-9

    def test_doubly_symmetric_vs_grid_oracle(self):
        Q = doubly_symmetric(0.05)
        prob = FRBLProblem(
            reverse=[(Q.sum(1), 1.0), (Q.sum(0), 1.0)],
            forward=[(np.eye(4), Q.reshape(-1), 1.0)],
        )
        rep = best_frbl_constant(prob, grid_step=0.02)
        # independent oracle: same marginal grid, line-search inner solves
        grid = np.linspace(0.0, 1.0, 51)
        best = -math.inf
        for p in grid:
            for q in grid:
                val = binary_coupling_value_oracle(Q, p, q, n_grid=20_001)
                val -= relative_entropy([p, 1 - p], Q.sum(1))
                val -= relative_entropy([q, 1 - q], Q.sum(0))
                best = max(best, val)
        assert abs(rep.value - best) < 5e-3


class TestFunctionalCheck:
    def test_constant_functions(self):
        Q = np.array([[0.4, 0.1], [0.2, 0.3]])
        prob = FRBLProblem(
            reverse=[(Q.sum(1), 1.0), (Q.sum(0), 1.0)],
            forward=[(np.eye(4), Q.reshape(-1), 1.0)],
            d=0.5,
        )
        rep = frbl_functional_check(prob, [np.ones(2), np.ones(2)], [np.ones(4)])
        assert rep.passed
        # slack = d + sum c_j ln mu_j(1) - sum b_i ln nu_i(1) = d here
        assert abs(rep.margin - 0.5) < 1e-12

    def test_constraint_violation_reported(self):
        Q = np.array([[0.4, 0.1], [0.2, 0.3]])
        prob = FRBLProblem(
            reverse=[(Q.sum(1), 1.0), (Q.sum(0), 1.0)],
            forward=[(np.eye(4), Q.reshape(-1), 1.0)],
        )
        rep = frbl_functional_check(
            prob, [np.array([2.0, 2.0]), np.ones(2)], [np.ones(4)]
        )
        assert not rep.passed
        assert rep.details["constraint_violation"] > 0

    def test_sup_convolution_is_tight(self):
        g = [np.array([1.0, 2.0]), np.array([1.5, 0.5])]
        phi = [0, 1, 1, 0]  # XOR
        f1 = sup_convolution_f(g, phi, 2)
        # tightness: at every z the constraint holds, with equality on argmax
        prod = np.multiply.outer(g[0], g[1]).reshape(-1)
        bound = f1[np.array(phi)]
        assert np.all(prod <= bound + 1e-12)
        for y in (0, 1):
            sel = [i for i, v in enumerate(phi) if v == y]
            assert any(abs(prod[i] - f1[y]) < 1e-12 for i in sel)

    def test_weak_duality_sampled(self):
        Q = doubly_symmetric(0.05)
        base = FRBLProblem(
            reverse=[(Q.sum(1), 1.0), (Q.sum(0), 1.0)],
            forward=[(np.eye(4), Q.reshape(-1), 1.0)],
        )
        d_star = best_frbl_constant(base, grid_step=0.02).value
        prob = FRBLProblem(base.reverse, base.forward, d=d_star + 1e-6)
        rng = np.random.default_rng(5)
        count = 0
        for _ in range(100):
            f1 = np.exp(rng.normal(size=4))
            # project (g1, g2) onto feasibility for this f1
            logf = np.log(f1).reshape(2, 2)
            g1 = np.exp(logf.min(axis=1) * 0.5)
            g2 = np.exp((logf - np.log(g1)[:, None] * 1.0).min(axis=0))
            rep = frbl_functional_check(prob, [g1, g2], [f1])
            assert rep.passed, rep.details
            count += 1
        assert count == 100


class TestSupConvolution:
    def test_ones(self):
        f = sup_convolution_f([np.ones(2), np.ones(2)], [0, 0, 1, 0], 3)
        npt.assert_allclose(f, [1.0, 1.0, 0.0])

    def test_xor_enumeration(self):
        f = sup_convolution_f([np.array([1.0, 2.0]), np.array([1.0, 3.0])], [0, 1, 1, 0], 2)
        npt.assert_allclose(f, [6.0, 3.0])

    def test_injective(self):
        g = [np.array([1.0, 2.0]), np.array([3.0, 4.0])]
        f = sup_convolution_f(g, [0, 1, 2, 3], 4)
        npt.assert_allclose(f, np.multiply.outer(g[0], g[1]).reshape(-1))


class TestCoupling:
    def test_validation(self):
        with pytest.raises(ValueError):
            Coupling([0.5, 0.6], (2, 1))
        c = Coupling([0.25, 0.25, 0.25, 0.25], (2, 2))
        npt.assert_allclose(c.marginal(0).weights, [0.5, 0.5])

    def test_special_case_collapse(self):
        # l=1 identity reverse: frbl deficit equals the forward deficit - d
        rng = np.random.default_rng(6)
        QX = DiscreteDistribution(rng.dirichlet(np.ones(3)))
        K = Kernel(rng.dirichlet(np.ones(3), size=3))
        mu = pushforward(QX, K)
        c = 0.9
        d = 0.21
        fprob = ForwardBLProblem(QX, np.zeros(3), [(K, mu, c)])
        rprob = FRBLProblem([(QX.weights, 1.0)], [(K.matrix, mu.weights, c)], d=d)
        from blkit.forward import entropic_deficit

        for _ in range(10):
            P = DiscreteDistribution(rng.dirichlet(np.ones(3)))
            lhs = frbl_entropic_deficit(rprob, [P])
            rhs = entropic_deficit(fprob, P) - d
            assert abs(lhs - rhs) < 1e-12
