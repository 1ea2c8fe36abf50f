import math

import numpy as np
import numpy.testing as npt
import pytest

from blkit.forward import (
    BASolverOptions,
    ForwardBLProblem,
    best_constant,
    best_constant_bruteforce,
    entropic_deficit,
    functional_gap,
    induced_functions,
    simplex_grid,
    tilt_input,
    verify_duality,
)
from blkit.measures import (
    CostFunction,
    DiscreteDistribution,
    DiscreteMeasure,
    Kernel,
)


def direct_deficit(prob, p):
    """Test-local deficit evaluation by plain sums (independent oracle)."""
    p = np.asarray(p, dtype=float)
    nu = prob.nu.weights
    if np.any(p[nu == 0] > 0):
        return -math.inf
    d = prob.d.values
    if np.any(p[~np.isfinite(d)] > 0):
        return -math.inf
    total = 0.0
    for K, mu, c in prob.channels:
        py = p @ K.matrix
        for y in range(mu.n):
            if py[y] > 0:
                if mu.weights[y] == 0:
                    return math.inf
                total += c * py[y] * math.log(py[y] / mu.weights[y])
    for x in range(p.size):
        if p[x] > 0:
            total -= p[x] * math.log(p[x] / nu[x]) + p[x] * d[x]
    return total


def random_canonical_problem(rng, n=3, m=1):
    QX = DiscreteDistribution(rng.dirichlet(np.ones(n)))
    kernels = [
        (Kernel(rng.dirichlet(np.ones(n), size=n)), float(rng.uniform(0.3, 1.2)))
        for _ in range(m)
    ]
    return ForwardBLProblem.canonical(QX, kernels)


class TestSimplexGrid:
    def test_counts(self):
        assert simplex_grid(1, 0.1).shape == (1, 1)
        g = simplex_grid(2, 0.5)
        assert g.shape == (3, 2)
        g3 = simplex_grid(3, 0.1)
        assert g3.shape[0] == math.comb(12, 2)
        npt.assert_allclose(g3.sum(axis=1), 1.0)
        # vertices are present
        assert any(np.array_equal(row, [1.0, 0.0, 0.0]) for row in g3)


class TestEntropicDeficit:
    def test_zero_at_reference(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.4, 0.6]), [(Kernel.bsc(0.2), 0.7)]
        )
        assert abs(entropic_deficit(prob, prob.nu.normalized())) < 1e-12

    def test_identity_channel_identically_zero(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.4, 0.6]), [(Kernel.identity(2), 1.0)]
        )
        rng = np.random.default_rng(0)
        for _ in range(20):
            P = DiscreteDistribution(rng.dirichlet(np.ones(2)))
            assert abs(entropic_deficit(prob, P)) < 1e-12

    def test_bsc_against_direct_oracle(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.5, 0.5]), [(Kernel.bsc(0.1), 0.9)]
        )
        P = DiscreteDistribution([0.9, 0.1])
        got = entropic_deficit(prob, P)
        assert abs(got - direct_deficit(prob, P.weights)) < 1e-13

    def test_not_dominated_is_minus_inf(self):
        prob = ForwardBLProblem(
            DiscreteMeasure([1.0, 0.0]),
            CostFunction.zero(2),
            [(Kernel.identity(2), DiscreteMeasure([0.5, 0.5]), 1.0)],
        )
        assert entropic_deficit(prob, DiscreteDistribution([0.5, 0.5])) == -math.inf

    def test_random_against_direct_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            prob = random_canonical_problem(rng, n=3, m=2)
            P = DiscreteDistribution(rng.dirichlet(np.ones(3)))
            assert abs(
                entropic_deficit(prob, P) - direct_deficit(prob, P.weights)
            ) < 1e-12


class TestFunctionalGap:
    def test_all_ones(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.3, 0.7]), [(Kernel.bsc(0.25), 0.8)]
        )
        assert abs(functional_gap(prob, [np.ones(2)])) < 1e-12

    def test_induced_at_reference_is_tight(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.3, 0.7]), [(Kernel.bsc(0.25), 0.8)]
        )
        f = induced_functions(prob, prob.nu.normalized())
        assert abs(functional_gap(prob, f)) < 1e-12

    def test_random_against_brute_force(self):
        rng = np.random.default_rng(11)
        prob = random_canonical_problem(rng, n=2, m=2)
        for _ in range(20):
            f = [np.exp(rng.normal(size=2)) for _ in range(2)]
            # brute-force log-sum evaluation on the 2-letter alphabet
            lhs = 0.0
            for x in range(2):
                expo = 0.0
                for (K, _, _), fj in zip(prob.channels, f):
                    expo += float(K.matrix[x] @ np.log(fj))
                lhs += prob.nu.weights[x] * math.exp(expo)
            rhs = 0.0
            for (K, mu, c), fj in zip(prob.channels, f):
                rhs += c * math.log(float(mu.weights @ fj ** (1 / c)))
            expect = math.log(lhs) - rhs
            assert abs(functional_gap(prob, f) - expect) < 1e-12

    def test_zero_function_rejected(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.3, 0.7]), [(Kernel.bsc(0.25), 0.8)]
        )
        with pytest.raises(ValueError):
            functional_gap(prob, [np.zeros(2)])


class TestInducedAndTilt:
    def test_induced_at_reference(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.3, 0.7]), [(Kernel.bsc(0.25), 0.8)]
        )
        f = induced_functions(prob, prob.nu.normalized())
        npt.assert_allclose(f[0], 1.0, atol=1e-12)

    def test_ratio(self):
        prob = ForwardBLProblem(
            DiscreteMeasure([0.5, 0.5]),
            CostFunction.zero(2),
            [(Kernel.identity(2), DiscreteMeasure([0.5, 0.5]), 1.0)],
        )
        f = induced_functions(prob, DiscreteDistribution([0.6, 0.4]))
        npt.assert_allclose(f[0], [1.2, 0.8], atol=1e-14)

    def test_ratio_power(self):
        prob = ForwardBLProblem(
            DiscreteMeasure([0.5, 0.5]),
            CostFunction.zero(2),
            [(Kernel.identity(2), DiscreteMeasure([0.5, 0.5]), 0.5)],
        )
        f = induced_functions(prob, DiscreteDistribution([0.6, 0.4]))
        npt.assert_allclose(f[0], [math.sqrt(1.2), math.sqrt(0.8)], atol=1e-14)

    def test_induced_absolute_continuity_error(self):
        prob = ForwardBLProblem(
            DiscreteMeasure([0.5, 0.5]),
            CostFunction.zero(2),
            [(Kernel.identity(2), DiscreteMeasure([1.0, 0.0]), 1.0)],
        )
        with pytest.raises(ValueError):
            induced_functions(prob, DiscreteDistribution([0.5, 0.5]))

    def test_tilt_trivial(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.3, 0.7]), [(Kernel.bsc(0.25), 0.8)]
        )
        P, d0 = tilt_input(prob, [np.ones(2)])
        npt.assert_allclose(P.weights, [0.3, 0.7], atol=1e-14)
        assert abs(d0) < 1e-14

    def test_tilt_two_point_normalization(self):
        prob = ForwardBLProblem(
            DiscreteMeasure([0.5, 0.5]),
            CostFunction.zero(2),
            [(Kernel.identity(2), DiscreteMeasure([0.5, 0.5]), 0.7)],
        )
        P, _ = tilt_input(prob, [np.array([2.0, 1.0])])
        npt.assert_allclose(P.weights, [2 / 3, 1 / 3], atol=1e-14)

    def test_tilt_infinite_cost(self):
        prob = ForwardBLProblem(
            DiscreteMeasure([0.5, 0.5]),
            CostFunction([math.inf, 0.0]),
            [(Kernel.identity(2), DiscreteMeasure([0.5, 0.5]), 1.0)],
        )
        P, _ = tilt_input(prob, [np.ones(2)])
        npt.assert_allclose(P.weights, [0.0, 1.0], atol=1e-15)

    def test_tilt_zero_mass_error(self):
        prob = ForwardBLProblem(
            DiscreteMeasure([0.5, 0.5]),
            CostFunction([math.inf, 0.0]),
            [(Kernel.identity(2), DiscreteMeasure([0.5, 0.5]), 1.0)],
        )
        with pytest.raises(ValueError):
            tilt_input(prob, [np.array([1.0, 0.0])])


class TestBestConstant:
    def test_identity_channel(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.4, 0.6]), [(Kernel.identity(2), 1.0)]
        )
        rep = best_constant(prob, BASolverOptions(restarts=3))
        assert abs(rep.value) < 1e-10
        assert rep.converged

    def test_constant_kernel(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.4, 0.6]),
            [(Kernel([[0.5, 0.5], [0.5, 0.5]]), 1.0)],
        )
        rep = best_constant(prob, BASolverOptions(restarts=3))
        assert abs(rep.value) < 1e-10

    def test_bsc_against_bruteforce(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.5, 0.5]), [(Kernel.bsc(0.1), 0.8)]
        )
        rep = best_constant(prob)
        bf = best_constant_bruteforce(prob, 0.01)
        assert abs(rep.value - bf) <= 5e-3

    def test_monotone_trace(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            prob = random_canonical_problem(rng, n=3, m=2)
            rep = best_constant(prob, BASolverOptions(restarts=4))
            diffs = np.diff(rep.objective_trace)
            assert np.all(diffs >= -1e-12)

    def test_fixed_point_consistency(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            prob = random_canonical_problem(rng, n=3, m=1)
            rep = best_constant(prob, BASolverOptions(tol=1e-13, max_iters=50_000))
            P_star = rep.argmax_PX
            P_next, _ = tilt_input(prob, induced_functions(prob, P_star))
            assert np.max(np.abs(P_next.weights - P_star.weights)) <= 1e-7

    def test_scaling_shifts_constant(self):
        # replacing mu_1 <- exp(t/c_1) mu_1 shifts the constant by exactly -t
        rng = np.random.default_rng(19)
        prob = random_canonical_problem(rng, n=2, m=1)
        K, mu, c = prob.channels[0]
        t = 0.37
        scaled = ForwardBLProblem(
            prob.nu,
            prob.d,
            [(K, DiscreteMeasure(math.exp(t / c) * mu.weights), c)],
        )
        v0 = best_constant_bruteforce(prob, 0.01)
        v1 = best_constant_bruteforce(scaled, 0.01)
        assert abs((v1 - v0) + t) < 1e-10

    def test_identity_point_mass_sweep(self):
        # m=1, identity kernel, c=1: J is linear in P, so the best constant
        # is the maximum over point masses of ln(nu/mu) - d
        nu = DiscreteMeasure([0.5, 0.3, 0.2])
        mu = DiscreteMeasure([0.2, 0.5, 0.3])
        d = CostFunction([0.1, 0.0, 0.4])
        prob = ForwardBLProblem(nu, d, [(Kernel.identity(3), mu, 1.0)])
        expect = max(
            math.log(nu.weights[x] / mu.weights[x]) - d.values[x] for x in range(3)
        )
        bf = best_constant_bruteforce(prob, 0.05)
        rep = best_constant(prob)
        assert abs(bf - expect) < 1e-12
        assert abs(rep.value - expect) < 1e-7


class TestBruteForce:
    def test_guard(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution(np.full(5, 0.2)), [(Kernel.identity(5), 1.0)]
        )
        with pytest.raises(ValueError):
            best_constant_bruteforce(prob, 0.1)

    def test_monotone_refinement(self):
        rng = np.random.default_rng(23)
        prob = random_canonical_problem(rng, n=3, m=1)
        coarse = best_constant_bruteforce(prob, 0.1)
        fine = best_constant_bruteforce(prob, 0.01)
        assert fine >= coarse - 1e-12

    def test_solver_agreement_on_random_problems(self):
        rng = np.random.default_rng(29)
        for _ in range(4):
            prob = random_canonical_problem(rng, n=3, m=1)
            rep = best_constant(prob)
            bf = best_constant_bruteforce(prob, 0.01)
            assert abs(rep.value - bf) <= 5e-3


class TestVerifyDuality:
    def test_identity(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.4, 0.6]), [(Kernel.identity(2), 1.0)]
        )
        rep = verify_duality(prob)
        assert rep.passed

    def test_random_two_letter_problems(self):
        rng = np.random.default_rng(31)
        for seed in range(20):
            QX = DiscreteDistribution(rng.dirichlet(np.ones(2)))
            K = Kernel(rng.dirichlet(np.ones(2), size=2))
            c = float(rng.uniform(0.3, 1.5))
            prob = ForwardBLProblem.canonical(QX, [(K, c)])
            rep = verify_duality(prob, BASolverOptions(rng_seed=seed))
            assert rep.passed, rep.details

    def test_bsc_quarter(self):
        prob = ForwardBLProblem.canonical(
            DiscreteDistribution([0.5, 0.5]), [(Kernel.bsc(0.25), 1.0)]
        )
        rep = verify_duality(prob)
        assert rep.passed
        assert abs(rep.details["value"] - rep.details["functional_gap_at_optimum"]) <= 1e-6

    def test_weak_duality_vs_bruteforce(self):
        rng = np.random.default_rng(37)
        prob = random_canonical_problem(rng, n=3, m=1)
        bf = best_constant_bruteforce(prob, 0.02)
        for _ in range(30):
            f = [np.exp(rng.normal(size=3))]
            assert functional_gap(prob, f) <= bf + 5e-3
