import json
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from kst.bumps import b_k, grid_shift
from kst.decompose import (
    DecompositionCaps,
    active_bump_counts,
    choose_k_r,
    evaluate_f_r,
    evaluate_phi,
    init_state,
    iterate,
    lipschitz_report,
    phi_batch,
    state_from_json_dict,
    state_to_json_dict,
)
from kst.errors import BudgetError, DomainError
from kst.params import beta, make_params
from kst.target import builtin_target
from oracles import dense_phi_sum


@pytest.fixture(scope="module")
def product_r1():
    state = init_state(builtin_target("product", 2))
    return iterate(state)


@pytest.fixture(scope="module")
def zero_state():
    return init_state(builtin_target("zero", 2))


class TestChooseK:
    def test_zero_residual_gives_one(self, zero_state):
        assert choose_k_r(zero_state) == (1, False)

    def test_product_picks_two(self):
        state = init_state(builtin_target("product", 2))
        k, warned = choose_k_r(state)
        assert k == 2
        assert not warned

    def test_warned_when_nothing_qualifies(self, product_r1):
        # the layer-1 teeth make the residual oscillate at every depth
        k, warned = choose_k_r(product_r1)
        assert k == product_r1.caps.k_max
        assert warned


class TestIterate:
    def test_zero_target_layers_are_null(self, zero_state):
        s1 = iterate(zero_state)
        assert s1.residual_norms == (0.0, 0.0)
        assert s1.k_list == (1,)
        for oa in s1.outer:
            assert len(oa.layers) == 1
            assert np.all(oa.layers[0].coeff == 0.0)

    def test_layer_shapes(self, product_r1):
        p = product_r1.params
        assert len(product_r1.outer) == p.m + 1
        k = product_r1.k_list[0]
        expected = (p.gamma**k + 1) ** p.n
        for oa in product_r1.outer:
            layer = oa.layers[0]
            assert layer.xi.size == expected
            assert np.all(np.diff(layer.xi) >= 0)

    def test_first_contraction(self, product_r1):
        p = product_r1.params
        assert product_r1.residual_norms[0] == 1.0
        assert product_r1.residual_norms[1] <= p.eta

    def test_two_iterations_contract(self):
        state = init_state(builtin_target("gaussian", 2))
        s2 = iterate(iterate(state))
        eta = s2.params.eta
        assert s2.residual_norms[1] <= eta * 1.0
        assert s2.residual_norms[2] <= eta**2 * 1.0

    def test_budget_guard(self, zero_state):
        small = DecompositionCaps(grid_budget=10)
        state = init_state(builtin_target("zero", 2), caps=small)
        with pytest.raises(BudgetError):
            iterate(state, force_k=2)

    def test_layer_coefficients_scale(self, product_r1):
        p = product_r1.params
        norm0 = product_r1.residual_norms[0]
        for oa in product_r1.outer:
            assert np.max(np.abs(oa.layers[0].coeff)) <= norm0 / (p.m + 1) + 1e-12


class TestEvaluatePhi:
    def test_empty_state_is_zero(self, zero_state):
        assert evaluate_phi(zero_state, 0, 0.5) == 0.0

    def test_outside_supports_is_zero(self, product_r1):
        layer = product_r1.outer[0].layers[0]
        y = float(layer.xi[0] + layer.plateau + 2 * layer.ramp)
        between = 0.5 * (y + float(layer.xi[1] - layer.ramp))
        assert evaluate_phi(product_r1, 0, between) == 0.0

    def test_plateau_midpoint_returns_coefficient(self, product_r1):
        layer = product_r1.outer[2].layers[0]
        idx = 100
        y = float(layer.xi[idx]) + layer.plateau / 2
        assert evaluate_phi(product_r1, 2, y) == pytest.approx(
            float(layer.coeff[idx]), abs=1e-15
        )

    def test_domain_guard(self, product_r1):
        sup = float(product_r1.params.phi_domain_sup)
        with pytest.raises(DomainError):
            evaluate_phi(product_r1, 0, sup)
        with pytest.raises(DomainError):
            evaluate_phi(product_r1, 0, -0.1)

    def test_sparse_equals_dense(self, product_r1):
        rng = random.Random(31)
        sup = float(product_r1.params.phi_domain_sup)
        for _ in range(1000):
            j = rng.randrange(5)
            y = rng.uniform(0.0, sup * 0.999)
            sparse = evaluate_phi(product_r1, j, y)
            dense = dense_phi_sum(product_r1, j, y)
            assert sparse == pytest.approx(dense, abs=1e-12)

    def test_batch_matches_single(self, product_r1):
        rng = random.Random(37)
        ys = np.asarray([rng.uniform(0.0, 2.0) for _ in range(500)])
        batch = phi_batch(product_r1, 1, ys)
        for y, got in zip(ys, batch):
            assert got == pytest.approx(evaluate_phi(product_r1, 1, float(y)), abs=1e-13)

    def test_layer_locality(self, product_r1):
        # interior supports are disjoint; a top-column bump may graze
        # one regular neighbour, so at most two bumps are ever active
        rng = random.Random(41)
        sup = float(product_r1.params.phi_domain_sup)
        doubles = 0
        for _ in range(500):
            counts = active_bump_counts(product_r1, rng.randrange(5), rng.uniform(0, sup))
            assert all(c <= 2 for c in counts)
            doubles += sum(c == 2 for c in counts)
        assert doubles <= 10

    def test_boundedness(self, product_r1):
        p = product_r1.params
        cap = sum(
            product_r1.residual_norms[ell] for ell in range(product_r1.r)
        ) / (p.m + 1)
        rng = random.Random(43)
        sup = float(p.phi_domain_sup)
        for _ in range(500):
            y = rng.uniform(0.0, sup * 0.999)
            assert abs(evaluate_phi(product_r1, 0, y)) <= cap + 1e-12


class TestEvaluateFr:
    def test_zero_state(self, zero_state):
        assert evaluate_f_r(zero_state, (0.3, 0.7)) == 0.0

    def test_pointwise_error_after_one_iteration(self, product_r1):
        rng = random.Random(47)
        eta = product_r1.params.eta
        f = product_r1.target
        worst = 0.0
        for _ in range(2000):
            x = (rng.random(), rng.random())
            worst = max(worst, abs(f(x) - evaluate_f_r(product_r1, x)))
        assert worst <= eta

    def test_grid_point_structure(self, product_r1):
        # at an interior grid point every family contributes the same
        # coefficient, so f_1(d) equals e_0(d); exact coordinates matter
        from kst.decompose import f_r_on_mesh

        q = [Fraction(3, 36), Fraction(7, 36)]
        got = f_r_on_mesh(product_r1, [[q[0]], [q[1]]])[0, 0]
        expected = float(q[0] * q[1])
        assert got == pytest.approx(expected, abs=1e-12)


class TestExtendedFamilyDisjointness:
    def test_overlaps_confined_to_top_column(self):
        # With the endpoint column added, exact disjointness holds for
        # every pair of interior bumps; the only overlapping pairs
        # involve a top-column anchor (a coordinate equal to 1), whose
        # image lambda_i * psi(1) = lambda_i shares digit structure
        # with regular images. At most one such neighbour exists.
        p = make_params(2)
        from kst.inner import InnerEvaluator
        from kst.params import lambda_coeffs

        lam = lambda_coeffs(p)
        ev = InnerEvaluator(p)
        bk = b_k(p, lam, 2)
        ramp = Fraction(1, p.gamma ** beta(p.n, 3))
        plateau_hi = (p.gamma - 2) * bk.hi
        for j in range(p.m + 1):
            s = grid_shift(p, 2, j)
            axis = [Fraction(i, 36) + s for i in range(37)]
            entries = sorted(
                (
                    lam.values[0] * ev.psi_exact_extended(d1)
                    + lam.values[1] * ev.psi_exact_extended(d2),
                    i1 == 36 or i2 == 36,
                )
                for i1, d1 in enumerate(axis)
                for i2, d2 in enumerate(axis)
            )
            overlapping = [
                (prev, nxt)
                for prev, nxt in zip(entries, entries[1:])
                if (nxt[0] - ramp) - (prev[0] + plateau_hi + ramp) <= 0
            ]
            assert overlapping, "the top column is known to graze its partners"
            for prev, nxt in overlapping:
                assert prev[1] or nxt[1]


class TestThreeDimensions:
    def test_gaussian_n3_contracts(self):
        # exercises the general mesh broadcasting and the n=3 constants
        caps = DecompositionCaps(audit_resolution=21, n_random=200)
        state = init_state(builtin_target("gaussian", 3), caps=caps)
        assert state.params.gamma == 8
        s1 = iterate(state)
        assert len(s1.outer) == s1.params.m + 1
        assert s1.residual_norms[1] <= s1.params.eta * s1.residual_norms[0]

    def test_modulus_paths_n3(self):
        state = init_state(
            builtin_target("ridge", 3),
            caps=DecompositionCaps(audit_resolution=15, n_random=100),
        )
        k, warned = choose_k_r(state)
        assert 1 <= k <= state.caps.k_max
        assert isinstance(warned, bool)


class TestLipschitzReport:
    def test_r0_rejected(self, zero_state):
        with pytest.raises(DomainError):
            lipschitz_report(zero_state)

    def test_single_layer_value(self, product_r1):
        rep = lipschitz_report(product_r1)
        p = product_r1.params
        expected = product_r1.residual_norms[0] * p.gamma ** beta(2, 3) / (p.m + 1)
        assert rep["nu_r"] == pytest.approx(expected, rel=1e-12)
        assert rep["nu_r"] == pytest.approx(6**7 / 5, rel=1e-12)

    def test_growth_bound_holds(self, product_r1):
        rep = lipschitz_report(product_r1)
        assert rep["within_bound"]
        p = product_r1.params
        manual = (
            product_r1.residual_norms[0]
            * product_r1.r
            * p.gamma ** (2 * p.n ** rep["C"])
            / (p.m + 1)
        )
        assert rep["K_C_bound"] == pytest.approx(manual, rel=1e-12)


class TestSerialization:
    def test_round_trip_evaluates_identically(self, product_r1):
        blob = json.dumps(state_to_json_dict(product_r1), sort_keys=True)
        loaded = state_from_json_dict(json.loads(blob))
        rng = random.Random(53)
        for _ in range(200):
            x = (rng.random(), rng.random())
            a = evaluate_f_r(product_r1, x)
            b = evaluate_f_r(loaded, x)
            assert math.isclose(a, b, rel_tol=0, abs_tol=1e-12)

    def test_round_trip_metadata(self, product_r1):
        d = state_to_json_dict(product_r1)
        loaded = state_from_json_dict(d)
        assert loaded.k_list == product_r1.k_list
        assert loaded.residual_norms == product_r1.residual_norms
        assert loaded.params == product_r1.params

    def test_deterministic_serialization(self, product_r1):
        a = json.dumps(state_to_json_dict(product_r1), sort_keys=True)
        b = json.dumps(state_to_json_dict(product_r1), sort_keys=True)
        assert a == b
