import math
import random
from fractions import Fraction

import numpy as np
import pytest

from kst.decompose import evaluate_phi, init_state, iterate, lipschitz_report
from kst.errors import DomainError
from kst.inner import InnerEvaluator
from kst.params import lambda_coeffs, make_params
from kst.relunet import (
    ReluNetwork,
    Unit,
    assemble_kst,
    build_univariate,
    size_report,
)
from kst.target import builtin_target


def single_relu():
    units = [Unit(0, "input", 0, 0.0), Unit(1, "relu", 1, 0.0)]
    return ReluNetwork(units, [(0, 1, 1.0)], [0], [1])


class TestEvalNet:
    def test_single_relu(self):
        net = single_relu()
        assert net.eval_net([-1.0]) == [0.0]
        assert net.eval_net([2.5]) == [2.5]

    def test_identity_from_two_relus(self):
        units = [
            Unit(0, "input", 0, 0.0),
            Unit(1, "relu", 1, 0.0),
            Unit(2, "relu", 1, 0.0),
            Unit(3, "linear", 2, 0.0),
        ]
        edges = [(0, 1, 1.0), (0, 2, -1.0), (1, 3, 1.0), (2, 3, -1.0)]
        net = ReluNetwork(units, edges, [0], [3])
        assert net.eval_net([0.7]) == [0.7]
        assert net.eval_net([-0.3]) == [-0.3]

    def test_clamp_realization(self):
        # sigma(x) = ReLU(x) - ReLU(x - 1)
        units = [
            Unit(0, "input", 0, 0.0),
            Unit(1, "relu", 1, 0.0),
            Unit(2, "relu", 1, -1.0),
            Unit(3, "linear", 2, 0.0),
        ]
        edges = [(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (2, 3, -1.0)]
        net = ReluNetwork(units, edges, [0], [3])
        assert net.eval_net([0.5]) == [0.5]
        assert net.eval_net([2.0]) == [1.0]
        assert net.eval_net([-1.0]) == [0.0]

    def test_arity_check(self):
        with pytest.raises(DomainError):
            single_relu().eval_net([1.0, 2.0])

    def test_batch_matches_single(self):
        net = single_relu()
        xs = np.linspace(-2, 2, 13).reshape(-1, 1)
        batch = net.eval_batch(xs)[:, 0]
        for x, got in zip(xs[:, 0], batch):
            assert got == net.eval_net([x])[0]


class TestBuildUnivariate:
    def test_linear_target_is_exact(self):
        net = build_univariate(lambda x: x, 1.0, 1)
        assert net.eps_measured == 0.0
        assert net.eval(0.37) == pytest.approx(0.37, abs=1e-15)

    def test_network_matches_interp(self):
        g = lambda x: np.sin(3 * x) + 0.2 * x
        uni = build_univariate(g, 2.0, 17)
        rng = random.Random(3)
        for _ in range(200):
            x = rng.uniform(0, 2)
            assert uni.network.eval_net([x])[0] == pytest.approx(
                float(uni.eval(x)), abs=1e-12
            )

    def test_exact_at_knots_and_midpoints(self):
        g = lambda x: np.cos(x)
        uni = build_univariate(g, 1.0, 9)
        for t, v in zip(uni.knots, uni.values):
            assert uni.network.eval_net([t])[0] == pytest.approx(float(v), abs=1e-12)
        mids = 0.5 * (uni.knots[:-1] + uni.knots[1:])
        expected = 0.5 * (uni.values[:-1] + uni.values[1:])
        for t, v in zip(mids, expected):
            assert uni.network.eval_net([t])[0] == pytest.approx(float(v), abs=1e-12)

    def test_psi_error_within_holder_bound(self):
        p = make_params(2)
        ev = InnerEvaluator(p)
        g = lambda x: ev.psi(Fraction(repr(float(x))), 9).value
        N = 36
        uni = build_univariate(g, 2.0 - 1e-9, N)
        assert uni.eps_measured <= p.nu * (2.0 / N) ** p.alpha

    def test_phi_error_within_lipschitz_bound(self):
        state = iterate(init_state(builtin_target("product", 2)))
        nu = lipschitz_report(state)["nu_r"]
        M = float(state.params.phi_domain_sup)
        eps_phi = 1.0
        N = math.ceil(nu * M / (2 * eps_phi))
        uni = build_univariate(lambda y: evaluate_phi(state, 0, float(y)), M - 1e-12, N)
        assert uni.eps_measured <= eps_phi

    def test_monotone_error_in_n(self):
        p = make_params(2)
        ev = InnerEvaluator(p)
        g = lambda x: ev.psi(Fraction(repr(float(x))), 9).value
        errs = [build_univariate(g, 2.0 - 1e-9, N).eps_measured for N in (8, 16, 32, 64)]
        assert all(errs[i + 1] <= errs[i] for i in range(len(errs) - 1))

    def test_outer_error_bounded_at_coarse_n(self):
        # An outer approximant is a comb of teeth a few 1e-5 wide, so a
        # few dozen uniform knots sample it at resonance and the error
        # is not monotone in N; it stays bounded by the tallest tooth,
        # and collapses once the knots are the exact breakpoints.
        import numpy as np
        from kst.decompose import phi_batch

        state = iterate(init_state(builtin_target("product", 2)))
        M = float(state.params.phi_domain_sup)
        g = lambda y: phi_batch(state, 0, np.asarray(y, dtype=float))
        tallest = max(
            float(np.max(np.abs(layer.coeff))) for layer in state.outer[0].layers
        )
        for N in (8, 16, 32, 64):
            uni = build_univariate(g, M, N)
            assert uni.eps_measured <= tallest + 1e-12
        from kst.pipeline import _corner_knots

        corners = _corner_knots(state, 0, M)
        exact = build_univariate(g, M, 0, knots=corners, audit_factor=4)
        assert exact.eps_measured <= 1e-9

    def test_size_formula(self):
        for N in (2, 5, 20):
            uni = build_univariate(lambda x: x * x, 1.0, N)
            assert N + 2 <= uni.W <= 3 * N + 4
            assert uni.W == uni.network.W

    def test_custom_knots(self):
        knots = np.array([0.0, 0.25, 0.3, 1.0])
        uni = build_univariate(lambda x: x**2, 1.0, 0, knots=knots)
        assert uni.n_segments == 3
        with pytest.raises(DomainError):
            build_univariate(lambda x: x, 1.0, 0, knots=np.array([0.1, 0.9]))


@pytest.fixture(scope="module")
def small_assembly():
    state = iterate(init_state(builtin_target("product", 2)))
    p = state.params
    lam = lambda_coeffs(p)
    ev = InnerEvaluator(p)
    psi = build_univariate(
        lambda x: ev.psi(Fraction(repr(float(x))), 7).value, 1.0 + p.m * float(p.a), 64
    )
    M_phi = float(p.phi_domain_sup)
    phis = [
        build_univariate(lambda y, j=j: evaluate_phi(state, j, float(y)), M_phi - 1e-12, 128)
        for j in range(p.m + 1)
    ]
    return state, assemble_kst(psi, phis, p, lam)


class TestAssembly:
    def test_branch_counts(self, small_assembly):
        state, asm = small_assembly
        assert len(asm.phi_nets) == 5
        net = asm.network
        psi_hinges = sum(
            1 for u in net.units if u.kind == "relu" and u.layer == 1
        )
        assert psi_hinges == 10 * asm.psi_net.n_segments

    def test_fig3_formula(self):
        # frozen arithmetic of the size formula at n=2
        n, W_psi, W_phi = 2, 10, 7
        assert (2 * n**2 + n) * W_psi + (2 * n + 1) * W_phi == 135

    def test_accounting_matches_graph(self, small_assembly):
        _, asm = small_assembly
        net = asm.network
        assert net.W == asm.W
        assert net.L == asm.L == 6
        literal_minus_fig3 = asm.W - asm.fig3_W
        assert literal_minus_fig3 == asm.aggregation_weights

    def test_assembled_equals_composition(self, small_assembly):
        state, asm = small_assembly
        p = state.params
        rng = random.Random(11)
        pts = np.asarray([[rng.random(), rng.random()] for _ in range(1000)])
        fast = asm.eval_batch(pts)
        a_f = float(p.a)
        for row in range(0, 1000, 97):
            x = pts[row]
            by_formula = sum(
                float(
                    asm.phi_nets[j].eval(
                        sum(
                            asm.lam_floats[i] * float(asm.psi_net.eval(x[i] + j * a_f))
                            for i in range(2)
                        )
                    )
                )
                for j in range(5)
            )
            dag = asm.network.eval_net(list(x))[0]
            assert abs(dag - by_formula) <= 1e-10
            assert abs(fast[row] - by_formula) <= 1e-10

    def test_domain_coverage_checks(self, small_assembly):
        state, _ = small_assembly
        p = state.params
        lam = lambda_coeffs(p)
        short_psi = build_univariate(lambda x: x, 0.5, 4)
        M_phi = float(p.phi_domain_sup)
        phis = [build_univariate(lambda y: 0.0 * y, M_phi, 4) for _ in range(5)]
        with pytest.raises(DomainError):
            assemble_kst(short_psi, phis, p, lam)

    def test_size_report(self, small_assembly):
        _, asm = small_assembly
        rep = size_report(asm)
        assert rep == {"W": asm.W, "L": 6}
        passthrough = ReluNetwork(
            [Unit(0, "input", 0, 0.0), Unit(1, "linear", 1, 0.0)],
            [(0, 1, 1.0)],
            [0],
            [1],
        )
        assert size_report(passthrough) == {"W": 1, "L": 1}
