"""ReLU networks as weighted DAGs with skip connections, a univariate
piecewise-linear builder, and the assembly of the full decomposition
network.

The builder realizes the interpolant of a sampled function as
c_0 + sum_i a_i * ReLU(x - t_i), a depth-2 network whose size is linear
in the knot count. The assembled network replicates the inner net once
per (coordinate, family) pair with the family shift applied through
hinge biases, wires the weighted sums into one outer-net copy per
family, and sums the copies.

Network size W counts edges plus nonzero biases; depth L is the largest
layer index with inputs at 0. Bulk evaluation of big networks goes
through the interpolant form, which the tests pin to the explicit
forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, InternalCheckError
from .params import KstParams, LambdaCoeffs

MATERIALIZE_UNIT_CAP = 2_000_000


@dataclass(frozen=True)
class Unit:
    id: int
    kind: str  # "input" | "relu" | "linear"
    layer: int
    bias: float


class ReluNetwork:
    """Immutable weighted DAG of ReLU and linear units."""

    def __init__(
        self,
        units: Sequence[Unit],
        edges: Sequence[tuple[int, int, float]],
        input_ids: Sequence[int],
        output_ids: Sequence[int],
        domain: tuple[float, float] | None = None,
    ):
        self.units = list(units)
        self.edges = list(edges)
        self.input_ids = list(input_ids)
        self.output_ids = list(output_ids)
        self.domain = domain
        by_id = {u.id: u for u in self.units}
        if len(by_id) != len(self.units):
            raise InternalCheckError("duplicate unit ids")
        for src, dst, _ in self.edges:
            if by_id[dst].layer <= by_id[src].layer:
                raise InternalCheckError(
                    f"edge {src}->{dst} does not increase the layer index"
                )
        self._by_id = by_id
        self._incoming: dict[int, list[tuple[int, float]]] = {u.id: [] for u in units}
        for src, dst, w in self.edges:
            self._incoming[dst].append((src, w))

    @property
    def W(self) -> int:
        return len(self.edges) + sum(1 for u in self.units if u.bias != 0.0)

    @property
    def L(self) -> int:
        return max(u.layer for u in self.units)

    def _ordered(self) -> list[Unit]:
        return sorted(self.units, key=lambda u: (u.layer, u.id))

    def eval_net(self, inputs: Sequence[float]) -> list[float]:
        if len(inputs) != len(self.input_ids):
            raise DomainError(
                f"expected {len(self.input_ids)} inputs, got {len(inputs)}"
            )
        vals: dict[int, float] = {}
        for uid, x in zip(self.input_ids, inputs):
            vals[uid] = float(x)
        for unit in self._ordered():
            if unit.kind == "input":
                continue
            acc = unit.bias
            for src, w in self._incoming[unit.id]:
                acc += w * vals[src]
            vals[unit.id] = max(acc, 0.0) if unit.kind == "relu" else acc
        return [vals[o] for o in self.output_ids]

    def eval_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.input_ids):
            raise DomainError(
                f"expected {len(self.input_ids)} inputs, got {X.shape[1]}"
            )
        vals: dict[int, np.ndarray] = {}
        for col, uid in enumerate(self.input_ids):
            vals[uid] = X[:, col]
        for unit in self._ordered():
            if unit.kind == "input":
                continue
            acc = np.full(X.shape[0], unit.bias)
            for src, w in self._incoming[unit.id]:
                acc += w * vals[src]
            vals[unit.id] = np.maximum(acc, 0.0) if unit.kind == "relu" else acc
        return np.stack([vals[o] for o in self.output_ids], axis=1)

    def to_json_dict(self) -> dict:
        f17 = lambda v: format(float(v), ".17g")
        units = [
            {"id": u.id, "kind": u.kind, "layer": u.layer, "bias": f17(u.bias)}
            for u in self._ordered()
        ]
        edges = [
            {"from": s, "to": d, "w": f17(w)}
            for s, d, w in sorted(self.edges, key=lambda e: (e[0], e[1]))
        ]
        meta = {"W": self.W, "L": self.L}
        if self.domain is not None:
            meta["domain"] = [f17(self.domain[0]), f17(self.domain[1])]
        return {"units": units, "edges": edges, "meta": meta}


def size_report(net) -> dict:
    """Size and depth of a network or network-like object."""
    return {"W": net.W, "L": net.L}


@dataclass
class UnivariateNet:
    """Piecewise-linear interpolant of a reference function on [0, M],
    realizable exactly as a depth-2 ReLU network."""

    knots: np.ndarray
    values: np.ndarray
    domain: float
    reference: Callable[[np.ndarray], np.ndarray]
    eps_measured: float
    _network: ReluNetwork | None = field(default=None, repr=False)

    @property
    def n_segments(self) -> int:
        return len(self.knots) - 1

    def eval(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.knots, self.values)

    def hinge_coeffs(self) -> tuple[float, np.ndarray, np.ndarray]:
        """(c0, hinge positions t_i, jump coefficients a_i)."""
        slopes = np.diff(self.values) / np.diff(self.knots)
        a = np.empty_like(slopes)
        a[0] = slopes[0]
        a[1:] = np.diff(slopes)
        return float(self.values[0]), self.knots[:-1].copy(), a

    @property
    def W(self) -> int:
        c0, t, a = self.hinge_coeffs()
        return 2 * len(t) + int(np.count_nonzero(t)) + (1 if c0 != 0.0 else 0)

    @property
    def L(self) -> int:
        return 2

    @property
    def network(self) -> ReluNetwork:
        if self._network is None:
            c0, t, a = self.hinge_coeffs()
            units = [Unit(0, "input", 0, 0.0)]
            edges = []
            out_id = len(t) + 1
            for i, (ti, ai) in enumerate(zip(t, a), start=1):
                units.append(Unit(i, "relu", 1, float(-ti)))
                edges.append((0, i, 1.0))
                edges.append((i, out_id, float(ai)))
            units.append(Unit(out_id, "linear", 2, c0))
            net = ReluNetwork(units, edges, [0], [out_id], domain=(0.0, self.domain))
            if net.W != self.W:
                raise InternalCheckError("size accounting does not match the graph")
            self._network = net
        return self._network


def build_univariate(
    g: Callable,
    M: float,
    N: int,
    knots: np.ndarray | None = None,
    audit_factor: int = 10,
    values: np.ndarray | None = None,
) -> UnivariateNet:
    """Interpolate g on [0, M] with N uniform segments (or given knots).

    The measured error is the max deviation from g on a grid refining
    every cell at least ``audit_factor`` times; coarse builds get extra
    refinement so the sup estimate is not limited by the audit density.
    ``values`` may supply exact knot samples when g itself is a cheaper
    approximation of them.
    """
    if knots is None:
        if N < 1:
            raise DomainError("N must be >= 1")
        knots = np.linspace(0.0, float(M), N + 1)
    else:
        knots = np.asarray(knots, dtype=float)
        if knots.ndim != 1 or len(knots) < 2:
            raise DomainError("need at least two knots")
        if np.any(np.diff(knots) <= 0):
            raise DomainError("knots must be strictly increasing")
        if knots[0] != 0.0 or abs(knots[-1] - M) > 1e-12:
            raise DomainError("knots must span [0, M]")
    gv = _as_batch(g)
    if values is None:
        values = gv(knots)
    else:
        values = np.asarray(values, dtype=float)
        if values.shape != knots.shape:
            raise DomainError("knot values do not match the knot set")
    if not np.all(np.isfinite(values)):
        raise DomainError("reference function is not finite on the knot set")
    factor = max(audit_factor, -(-1024 // (len(knots) - 1)))
    left = knots[:-1, None]
    right = knots[1:, None]
    frac = np.arange(factor)[None, :] / factor
    audit = np.append((left + (right - left) * frac).ravel(), knots[-1])
    g_audit = gv(audit)
    interp = np.interp(audit, knots, values)
    eps = float(np.max(np.abs(g_audit - interp)))
    return UnivariateNet(
        knots=knots,
        values=np.asarray(values, dtype=float),
        domain=float(M),
        reference=gv,
        eps_measured=eps,
    )


def _as_batch(g: Callable) -> Callable[[np.ndarray], np.ndarray]:
    def batched(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        try:
            out = g(x)
            out = np.asarray(out, dtype=float)
            if out.shape == x.shape:
                return out
        except (TypeError, ValueError, DomainError):
            pass
        return np.asarray([g(float(v)) for v in x.ravel()]).reshape(x.shape)

    return batched


@dataclass
class AssembledKst:
    """The full decomposition network with its size accounting.

    ``network`` materializes the explicit DAG on demand (refused above a
    unit cap); bulk evaluation composes the univariate interpolants,
    which the equivalence tests pin to the explicit forward pass.
    """

    psi_net: UnivariateNet
    phi_nets: list[UnivariateNet]
    params: KstParams
    lam_floats: np.ndarray
    W: int
    L: int
    fig3_W: int
    fig3_depth: int
    aggregation_weights: int
    _network: ReluNetwork | None = field(default=None, repr=False)

    def eval_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p = self.params
        a_f = float(p.a)
        total = np.zeros(X.shape[0])
        for j in range(p.m + 1):
            y = np.zeros(X.shape[0])
            for i in range(p.n):
                y = y + self.lam_floats[i] * self.psi_net.eval(X[:, i] + j * a_f)
            total = total + self.phi_nets[j].eval(y)
        return total

    @property
    def unit_count(self) -> int:
        p = self.params
        n_psi = self.psi_net.n_segments
        return (
            p.n
            + p.n * (p.m + 1) * (n_psi + 1)
            + (p.m + 1)
            + sum(net.n_segments + 1 for net in self.phi_nets)
            + 1
        )

    @property
    def network(self) -> ReluNetwork:
        if self._network is None:
            if self.unit_count > MATERIALIZE_UNIT_CAP:
                raise DomainError(
                    f"{self.unit_count} units exceeds the materialization cap"
                )
            self._network = _materialize(self)
            if self._network.W != self.W or self._network.L != self.L:
                raise InternalCheckError("assembly accounting mismatch")
        return self._network


def assemble_kst(
    psi_net: UnivariateNet,
    phi_nets: Sequence[UnivariateNet],
    params: KstParams,
    lambdas: LambdaCoeffs,
) -> AssembledKst:
    """Wire the univariate nets into the full approximant network."""
    p = params
    if len(phi_nets) != p.m + 1:
        raise DomainError(f"need {p.m + 1} outer nets, got {len(phi_nets)}")
    a_f = float(p.a)
    if psi_net.domain < 1.0 + p.m * a_f - 1e-12:
        raise DomainError("inner net domain does not cover [0, 1 + m*a]")
    phi_sup = float(p.phi_domain_sup)
    for net in phi_nets:
        if net.domain < phi_sup - 1e-9:
            raise DomainError("outer net domain does not cover the image interval")
    lam_floats = np.asarray([float(v) for v in lambdas.values])

    _, t_psi, _ = psi_net.hinge_coeffs()
    W_psi = psi_net.W
    W_phis = [net.W for net in phi_nets]

    # Exact edge and bias accounting of the assembled graph. Each inner
    # copy keeps its 2N edges but the family shift changes which hinge
    # biases vanish; the aggregation term collects the lambda edges, the
    # final sum, and those bias deltas.
    copies_bias_delta = 0
    for j in range(p.m + 1):
        shifted_nonzero = int(np.count_nonzero(j * a_f - t_psi))
        copies_bias_delta += p.n * (shifted_nonzero - int(np.count_nonzero(t_psi)))
    lambda_edges = p.n * (p.m + 1)
    sum_edges = p.m + 1
    aggregation = lambda_edges + sum_edges + copies_bias_delta
    W_total = p.n * (p.m + 1) * W_psi + sum(W_phis) + aggregation

    fig3 = (2 * p.n**2 + p.n) * W_psi + (2 * p.n + 1) * W_phis[0]
    return AssembledKst(
        psi_net=psi_net,
        phi_nets=list(phi_nets),
        params=p,
        lam_floats=lam_floats,
        W=W_total,
        L=6,
        fig3_W=fig3,
        fig3_depth=psi_net.L + phi_nets[0].L,
        aggregation_weights=aggregation,
    )


def _materialize(asm: AssembledKst) -> ReluNetwork:
    p = asm.params
    a_f = float(p.a)
    units: list[Unit] = []
    edges: list[tuple[int, int, float]] = []
    next_id = 0

    def add(kind, layer, bias):
        nonlocal next_id
        units.append(Unit(next_id, kind, layer, float(bias)))
        next_id += 1
        return next_id - 1

    input_ids = [add("input", 0, 0.0) for _ in range(p.n)]
    c0_psi, t_psi, a_psi = asm.psi_net.hinge_coeffs()

    agg_inputs: dict[int, list[tuple[int, float]]] = {}
    for j in range(p.m + 1):
        agg_inputs[j] = []
        for i in range(p.n):
            out_id_edges = []
            for tk, ak in zip(t_psi, a_psi):
                h = add("relu", 1, j * a_f - tk)
                edges.append((input_ids[i], h, 1.0))
                out_id_edges.append((h, float(ak)))
            out = add("linear", 2, c0_psi)
            for h, ak in out_id_edges:
                edges.append((h, out, ak))
            agg_inputs[j].append((out, float(asm.lam_floats[i])))

    final_inputs = []
    for j in range(p.m + 1):
        agg = add("linear", 3, 0.0)
        for out, lam in agg_inputs[j]:
            edges.append((out, agg, lam))
        c0_phi, t_phi, a_phi = asm.phi_nets[j].hinge_coeffs()
        hinge_edges = []
        for tk, ak in zip(t_phi, a_phi):
            h = add("relu", 4, -tk)
            edges.append((agg, h, 1.0))
            hinge_edges.append((h, float(ak)))
        out = add("linear", 5, c0_phi)
        for h, ak in hinge_edges:
            edges.append((h, out, ak))
        final_inputs.append(out)

    final = add("linear", 6, 0.0)
    for out in final_inputs:
        edges.append((out, final, 1.0))
    return ReluNetwork(units, edges, input_ids, [final])
