"""Iterative construction of the outer functions.

One iteration picks a grid depth k_r fine enough that the current
residual oscillates by at most delta times its sup norm over one grid
cell, evaluates the residual at every level-k_r grid point, and adds a
layer of trapezoidal bumps to each of the m+1 outer approximants: the
bump for grid vector d sits at the image of d shifted by the family
index, with coefficient e_{r-1}(d)/(m+1).

Residual sup norms are measured on a fixed audit mesh plus a seeded
batch of random points; the true sup norm is unobservable and the same
estimator is used both for choosing k_r and for reporting.

States are immutable snapshots; iterate() returns a new one. The inner
evaluator's memo tables are shared caches whose population is
observationally invisible.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .bumps import b_k, grid_shift
from .errors import BudgetError, DomainError
from .inner import InnerEvaluator
from .params import KstParams, LambdaCoeffs, beta, lambda_coeffs, make_params
from .target import TargetFunction, target_from_provenance

STATE_SCHEMA = "kst-decomposition/1"


@dataclass(frozen=True)
class Layer:
    """One iteration's bumps for one family, sorted by image position."""

    k: int
    slope: float
    plateau: float
    ramp: float
    xi: np.ndarray
    coeff: np.ndarray


@dataclass(frozen=True)
class OuterApprox:
    j: int
    layers: tuple[Layer, ...]


@dataclass(frozen=True)
class DecompositionCaps:
    k_max: int = 3
    grid_budget: int = 10**6
    audit_resolution: int = 101
    n_random: int = 1000
    seed: int = 0


@dataclass
class DecompositionState:
    params: KstParams
    lambdas: LambdaCoeffs
    ev: InnerEvaluator
    target: TargetFunction
    caps: DecompositionCaps
    r: int
    k_list: tuple[int, ...]
    k_warnings: tuple[bool, ...]
    outer: tuple[OuterApprox, ...]
    residual_norms: tuple[float, ...]
    _caches: dict = field(default_factory=dict, repr=False)

    @property
    def k_trunc(self) -> int:
        return self.caps.k_max + 2

    def audit_axis(self) -> np.ndarray:
        got = self._caches.get("audit_axis")
        if got is None:
            got = np.linspace(0.0, 1.0, self.caps.audit_resolution)
            self._caches["audit_axis"] = got
        return got

    def audit_random(self) -> np.ndarray:
        got = self._caches.get("audit_random")
        if got is None:
            rng = np.random.Generator(np.random.PCG64(self.caps.seed))
            got = rng.random((self.caps.n_random, self.params.n))
            self._caches["audit_random"] = got
        return got


def init_state(
    target: TargetFunction,
    params: KstParams | None = None,
    caps: DecompositionCaps | None = None,
) -> DecompositionState:
    """Fresh state at r = 0 with the measured norm of the target."""
    params = make_params(target.dim) if params is None else params
    if params.n != target.dim:
        raise DomainError("target dimension does not match params")
    if caps is None:
        caps = DecompositionCaps(audit_resolution=101 if params.n == 2 else 31)
    state = DecompositionState(
        params=params,
        lambdas=lambda_coeffs(params),
        ev=InnerEvaluator(params),
        target=target,
        caps=caps,
        r=0,
        k_list=(),
        k_warnings=(),
        outer=tuple(OuterApprox(j, ()) for j in range(params.m + 1)),
        residual_norms=(),
    )
    state.residual_norms = (measure_residual_norm(state),)
    return state


# -- vectorized evaluation ----------------------------------------------------


def _lambda_floats(state) -> np.ndarray:
    return np.asarray([float(v) for v in state.lambdas.values])


def _psi_axis(state, axis_values, j: int) -> np.ndarray:
    """Truncated inner values at axis value + j*a, as floats.

    Exact Fractions take the exact shifted argument (the construction
    path, where plateau landings are arranged in exact arithmetic).
    Floats take the float-rounded sum x + j*float(a) through the shared
    nudged-floor rule, so measurements evaluate the approximant at
    exactly the argument a network sees.
    """
    k = state.k_trunc
    ev = state.ev
    if len(axis_values) and isinstance(axis_values[0], Fraction):
        ja = j * state.params.a
        return np.asarray([ev.psi_trunc_float(q + ja, k) for q in axis_values])
    ja_f = j * float(state.params.a)
    return ev.psi_trunc_vector(np.asarray(axis_values, dtype=float) + ja_f, k)


def _mesh_sum(lams: np.ndarray, per_axis: list[np.ndarray]) -> np.ndarray:
    """Broadcast sum_i lam_i * per_axis[i] over the product mesh."""
    n = len(per_axis)
    y = None
    for i in range(n):
        shape = [1] * n
        shape[i] = -1
        term = (lams[i] * per_axis[i]).reshape(shape)
        y = term if y is None else y + term
    return y


def phi_batch(state, j: int, y: np.ndarray) -> np.ndarray:
    """Vectorized outer-approximant values at a flat array of points."""
    out = np.zeros_like(y, dtype=float)
    for layer in state.outer[j].layers:
        if layer.xi.size == 0:
            continue
        lo = layer.xi - layer.ramp
        idx = np.searchsorted(lo, y, side="right") - 1
        # With disjoint supports one candidate suffices; the second
        # keeps the sum correct if adjacent ramps ever overlap.
        for off in (0, -1):
            c = idx + off
            inb = (c >= 0) & (c < layer.xi.size)
            cc = np.where(inb, c, 0)
            xi_c = layer.xi[cc]
            inside = inb & (y > xi_c - layer.ramp) & (
                y < xi_c + layer.plateau + layer.ramp
            )
            if not np.any(inside):
                continue
            t1 = np.clip(layer.slope * (y - xi_c) + 1.0, 0.0, 1.0)
            t2 = np.clip(layer.slope * (y - xi_c - layer.plateau), 0.0, 1.0)
            out += np.where(inside, layer.coeff[cc] * (t1 - t2), 0.0)
    return out


def f_r_on_mesh(state, axes_values) -> np.ndarray:
    """Approximant values over a product mesh given per-axis values
    (exact Fractions or floats, see _psi_axis)."""
    lams = _lambda_floats(state)
    shape = tuple(len(ax) for ax in axes_values)
    total = np.zeros(shape)
    for j in range(state.params.m + 1):
        per_axis = [_psi_axis(state, ax, j) for ax in axes_values]
        y = _mesh_sum(lams, per_axis)
        total += phi_batch(state, j, y.ravel()).reshape(shape)
    return total


def f_r_at_points(state, pts: np.ndarray) -> np.ndarray:
    """Approximant values at an (N, n) array of float points."""
    lams = _lambda_floats(state)
    ev = state.ev
    a_f = float(state.params.a)
    k = state.k_trunc
    pts = np.asarray(pts, dtype=float)
    total = np.zeros(len(pts))
    for j in range(state.params.m + 1):
        y = np.zeros(len(pts))
        for i in range(state.params.n):
            y += lams[i] * ev.psi_trunc_vector(pts[:, i] + j * a_f, k)
        total += phi_batch(state, j, y)
    return total


def target_on_mesh(state, axes_floats: list[np.ndarray]) -> np.ndarray:
    grids = np.meshgrid(*axes_floats, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    vals = state.target.eval_batch(pts)
    return vals.reshape(tuple(len(ax) for ax in axes_floats))


def measure_residual_norm(state) -> float:
    """Sup of |f - f_r| over the audit mesh and the seeded random batch."""
    axis = state.audit_axis()
    f_mesh = state._caches.get("audit_target_mesh")
    if f_mesh is None:
        f_mesh = target_on_mesh(state, [axis] * state.params.n)
        state._caches["audit_target_mesh"] = f_mesh
    fr_mesh = f_r_on_mesh(state, [axis] * state.params.n)
    sup = float(np.max(np.abs(f_mesh - fr_mesh)))
    rand = state.audit_random()
    f_rand = state._caches.get("audit_target_rand")
    if f_rand is None:
        f_rand = state.target.eval_batch(rand)
        state._caches["audit_target_rand"] = f_rand
    fr_rand = f_r_at_points(state, rand)
    return max(sup, float(np.max(np.abs(f_rand - fr_rand))) if len(rand) else 0.0)


# -- the iteration ------------------------------------------------------------


def residual_modulus(state, h: float) -> float:
    """Empirical oscillation of the residual over axis step h."""
    axis = state.audit_axis()
    base = state._caches.get("residual_mesh")
    if base is None:
        f_mesh = state._caches["audit_target_mesh"]
        base = f_mesh - f_r_on_mesh(state, [axis] * state.params.n)
        state._caches["residual_mesh"] = base
    n = state.params.n
    worst = 0.0
    keep = axis + h <= 1.0 + 1e-12
    if not np.any(keep):
        return worst
    shifted = axis[keep] + h
    for ax_i in range(n):
        axes = [axis] * n
        axes = axes[:ax_i] + [shifted] + axes[ax_i + 1 :]
        f_mesh = target_on_mesh(state, axes)
        e_mesh = f_mesh - f_r_on_mesh(state, axes)
        sel = [slice(None)] * n
        sel[ax_i] = keep
        diff = np.abs(e_mesh - state._caches["residual_mesh"][tuple(sel)])
        worst = max(worst, float(np.max(diff)))
    return worst


def choose_k_r(state) -> tuple[int, bool]:
    """Smallest depth whose empirical residual oscillation is within
    delta times the residual norm; (k_max, True) when none qualifies."""
    norm = state.residual_norms[-1]
    if norm == 0.0:
        return 1, False
    p = state.params
    measure_residual_norm(state)  # ensure caches exist
    for k in range(1, state.caps.k_max + 1):
        w = residual_modulus(state, float(p.gamma) ** -k)
        if w <= p.delta * norm:
            return k, False
    return state.caps.k_max, True


def iterate(state: DecompositionState, force_k: int | None = None) -> DecompositionState:
    """Append one bump layer to every family and remeasure the residual."""
    p = state.params
    g, n, m = p.gamma, p.n, p.m
    if force_k is None:
        k_r, warned = choose_k_r(state)
    else:
        k_r, warned = force_k, False
    if (g**k_r + 1) ** n > state.caps.grid_budget:
        raise BudgetError(
            f"grid size (gamma**k + 1)**n = {(g**k_r + 1)**n} exceeds "
            f"{state.caps.grid_budget}"
        )
    # The level-k axis includes the right endpoint 1. Without it the
    # strip (1 - gamma**-k/(gamma-1), 1] of the cube belongs to no
    # family's plateau region (the families shift towns toward 0), and
    # the residual would never contract there.
    axis_fracs = [Fraction(i, g**k_r) for i in range(g**k_r + 1)]
    axis_floats = np.asarray([float(q) for q in axis_fracs])

    f_mesh = target_on_mesh(state, [axis_floats] * n)
    fr_mesh = f_r_on_mesh(state, [axis_fracs] * n)
    coeff_flat = ((f_mesh - fr_mesh) / (m + 1)).ravel()

    bk = b_k(p, state.lambdas, k_r)
    slope_int = g ** beta(n, k_r + 1)
    plateau_f = float((g - 2) * bk.value)
    ramp_f = float(Fraction(1, slope_int))
    slope_f = float(slope_int)

    new_outer = []
    for j in range(m + 1):
        s = grid_shift(p, k_r, j)
        psi_ax = np.asarray(
            [float(state.ev.psi_exact_extended(q + s)) for q in axis_fracs]
        )
        lams = _lambda_floats(state)
        xi_flat = _mesh_sum(lams, [psi_ax] * n).ravel()
        order = np.argsort(xi_flat, kind="stable")
        layer = Layer(
            k=k_r,
            slope=slope_f,
            plateau=plateau_f,
            ramp=ramp_f,
            xi=xi_flat[order],
            coeff=coeff_flat[order],
        )
        new_outer.append(OuterApprox(j, state.outer[j].layers + (layer,)))

    nxt = replace(
        state,
        r=state.r + 1,
        k_list=state.k_list + (k_r,),
        k_warnings=state.k_warnings + (warned,),
        outer=tuple(new_outer),
        residual_norms=state.residual_norms,
        _caches={
            k: v
            for k, v in state._caches.items()
            if k in ("audit_axis", "audit_target_mesh",
                     "audit_random", "audit_target_rand")
        },
    )
    nxt.residual_norms = state.residual_norms + (measure_residual_norm(nxt),)
    return nxt


# -- pointwise API -------------------------------------------------------------


def evaluate_phi(state, j: int, y: float) -> float:
    """Outer approximant phi_j at a single point, by interval search."""
    sup = float(state.params.phi_domain_sup)
    if not (0.0 <= y < sup):
        raise DomainError(f"outer-function domain is [0, {sup}), got {y}")
    total = 0.0
    for layer in state.outer[j].layers:
        lo = layer.xi - layer.ramp
        i = bisect.bisect_right(lo, y) - 1
        for c in (i, i - 1):
            if 0 <= c < layer.xi.size:
                xi_c = layer.xi[c]
                if xi_c - layer.ramp < y < xi_c + layer.plateau + layer.ramp:
                    t1 = min(max(layer.slope * (y - xi_c) + 1.0, 0.0), 1.0)
                    t2 = min(max(layer.slope * (y - xi_c - layer.plateau), 0.0), 1.0)
                    total += layer.coeff[c] * (t1 - t2)
    return total


def evaluate_f_r(state, x) -> float:
    """Approximant value at one point of the unit cube."""
    pts = np.asarray([list(map(float, x))])
    return float(f_r_at_points(state, pts)[0])


def active_bump_counts(state, j: int, y: float) -> list[int]:
    """Number of bumps with positive value at y, per layer; used by the
    locality check (at most one per layer once supports are disjoint)."""
    counts = []
    for layer in state.outer[j].layers:
        lo = layer.xi - layer.ramp
        hi = layer.xi + layer.plateau + layer.ramp
        counts.append(int(np.sum((y > lo) & (y < hi))))
    return counts


def lipschitz_report(state) -> dict:
    """Lipschitz constant of the outer approximants from measured norms,
    and the growth-class bound with C = max chosen depth."""
    if state.r < 1:
        raise DomainError("no completed iterations to report on")
    p = state.params
    nu_r = sum(
        state.residual_norms[ell - 1] * float(p.gamma ** beta(p.n, k_ell + 1))
        for ell, k_ell in enumerate(state.k_list, start=1)
    ) / (p.m + 1)
    c_depth = max(state.k_list)
    bound = (
        state.residual_norms[0]
        * state.r
        * float(p.gamma ** (2 * p.n**c_depth))
        / (p.m + 1)
    )
    return {
        "nu_r": nu_r,
        "K_C_bound": bound,
        "C": c_depth,
        "k_list": list(state.k_list),
        "k_warnings": list(state.k_warnings),
        "within_bound": nu_r <= bound,
    }


# -- serialization --------------------------------------------------------------


def state_to_json_dict(state) -> dict:
    f17 = lambda v: format(float(v), ".17g")
    outer = []
    for oa in state.outer:
        layers = []
        for layer in oa.layers:
            layers.append(
                {
                    "k": layer.k,
                    "bumps": [
                        {
                            "xi": f17(x),
                            "plateau": f17(layer.plateau),
                            "slope": f17(layer.slope),
                            "coeff": f17(c),
                        }
                        for x, c in zip(layer.xi, layer.coeff)
                    ],
                }
            )
        outer.append({"j": oa.j, "layers": layers})
    return {
        "schema": STATE_SCHEMA,
        "params": state.params.to_json_dict(),
        "target": {
            "provenance": state.target.provenance,
            "dim": state.target.dim,
            "sup_norm_bound": f17(state.target.sup_norm_bound),
        },
        "caps": {
            "k_max": state.caps.k_max,
            "grid_budget": state.caps.grid_budget,
            "audit_resolution": state.caps.audit_resolution,
            "n_random": state.caps.n_random,
            "seed": state.caps.seed,
        },
        "r": state.r,
        "k_list": list(state.k_list),
        "k_warnings": list(state.k_warnings),
        "residual_norms": [f17(v) for v in state.residual_norms],
    } | {"outer": outer}


def state_from_json_dict(d: dict) -> DecompositionState:
    if d.get("schema") != STATE_SCHEMA:
        raise DomainError(f"unrecognized decomposition schema {d.get('schema')!r}")
    params = KstParams.from_json_dict(d["params"])
    caps = DecompositionCaps(**d["caps"])
    target = target_from_provenance(d["target"]["provenance"], params.n)
    state = DecompositionState(
        params=params,
        lambdas=lambda_coeffs(params),
        ev=InnerEvaluator(params),
        target=target,
        caps=caps,
        r=int(d["r"]),
        k_list=tuple(int(k) for k in d["k_list"]),
        k_warnings=tuple(bool(w) for w in d["k_warnings"]),
        outer=(),
        residual_norms=tuple(float(v) for v in d["residual_norms"]),
    )
    outer = []
    for oa in d["outer"]:
        layers = []
        for ld in oa["layers"]:
            k = int(ld["k"])
            slope_int = params.gamma ** beta(params.n, k + 1)
            xi = np.asarray([float(b["xi"]) for b in ld["bumps"]])
            coeff = np.asarray([float(b["coeff"]) for b in ld["bumps"]])
            layers.append(
                Layer(
                    k=k,
                    slope=float(slope_int),
                    plateau=float(ld["bumps"][0]["plateau"]) if ld["bumps"] else 0.0,
                    ramp=float(Fraction(1, slope_int)),
                    xi=xi,
                    coeff=coeff,
                )
            )
        outer.append(OuterApprox(int(oa["j"]), tuple(layers)))
    state.outer = tuple(outer)
    return state
