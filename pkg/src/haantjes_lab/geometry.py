"""Charts, fields and the core tensor calculus.

This module provides the building blocks every higher-level check is made
of: coordinate charts with reproducible sampling domains, scalar and
operator fields evaluable with exact first (and, for scalars, second)
derivatives, the Nijenhuis and Haantjes torsions in both their
compositional and explicit coordinate forms, the canonical symplectic
structure with Poisson brackets, and chart transitions with their
cotangent lifts for moving operator fields between charts.

Conventions (fixed once, machine-checked everywhere):

* Darboux charts order their variables ``(q^1..q^n, p_1..p_n)``.
* The symplectic matrix is ``Omega = [[0, I], [-I, 0]]`` acting as
  ``omega(X, Y) = <Omega X, Y>``; the Poisson bracket is
  ``{F, G} = sum_i dF/dq^i dG/dp_i - dF/dp_i dG/dq^i``.
* Operator values are matrices ``V[i, j]`` (row = upper index); partials
  are stored as ``G[i, j, a] = d V[i, j] / d x^a``.

Residuals of degree-k torsion expressions are normalised by
``(1 + |V|_inf)^k`` (k = 3 for the first-level torsion, 4 for the
second-level one) so tolerances are scale-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jets
from .expr import Expr, parse

__all__ = [
    "Chart",
    "SamplingDomain",
    "ScalarField",
    "FuncField",
    "OperatorField",
    "ExprOperatorField",
    "FuncOperatorField",
    "TorsionValue",
    "nijenhuis_vg",
    "haantjes_definitional_vg",
    "haantjes_coordinate_vg",
    "nijenhuis_torsion",
    "haantjes_torsion",
    "fd_partials",
    "nijenhuis_fd_bracket",
    "haantjes_fd_bracket",
    "nijenhuis_scale",
    "haantjes_scale",
    "torsion_scaling_check",
    "omega_matrix",
    "omega_compat_residual",
    "poisson_bracket",
    "poisson_bracket_terms",
    "poisson_bracket_with_grad",
    "exterior_derivative_oneform",
    "op_identity",
    "op_product",
    "op_lincombo",
    "op_inverse",
    "op_power",
    "op_from_diagonal",
    "PointMap",
    "ChartTransition",
    "pullback_operator",
    "PulledBackOperatorField",
    "transform_torsion",
    "CanonicalCoordMap",
]


# --------------------------------------------------------------------------
# charts and sampling


@dataclass(frozen=True)
class Chart:
    """A coordinate chart on phase space (dimension 2n, q's then p's)."""

    name: str
    variables: tuple[str, ...]
    is_darboux: bool = True

    def __post_init__(self):
        if len(set(self.variables)) != len(self.variables):
            raise ValueError(f"duplicate variable names in chart {self.name}")
        if len(self.variables) % 2 != 0:
            raise ValueError("phase-space charts have even dimension")

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def n(self) -> int:
        return len(self.variables) // 2

    def index(self, name: str) -> int:
        return self.variables.index(name)


@dataclass(frozen=True)
class SamplingDomain:
    """Per-coordinate boxes with |coordinate| >= guard exclusions.

    Draws are reproducible: a fresh generator seeded with ``seed`` is used
    for every call to :meth:`points`.
    """

    intervals: dict[str, tuple[float, float]]
    guards: dict[str, float] = field(default_factory=dict)
    seed: int = 42
    count: int = 100

    def points(self, chart: Chart, count: int | None = None, seed: int | None = None) -> np.ndarray:
        count = self.count if count is None else count
        seed = self.seed if seed is None else seed
        rng = np.random.default_rng(seed)
        lows = np.array([self.intervals[v][0] for v in chart.variables])
        highs = np.array([self.intervals[v][1] for v in chart.variables])
        guard = np.array([self.guards.get(v, 0.0) for v in chart.variables])
        pts = rng.uniform(lows, highs, size=(count, chart.dim))
        if np.any(guard > 0):
            for _ in range(1000):
                bad = np.abs(pts) < guard
                if not bad.any():
                    break
                pts[bad] = rng.uniform(
                    np.broadcast_to(lows, pts.shape)[bad],
                    np.broadcast_to(highs, pts.shape)[bad],
                )
            else:
                raise RuntimeError("sampling guards could not be satisfied")
        return pts


# --------------------------------------------------------------------------
# scalar fields


class ScalarField:
    """An expression over a chart's variables with bound parameters."""

    def __init__(self, chart: Chart, expression: Expr | str, params: dict[str, float] | None = None, name: str = ""):
        self.chart = chart
        self.params = dict(params or {})
        if isinstance(expression, str):
            expression = parse(expression, chart.variables, self.params.keys())
        unknown = expression.free_vars - set(chart.variables)
        if unknown:
            raise ValueError(f"expression uses variables {sorted(unknown)} not in chart {chart.name}")
        self.expr = expression
        self.name = name or str(expression)

    def jet(self, point: np.ndarray, order: int = 2) -> jets.Jet2:
        env = _seed_env(self.chart, point, order)
        return self.expr.eval_jet(env, self.params)

    def value(self, point: np.ndarray) -> float:
        values = dict(zip(self.chart.variables, map(float, point)))
        return self.expr.eval_value(values, self.params)

    def __repr__(self) -> str:
        return f"ScalarField({self.name!r} on {self.chart.name})"


class FuncField:
    """Scalar field backed by a callable ``point -> Jet2``."""

    def __init__(self, chart: Chart, fn, name: str = "<derived>"):
        self.chart = chart
        self._fn = fn
        self.name = name

    def jet(self, point: np.ndarray, order: int = 2) -> jets.Jet2:
        return self._fn(point)

    def value(self, point: np.ndarray) -> float:
        return self._fn(point).value


def _seed_env(chart: Chart, point: np.ndarray, order: int) -> dict[str, jets.Jet2]:
    point = np.asarray(point, dtype=float)
    if point.shape != (chart.dim,):
        raise ValueError(f"point has shape {point.shape}, chart {chart.name} needs ({chart.dim},)")
    seeded = jets.seed(point)
    if order == 1:
        seeded = [jets.Jet2(j.value, j.grad, None) for j in seeded]
    return dict(zip(chart.variables, seeded))


# --------------------------------------------------------------------------
# operator fields


class OperatorField:
    """A (1,1) tensor field: matrix values with exact first partials."""

    chart: Chart
    name: str = ""

    def eval_with_partials(self, point: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def eval_matrix(self, point: np.ndarray) -> np.ndarray:
        return self.eval_with_partials(point)[0]


class ExprOperatorField(OperatorField):
    """Operator field given entry-by-entry as expressions (missing = 0)."""

    def __init__(self, chart: Chart, entries: dict[tuple[int, int], Expr | str],
                 params: dict[str, float] | None = None, name: str = ""):
        self.chart = chart
        self.params = dict(params or {})
        self.name = name
        self.entries: dict[tuple[int, int], Expr] = {}
        for (i, j), e in entries.items():
            if not (0 <= i < chart.dim and 0 <= j < chart.dim):
                raise ValueError(f"entry index {(i, j)} outside {chart.dim}x{chart.dim}")
            if isinstance(e, str):
                e = parse(e, chart.variables, self.params.keys())
            self.entries[(i, j)] = e

    def eval_with_partials(self, point):
        m = self.chart.dim
        env = _seed_env(self.chart, point, order=1)
        V = np.zeros((m, m))
        G = np.zeros((m, m, m))
        for (i, j), e in self.entries.items():
            jet = e.eval_jet(env, self.params)
            V[i, j] = jet.value
            G[i, j] = jet.grad
        return V, G

    def eval_matrix(self, point):
        m = self.chart.dim
        values = dict(zip(self.chart.variables, map(float, point)))
        V = np.zeros((m, m))
        for (i, j), e in self.entries.items():
            V[i, j] = e.eval_value(values, self.params)
        return V

    def entry_field(self, i: int, j: int) -> ScalarField:
        e = self.entries.get((i, j))
        if e is None:
            return ScalarField(self.chart, "0", self.params)
        return ScalarField(self.chart, e, self.params)


class FuncOperatorField(OperatorField):
    """Operator field backed by a callable ``point -> (V, G)``."""

    def __init__(self, chart: Chart, vg_fn, matrix_fn=None, name: str = "<derived>"):
        self.chart = chart
        self._vg_fn = vg_fn
        self._matrix_fn = matrix_fn
        self.name = name

    def eval_with_partials(self, point):
        return self._vg_fn(point)

    def eval_matrix(self, point):
        if self._matrix_fn is not None:
            return self._matrix_fn(point)
        return self._vg_fn(point)[0]


def op_identity(chart: Chart) -> FuncOperatorField:
    m = chart.dim

    def vg(point):
        return np.eye(m), np.zeros((m, m, m))

    return FuncOperatorField(chart, vg, lambda point: np.eye(m), name="I")


def op_product(a: OperatorField, b: OperatorField, name: str = "") -> FuncOperatorField:
    if a.chart is not b.chart and a.chart != b.chart:
        raise ValueError("operator product needs a shared chart")

    def vg(point):
        Va, Ga = a.eval_with_partials(point)
        Vb, Gb = b.eval_with_partials(point)
        V = Va @ Vb
        G = np.einsum("ika,kj->ija", Ga, Vb) + np.einsum("ik,kja->ija", Va, Gb)
        return V, G

    return FuncOperatorField(a.chart, vg, lambda p: a.eval_matrix(p) @ b.eval_matrix(p),
                             name=name or f"({a.name}*{b.name})")


def op_power(a: OperatorField, k: int) -> OperatorField:
    if k < 1:
        raise ValueError("op_power needs k >= 1")
    out = a
    for _ in range(k - 1):
        out = op_product(out, a)
    return out


def op_lincombo(terms, chart: Chart | None = None, name: str = "") -> FuncOperatorField:
    """Linear combination ``sum_i f_i * K_i`` with scalar-field or constant f_i."""
    ops = [op for _, op in terms]
    chart = chart or ops[0].chart
    m = chart.dim

    def vg(point):
        V = np.zeros((m, m))
        G = np.zeros((m, m, m))
        for coef, op in terms:
            Vk, Gk = op.eval_with_partials(point)
            if isinstance(coef, (int, float)):
                V += coef * Vk
                G += coef * Gk
            else:
                cj = coef.jet(point, order=1)
                V += cj.value * Vk
                G += cj.value * Gk
                G += np.einsum("ij,a->ija", Vk, cj.grad)
        return V, G

    return FuncOperatorField(chart, vg, name=name or "<lincombo>")


def op_inverse(a: OperatorField, name: str = "") -> FuncOperatorField:
    def vg(point):
        V, G = a.eval_with_partials(point)
        W = np.linalg.inv(V)
        Gi = -np.einsum("ik,kla,lj->ija", W, G, W)
        return W, Gi

    return FuncOperatorField(a.chart, vg, lambda p: np.linalg.inv(a.eval_matrix(p)),
                             name=name or f"inv({a.name})")


def op_from_diagonal(chart: Chart, fields, name: str = "") -> FuncOperatorField:
    """Diagonal operator from per-coordinate scalar fields."""
    m = chart.dim
    if len(fields) != m:
        raise ValueError("need one diagonal field per coordinate")

    def vg(point):
        V = np.zeros((m, m))
        G = np.zeros((m, m, m))
        for i, f in enumerate(fields):
            jet = f.jet(point, order=1)
            V[i, i] = jet.value
            G[i, i] = jet.grad
        return V, G

    return FuncOperatorField(chart, vg, name=name or "<diag>")


# --------------------------------------------------------------------------
# torsions


_PAIR_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pairs(m: int) -> tuple[np.ndarray, np.ndarray]:
    cached = _PAIR_CACHE.get(m)
    if cached is None:
        rows, cols = np.triu_indices(m, k=1)
        cached = (rows, cols)
        _PAIR_CACHE[m] = cached
    return cached


@dataclass(frozen=True)
class TorsionValue:
    """A (1,2)-tensor value antisymmetric in its lower indices.

    Only the independent components (j < k) are stored; ``full()`` expands
    to the complete array with ``T[i, k, j] = -T[i, j, k]`` exact.
    """

    dim: int
    comps: np.ndarray  # shape (dim, dim*(dim-1)/2)

    @classmethod
    def from_full(cls, T: np.ndarray) -> "TorsionValue":
        m = T.shape[0]
        rows, cols = _pairs(m)
        return cls(m, T[:, rows, cols].copy())

    def full(self) -> np.ndarray:
        m = self.dim
        rows, cols = _pairs(m)
        T = np.zeros((m, m, m))
        T[:, rows, cols] = self.comps
        T[:, cols, rows] = -self.comps
        return T

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.comps))) if self.comps.size else 0.0


def nijenhuis_vg(V: np.ndarray, G: np.ndarray) -> np.ndarray:
    """First-level torsion components from values and partials."""
    term1 = np.einsum("ika,aj->ijk", G, V)
    anti = G - G.transpose(0, 2, 1)  # anti[a,j,k] = dL^a_j/dx^k - dL^a_k/dx^j
    term3 = np.einsum("ia,ajk->ijk", V, anti)
    return term1 - term1.transpose(0, 2, 1) + term3


def haantjes_definitional_vg(V: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Second-level torsion by composing the first-level one with L."""
    T = nijenhuis_vg(V, G)
    return haantjes_from_nijenhuis(V, T)


def haantjes_from_nijenhuis(V: np.ndarray, T: np.ndarray) -> np.ndarray:
    V2 = V @ V
    out = np.einsum("ia,ajk->ijk", V2, T)
    out += np.einsum("iab,aj,bk->ijk", T, V, V)
    mixed = np.einsum("ia,ajb,bk->ijk", V, T, V)
    return out - mixed + mixed.transpose(0, 2, 1)


def haantjes_coordinate_vg(V: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Second-level torsion evaluated directly from its coordinate formula.

    Index brackets antisymmetrise with weight one (plain difference); this
    is the convention under which the explicit formula reproduces the
    compositional definition exactly, verified to machine precision on
    random fields.  Partials of powers of the operator are expanded by the
    product rule from (V, G).
    """
    V2 = V @ V
    V3 = V2 @ V
    G2 = np.einsum("iba,bj->ija", G, V) + np.einsum("ib,bja->ija", V, G)

    def asym(M):  # M[a, j, k] -> M[a, j, k] - M[a, k, j]
        return M - M.transpose(0, 2, 1)

    # G stores (row, col, partial): G[a, k, j] = d_j L^a_k, so the bracketed
    # combination d_[j] L^a_[k] is asym of the (partial, col)-swapped array.
    S1 = asym(np.einsum("akj->ajk", G))
    S2 = asym(np.einsum("akj->ajk", G2))
    P = np.einsum("bj,akb->ajk", V, G)
    Q1 = np.einsum("bj,akb->ajk", V, G2)
    Q2 = np.einsum("bj,akb->ajk", V2, G)
    R = np.einsum("aj,ika->ijk", V2, G2)

    out = -2.0 * np.einsum("ia,ajk->ijk", V3, S1)
    out += np.einsum("ia,ajk->ijk", V2, S2 + 4.0 * asym(P))
    out += -2.0 * np.einsum("ia,ajk->ijk", V, asym(Q1) + asym(Q2))
    out += R - R.transpose(0, 2, 1)
    return out


def nijenhuis_torsion(L: OperatorField, point: np.ndarray) -> TorsionValue:
    V, G = L.eval_with_partials(point)
    return TorsionValue.from_full(nijenhuis_vg(V, G))


def haantjes_torsion(L: OperatorField, point: np.ndarray, method: str = "definitional") -> TorsionValue:
    V, G = L.eval_with_partials(point)
    if method == "definitional":
        T = haantjes_definitional_vg(V, G)
    elif method == "coordinate":
        T = haantjes_coordinate_vg(V, G)
    else:
        raise ValueError(f"unknown method {method!r}")
    return TorsionValue.from_full(T)


def nijenhuis_scale(V: np.ndarray) -> float:
    return (1.0 + float(np.max(np.abs(V)))) ** 3


def haantjes_scale(V: np.ndarray) -> float:
    return (1.0 + float(np.max(np.abs(V)))) ** 4


# --------------------------------------------------------------------------
# finite-difference oracle

FD_STEP = 1e-5


def fd_partials(matrix_fn, point: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central-difference partials of a matrix-valued function of the point."""
    point = np.asarray(point, dtype=float)
    m = matrix_fn(point).shape[0]
    G = np.zeros((m, m, len(point)))
    for a in range(len(point)):
        h = step * (1.0 + abs(point[a]))
        up = point.copy()
        dn = point.copy()
        up[a] += h
        dn[a] -= h
        G[:, :, a] = (matrix_fn(up) - matrix_fn(dn)) / (2.0 * h)
    return G


def nijenhuis_fd_bracket(L: OperatorField, point: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """First-level torsion assembled from vector-field brackets.

    Feeds the defining bracket combination with coordinate fields, with
    every derivative estimated by central differences of operator values;
    fully independent of the jet engine.
    """
    V = L.eval_matrix(point)
    G = fd_partials(L.eval_matrix, point, step)
    # [L e_j, L e_k]^i = sum_a V[a,j] d_a V[i,k] - V[a,k] d_a V[i,j]
    bracket = np.einsum("aj,ika->ijk", V, G) - np.einsum("ak,ija->ijk", V, G)
    # L([e_j, L e_k] + [L e_j, e_k])^i = sum_a V[i,a] (d_j V[a,k] - d_k V[a,j])
    correction = np.einsum("ia,akj->ijk", V, G) - np.einsum("ia,ajk->ijk", V, G)
    return bracket - correction


def haantjes_fd_bracket(L: OperatorField, point: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    V = L.eval_matrix(point)
    T = nijenhuis_fd_bracket(L, point, step)
    return haantjes_from_nijenhuis(V, T)


# --------------------------------------------------------------------------
# scaling identity


def torsion_scaling_check(L: OperatorField, f, g, point: np.ndarray) -> dict[str, float]:
    """Residual of the quartic scaling law for f*I + g*L at one point."""
    m = L.chart.dim
    gj = g.jet(point, order=1)
    if gj.value == 0.0:
        raise ValueError("scaling check needs g(x) != 0")
    combo = op_lincombo([(f, op_identity(L.chart)), (g, L)], chart=L.chart)
    Vc, Gc = combo.eval_with_partials(point)
    H_combo = haantjes_definitional_vg(Vc, Gc)
    V, G = L.eval_with_partials(point)
    H_base = haantjes_definitional_vg(V, G)
    expected = gj.value**4 * H_base
    return {
        "residual": float(np.max(np.abs(H_combo - expected))),
        "reference": float(np.max(np.abs(expected))),
        "combo_max": float(np.max(np.abs(H_combo))),
    }


# --------------------------------------------------------------------------
# symplectic structure


def omega_matrix(n: int) -> np.ndarray:
    O = np.zeros((2 * n, 2 * n))
    O[:n, n:] = np.eye(n)
    O[n:, :n] = -np.eye(n)
    return O


def omega_compat_residual(K: OperatorField | np.ndarray, point: np.ndarray | None = None) -> float:
    """Max-entry residual of ``Omega K - K^T Omega`` at one point."""
    if isinstance(K, np.ndarray):
        V = K
    else:
        if not K.chart.is_darboux:
            raise ValueError("compatibility residual needs a Darboux chart")
        V = K.eval_matrix(point)
    n = V.shape[0] // 2
    O = omega_matrix(n)
    return float(np.max(np.abs(O @ V - V.T @ O)))


def _split_grad(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = grad.shape[0] // 2
    return grad[:n], grad[n:]


def poisson_bracket(F, G, point: np.ndarray) -> float:
    """Canonical bracket of two scalar fields at a point of a Darboux chart."""
    return float(np.sum(poisson_bracket_terms(F, G, point)))


def poisson_bracket_terms(F, G, point: np.ndarray) -> np.ndarray:
    """Per-index bracket terms, no summation (length n)."""
    if not F.chart.is_darboux:
        raise ValueError("Poisson bracket needs a Darboux chart")
    gF = F.jet(point, order=1).grad
    gG = G.jet(point, order=1).grad
    Fq, Fp = _split_grad(gF)
    Gq, Gp = _split_grad(gG)
    return Fq * Gp - Fp * Gq


def poisson_bracket_with_grad(F, G, point: np.ndarray) -> tuple[float, np.ndarray]:
    """Bracket value and its gradient (uses Hessians of both fields)."""
    jF = F.jet(point, order=2)
    jG = G.jet(point, order=2)
    n = jF.dim // 2
    HF = jF.hess_matrix()
    HG = jG.hess_matrix()
    value = 0.0
    grad = np.zeros(jF.dim)
    for i in range(n):
        value += jF.grad[i] * jG.grad[n + i] - jF.grad[n + i] * jG.grad[i]
        grad += (
            HF[i] * jG.grad[n + i]
            + jF.grad[i] * HG[n + i]
            - HF[n + i] * jG.grad[i]
            - jF.grad[n + i] * HG[i]
        )
    return float(value), grad


def exterior_derivative_oneform(theta_fields, point: np.ndarray) -> np.ndarray:
    """(d theta)_{ij} = d_i theta_j - d_j theta_i for fields theta_j."""
    grads = np.array([f.jet(point, order=1).grad for f in theta_fields])
    return grads.T - grads


# --------------------------------------------------------------------------
# chart transitions (cotangent-lifted point transformations)


class PointMap:
    """Point transformation between charts together with its canonical lift.

    ``comps`` give the destination configuration coordinates as expressions
    in the source configuration variables; momenta transform contragradiently,
    which is computed on the fly (it needs first and second derivatives of
    the components, supplied by the jet engine).
    """

    def __init__(self, src: Chart, dst: Chart, comps, params: dict[str, float] | None = None):
        if len(comps) != src.n:
            raise ValueError("need one component per configuration coordinate")
        self.src = src
        self.dst = dst
        self.params = dict(params or {})
        qvars = src.variables[: src.n]
        self.comps = [
            parse(c, qvars, self.params.keys()) if isinstance(c, str) else c for c in comps
        ]
        self._qvars = qvars

    def _config_jets(self, q: np.ndarray) -> list[jets.Jet2]:
        env = dict(zip(self._qvars, jets.seed(q)))
        return [c.eval_jet(env, self.params) for c in self.comps]

    def phase_point(self, x: np.ndarray) -> np.ndarray:
        n = self.src.n
        q, p = x[:n], x[n:]
        cj = self._config_jets(q)
        Q = np.array([j.value for j in cj])
        D = np.array([j.grad for j in cj])  # D[i, j] = dQ^i/dq^j
        P = np.linalg.solve(D.T, p)  # (D^-T) p
        return np.concatenate([Q, P])

    def phase_jacobian(self, x: np.ndarray) -> np.ndarray:
        """Full 2n x 2n Jacobian of the lifted map at the source point."""
        n = self.src.n
        q, p = x[:n], x[n:]
        cj = self._config_jets(q)
        D = np.array([j.grad for j in cj])
        Hs = [j.hess_matrix() for j in cj]  # Hs[i][j,k] = d2 Q^i/dq^j dq^k
        W = np.linalg.inv(D).T
        J = np.zeros((2 * n, 2 * n))
        J[:n, :n] = D
        J[n:, n:] = W
        # d(W p)/dq^j with dW/dq^j = -W (dD/dq^j)^T W
        for j in range(n):
            dD = np.array([Hs[i][:, j] for i in range(n)])  # dD[i, k] = d D[i,k] / dq^j
            dW = -W @ dD.T @ W
            J[n:, j] = dW @ p
        return J

    def jacobian_condition(self, x: np.ndarray) -> float:
        return float(np.linalg.cond(self.phase_jacobian(x)))


class ChartTransition:
    """A pair of mutually inverse point maps between two charts."""

    def __init__(self, forward: PointMap, inverse: PointMap):
        if forward.src != inverse.dst or forward.dst != inverse.src:
            raise ValueError("forward and inverse maps do not match")
        self.forward = forward
        self.inverse = inverse

    def roundtrip_residual(self, x: np.ndarray) -> float:
        back = self.inverse.phase_point(self.forward.phase_point(x))
        return float(np.max(np.abs(back - x)))


def pullback_operator(K: OperatorField, into: PointMap, x_dst: np.ndarray) -> np.ndarray:
    """Express ``K`` (living on ``into.dst``) in the chart ``into.src``.

    ``into`` maps the target chart into the operator's native chart; the
    value returned is ``J^-1 K(map(x)) J`` with ``J`` the lifted Jacobian.
    """
    if into.dst != K.chart:
        raise ValueError("point map must land in the operator's chart")
    J = into.phase_jacobian(x_dst)
    x_native = into.phase_point(x_dst)
    V = K.eval_matrix(x_native)
    return np.linalg.solve(J, V @ J)


class PulledBackOperatorField(OperatorField):
    """An operator field re-expressed in another chart.

    Values are exact; partials fall back to central differences because the
    exact momentum-block derivatives would need third derivatives of the
    transition components.
    """

    def __init__(self, K: OperatorField, into: PointMap, name: str = ""):
        self.base = K
        self.map = into
        self.chart = into.src
        self.name = name or f"{K.name}@{into.src.name}"

    def eval_matrix(self, point):
        return pullback_operator(self.base, self.map, point)

    def eval_with_partials(self, point):
        V = self.eval_matrix(point)
        G = fd_partials(self.eval_matrix, point)
        return V, G


def transform_torsion(T: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Transform (1,2)-tensor components by a Jacobian ``J = dx_native/dx_new``."""
    Jinv = np.linalg.inv(J)
    return np.einsum("ia,abc,bj,ck->ijk", Jinv, T, J, J)


# --------------------------------------------------------------------------
# general canonical coordinate maps (components may mix q's and p's)


class CanonicalCoordMap:
    """New phase-space coordinates given as scalar fields over a base chart.

    Unlike :class:`PointMap` the components may depend on positions and
    momenta jointly, so all work happens at base-chart points: gradients are
    re-expressed through the inverse-transpose Jacobian and operators by
    similarity with the Jacobian.
    """

    def __init__(self, base: Chart, new_chart: Chart, comps, params: dict[str, float] | None = None):
        if len(comps) != base.dim:
            raise ValueError("need one component per phase-space coordinate")
        self.base = base
        self.new_chart = new_chart
        self.params = dict(params or {})
        self.fields = [
            ScalarField(base, c, self.params) if isinstance(c, str) else c for c in comps
        ]

    def values(self, x: np.ndarray) -> np.ndarray:
        return np.array([f.value(x) for f in self.fields])

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """M[i, a] = d c_i / d x^a at the base point."""
        return np.array([f.jet(x, order=1).grad for f in self.fields])

    def new_gradient(self, F, x: np.ndarray) -> np.ndarray:
        """Gradient of a base-chart scalar with respect to the new coordinates."""
        M = self.jacobian(x)
        g = F.jet(x, order=1).grad
        return np.linalg.solve(M.T, g)

    def operator_in_new_chart(self, K: OperatorField, x: np.ndarray) -> np.ndarray:
        M = self.jacobian(x)
        V = K.eval_matrix(x)
        return M @ V @ np.linalg.inv(M)

    def bracket_matrix(self, x: np.ndarray) -> np.ndarray:
        """Pairwise canonical brackets {c_i, c_j} at the base point."""
        m = self.base.dim
        P = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1, m):
                P[i, j] = poisson_bracket(self.fields[i], self.fields[j], x)
                P[j, i] = -P[i, j]
        return P
