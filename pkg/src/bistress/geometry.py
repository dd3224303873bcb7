"""Charted Riemannian manifolds, maps between them, and quadrature.

Metric and map components are plain Python callables taking a coordinate
array ``x`` (indexable as ``x[0], x[1], ...``) and returning nested lists.
They must be written with :mod:`bistress.jets` functions (``sin``, ``exp``,
...), which dispatch to numpy for float input, so the same callable serves
jet evaluation and float evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import jets
from .jets import Jet, MAX_ORDER, DomainError, UnsupportedOrderError, jeinsum

# smallest admissible eigenvalue relative to the largest; polar Gauss nodes on
# high-dimensional spheres legitimately reach ratios near 1e-15
EIGEN_FLOOR = 1e-16


class GeometryError(Exception):
    pass


class DegenerateMetricError(GeometryError):
    pass


class EmptyMeshError(GeometryError):
    pass


# --------------------------------------------------------------------- types
@dataclass(frozen=True)
class ChartedManifold:
    """A manifold covered (up to measure zero) by one coordinate box.

    ``axes`` describes the quadrature rule per chart axis for compact
    manifolds: ``"gauss"`` for an interval axis, ``"periodic"`` for an
    angle.  ``embedding`` is an optional smooth map into some R^N, used to
    build globally smooth test fields on compact manifolds.
    """

    name: str
    dim: int
    metric: Callable
    chart_domain: tuple
    sample_box: Optional[tuple] = None
    axes: Optional[tuple] = None
    embedding: Optional[Callable] = None
    flat: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if len(self.chart_domain) != self.dim:
            raise ValueError("chart domain must have one interval per dimension")
        if self.axes is not None and len(self.axes) != self.dim:
            raise ValueError("one quadrature axis kind per dimension")

    @property
    def compact(self) -> bool:
        return self.axes is not None

    @property
    def box(self) -> np.ndarray:
        return np.array(self.sample_box if self.sample_box is not None else self.chart_domain, dtype=float)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        dom = np.array(self.chart_domain, dtype=float)
        return np.all((pts >= dom[:, 0]) & (pts <= dom[:, 1]), axis=1)

    def metric_values(self, points) -> np.ndarray:
        """Metric components at a batch of points, shape (P, m, m)."""
        X = jets.variables(points, 0)
        return metric_jet(self, X).value

    def with_metric(self, metric: Callable, name: str | None = None) -> "ChartedManifold":
        return ChartedManifold(
            name=name or self.name,
            dim=self.dim,
            metric=metric,
            chart_domain=self.chart_domain,
            sample_box=self.sample_box,
            axes=self.axes,
            embedding=self.embedding,
            flat=False,
        )


MAP_KINDS = ("generic", "riemannian_immersion", "submersion", "identity_conformal")


@dataclass(frozen=True)
class SmoothMap:
    source: ChartedManifold
    target: ChartedManifold
    components: Callable
    kind: str = "generic"

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise ValueError(f"unknown map kind {self.kind!r}")

    def values(self, points) -> np.ndarray:
        X = jets.variables(points, 0)
        return jets.as_tensor(self.components(X), X).value

    def with_source(self, source: ChartedManifold) -> "SmoothMap":
        return SmoothMap(source, self.target, self.components, self.kind)


@dataclass
class TensorValue:
    """Pointwise tensor components.

    ``valence`` has one tag per trailing axis of ``components``:
    ``"down"``/``"up"`` for source slots and ``"target"`` for a slot in the
    pullback bundle.  A leading batch axis is present when ``base_point`` is
    two dimensional.
    """

    components: np.ndarray
    valence: tuple
    base_point: np.ndarray
    derivatives: tuple = ()

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        self.base_point = np.asarray(self.base_point, dtype=float)
        nslots = len(self.valence)
        if self.components.ndim < nslots:
            raise ValueError("component array has fewer axes than the valence")
        for tag in self.valence:
            if tag not in ("up", "down", "target"):
                raise ValueError(f"bad slot tag {tag!r}")
        m = self.base_point.shape[-1]
        shp = self.components.shape[self.components.ndim - nslots:]
        for tag, s in zip(self.valence, shp):
            if tag in ("up", "down") and s != m:
                raise ValueError("source slot size does not match the chart dimension")

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.components, dtype=dtype)


@dataclass(frozen=True)
class QuadratureMesh:
    nodes: np.ndarray
    weights: np.ndarray
    covers: str
    resolution: tuple = ()

    def __post_init__(self):
        if len(self.nodes) != len(self.weights):
            raise ValueError("nodes and weights differ in length")
        if np.any(np.asarray(self.weights) <= 0):
            raise ValueError("quadrature weights must be positive")

    def __len__(self):
        return len(self.weights)


# -------------------------------------------------------------- jet helpers
def metric_jet(M: ChartedManifold, X: Jet) -> Jet:
    g = jets.as_tensor(M.metric(X), X)
    if g.shape != (M.dim, M.dim):
        raise ValueError(f"metric of {M.name} returned shape {g.shape}")
    return g


def check_metric(g0: np.ndarray) -> None:
    """Raise if any metric value in the batch is not positive definite."""
    sym = 0.5 * (g0 + np.swapaxes(g0, -1, -2))
    ev = np.linalg.eigvalsh(sym)
    if np.any(ev[..., 0] <= EIGEN_FLOOR * np.abs(ev[..., -1])) or np.any(ev[..., 0] <= 0):
        raise DegenerateMetricError(f"metric not positive definite (smallest eigenvalue {ev[..., 0].min():.3e})")


def christoffel_from_metric(g: Jet, ginv: Jet) -> Jet:
    """Gamma^k_ij, axes (k, i, j); one order lower than g."""
    dg = g.grad()  # [a, b, c] = d_c g_ab
    # d_j g_li + d_i g_lj - d_l g_ij
    t = dg + dg.transpose(0, 2, 1) - dg.transpose(2, 0, 1)
    return jeinsum("kl,lij->kij", ginv, t) * 0.5


def riemann_from_christoffel(gamma: Jet) -> Jet:
    """R^l_{kij} with R(d_i, d_j) d_k = R^l_{kij} d_l."""
    dG = gamma.grad()  # [l, a, b, c] = d_c Gamma^l_ab
    d_i_G_jk = Jet(np.einsum("pljkiZ->plkijZ", dG.coef), dG.nvars, dG.order)
    d_j_G_ik = Jet(np.einsum("plikjZ->plkijZ", dG.coef), dG.nvars, dG.order)
    quad = jeinsum("lis,sjk->lkij", gamma, gamma) - jeinsum("ljs,sik->lkij", gamma, gamma)
    return d_i_G_jk - d_j_G_ik + quad


def lower_first(R: Jet | np.ndarray, g) -> Jet | np.ndarray:
    return jeinsum("ls,skij->lkij", g, R)


def orthonormal_frame(g: np.ndarray, rotation: np.ndarray | None = None) -> np.ndarray:
    """Columns form a g-orthonormal basis (Gram-Schmidt on coordinate vectors).

    An optional orthogonal ``rotation`` is applied on the right, giving
    another orthonormal frame.
    """
    g = np.asarray(g, dtype=float)
    m = g.shape[0]
    E = np.zeros((m, m))
    for i in range(m):
        v = np.zeros(m)
        v[i] = 1.0
        for j in range(i):
            v = v - (E[:, j] @ g @ v) * E[:, j]
        n = np.sqrt(v @ g @ v)
        if n <= 0:
            raise DegenerateMetricError("Gram-Schmidt failed on a degenerate metric")
        E[:, i] = v / n
    if rotation is not None:
        E = E @ rotation
    return E


# ------------------------------------------------------------------ points
def as_points(p, dim: int) -> tuple[np.ndarray, bool]:
    """Return (P, dim) points and whether the input was a single point."""
    arr = np.asarray(p, dtype=float)
    single = arr.ndim <= 1
    arr = np.atleast_2d(arr.reshape(1, -1) if arr.ndim == 0 else arr)
    if arr.shape[-1] != dim:
        raise ValueError(f"point has {arr.shape[-1]} coordinates, expected {dim}")
    return arr, single


def _out(arr: np.ndarray, single: bool) -> np.ndarray:
    return arr[0] if single else arr


# --------------------------------------------------------------- operations
def jet_eval(f: Callable, p, order: int) -> Jet:
    """Jet of a scalar chart function at a point."""
    if order > MAX_ORDER:
        raise UnsupportedOrderError(f"order {order} exceeds the supported cap {MAX_ORDER}")
    if order < 0:
        raise UnsupportedOrderError("order must be non-negative")
    pts = np.atleast_1d(np.asarray(p, dtype=float)).reshape(1, -1)
    X = jets.variables(pts, order)
    out = f(X)
    if not isinstance(out, Jet):
        out = jets.as_tensor(out, X)
    return out


def christoffel(M: ChartedManifold, p, with_derivatives: int = 0) -> TensorValue:
    if with_derivatives not in (0, 1, 2):
        raise ValueError("with_derivatives must be 0, 1 or 2")
    pts, single = as_points(p, M.dim)
    X = jets.variables(pts, 1 + with_derivatives)
    g = metric_jet(M, X)
    check_metric(g.value)
    ginv = jets.inverse(g.truncate(g.order - 1))
    G = christoffel_from_metric(g, ginv)
    derivs = []
    D = G
    for _ in range(with_derivatives):
        D = D.grad()
        derivs.append(_out(D.value, single))
    return TensorValue(_out(G.value, single), ("up", "down", "down"), _out(pts, single), tuple(derivs))


def riemann(M: ChartedManifold, p) -> TensorValue:
    pts, single = as_points(p, M.dim)
    X = jets.variables(pts, 2)
    g = metric_jet(M, X)
    check_metric(g.value)
    ginv = jets.inverse(g.truncate(1))
    R = riemann_from_christoffel(christoffel_from_metric(g, ginv))
    return TensorValue(_out(R.value, single), ("up", "down", "down", "down"), _out(pts, single))


def volume_form(M: ChartedManifold, p):
    pts, single = as_points(p, M.dim)
    g0 = M.metric_values(pts)
    det = np.linalg.det(g0)
    if np.any(det <= 0):
        raise DegenerateMetricError("non-positive metric determinant")
    v = np.sqrt(det)
    return float(v[0]) if single else v


# -------------------------------------------------------------- quadrature
def _rule_1d(kind: str, lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    if kind == "gauss":
        x, w = np.polynomial.legendre.leggauss(n)
        half = 0.5 * (hi - lo)
        return lo + half * (x + 1.0), half * w
    if kind in ("periodic", "midpoint"):
        h = (hi - lo) / n
        return lo + h * (np.arange(n) + 0.5), np.full(n, h)
    raise ValueError(f"unknown quadrature axis kind {kind!r}")


def default_resolution(dim: int) -> int:
    return {1: 64, 2: 64, 3: 16, 4: 10}.get(dim, 8)


def make_mesh(M: ChartedManifold, resolution: int | Sequence[int] | None = None) -> QuadratureMesh:
    """Tensor-product mesh over the chart domain of a compact manifold."""
    if not M.compact:
        raise GeometryError(f"{M.name} has no integration parametrization")
    if resolution is None:
        resolution = default_resolution(M.dim)
    res = (resolution,) * M.dim if np.isscalar(resolution) else tuple(resolution)
    if any(r < 1 for r in res):
        raise ValueError("resolution must be positive")
    rules = [_rule_1d(k, lo, hi, n) for k, (lo, hi), n in zip(M.axes, M.chart_domain, res)]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=1), axis=1)
    return QuadratureMesh(nodes, weights, covers=M.name, resolution=res)


def chunks(n: int, size: int = 4096):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def integrate(f: Callable, mesh: QuadratureMesh, M: ChartedManifold, chunk: int = 4096) -> float:
    """sum_i w_i f(p_i) sqrt(det g(p_i)).

    ``f`` maps an array of nodes (P, m) to values (P,).  Summation uses
    numpy's pairwise reduction over a fixed node order.
    """
    if len(mesh) == 0:
        raise EmptyMeshError("cannot integrate over an empty mesh")
    vals = np.empty(len(mesh))
    for sl in chunks(len(mesh), chunk):
        nodes = mesh.nodes[sl]
        vals[sl] = np.asarray(f(nodes), dtype=float) * volume_form(M, nodes)
    return float(np.sum(mesh.weights * vals))


def volume(M: ChartedManifold, mesh: QuadratureMesh) -> float:
    return integrate(lambda x: np.ones(len(x)), mesh, M)


# ----------------------------------------------------- tensor contractions
def covariant_derivative_2form(sigma: Jet, gamma: Jet) -> Jet:
    """(nabla_k sigma)_ij with axes (i, j, k)."""
    d = sigma.grad()
    return d - jeinsum("lki,lj->ijk", gamma, sigma) - jeinsum("lkj,il->ijk", gamma, sigma)


def divergence_2form(sigma: Jet, ginv: Jet, gamma: Jet) -> Jet:
    """(Div sigma)_j = g^{ik} (nabla_k sigma)_ij."""
    return jeinsum("ik,ijk->j", ginv, covariant_derivative_2form(sigma, gamma))


def covariant_derivative_1form(theta: Jet, gamma: Jet) -> Jet:
    """(nabla_j theta)_i with axes (i, j)."""
    return theta.grad() - jeinsum("lji,l->ij", gamma, theta)


def divergence_vector(V: Jet, gamma: Jet) -> Jet:
    """div V = d_k V^k + Gamma^k_kl V^l."""
    dV = V.grad()
    return jeinsum("kk->", dV) + jeinsum("kkl,l->", gamma, V)


def metric_compatibility(M: ChartedManifold, p) -> np.ndarray:
    """Components of nabla g at the points (should vanish)."""
    pts, single = as_points(p, M.dim)
    X = jets.variables(pts, 1)
    g = metric_jet(M, X)
    ginv = jets.inverse(g.truncate(0))
    G = christoffel_from_metric(g, ginv)
    return _out(covariant_derivative_2form(g, G).value, single)


__all__ = [
    "ChartedManifold", "SmoothMap", "TensorValue", "QuadratureMesh",
    "GeometryError", "DegenerateMetricError", "EmptyMeshError", "DomainError",
    "UnsupportedOrderError", "jet_eval", "christoffel", "riemann", "volume_form",
    "integrate", "make_mesh", "volume", "orthonormal_frame",
]
