"""Executable example maps, each tagged with its expected classification.

Charts used throughout:

* Euclidean space with the identity metric (flat).
* Round spheres S^m(a) in hyperspherical angles (theta_1..theta_{m-1}, phi),
  integrated with Gauss-Legendre in the polar angles and the midpoint rule
  in the azimuth.
* The unit target sphere S^n in stereographic coordinates from the north
  pole (0, ..., 0, 1); every map below stays away from that pole.
* Flat tori in periodic angle coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from . import jets
from .fields import PullbackConnectionContext, form_norm, target_norm
from .geometry import ChartedManifold, GeometryError, QuadratureMesh, SmoothMap, make_mesh

TAGS = ("harmonic", "proper_biharmonic", "S2_zero", "parallel_S2", "S2_lambda_g")
TOL_YES = 1e-6
TOL_NO = 1e-3
PARAM_TOL = 1e-12
SAMPLES = 100
INV_SQRT2 = 1.0 / math.sqrt(2.0)

CITATIONS = {
    "harmonic": "tension field tau = trace nabla d phi vanishes",
    "proper_biharmonic": "bitension tau_2 = -Delta tau - trace R^N(d phi, tau) d phi vanishes, tau does not",
    "S2_zero": "bienergy stress-energy tensor S_2 vanishes identically",
    "parallel_S2": "nabla S_2 = 0",
    "S2_lambda_g": "S_2 = lambda g for a constant lambda (isovolumetric criticality)",
}


class CatalogError(ValueError):
    pass


class UnknownEntryError(CatalogError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class InvalidParameterError(CatalogError):
    pass


class InconclusiveError(GeometryError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


# ------------------------------------------------------------------ charts
def _diag(entries):
    m = len(entries)
    return [[entries[i] if i == j else 0.0 for j in range(m)] for i in range(m)]


def euclidean(m: int, name: str | None = None, box: float = 1.0) -> ChartedManifold:
    ident = np.eye(m).tolist()
    return ChartedManifold(
        name=name or f"R{m}",
        dim=m,
        metric=lambda x: ident,
        chart_domain=((-np.inf, np.inf),) * m,
        sample_box=((-box, box),) * m,
        flat=True,
    )


def sphere_point(x, a: float):
    """Embedding of S^m(a) from hyperspherical angles, m = len(x)."""
    m = len(x)
    out = []
    prod = a
    for k in range(m - 1):
        out.append(prod * jets.cos(x[k]))
        prod = prod * jets.sin(x[k])
    out.append(prod * jets.cos(x[m - 1]))
    out.append(prod * jets.sin(x[m - 1]))
    return out


def _sphere_metric_entries(x, a: float):
    m = len(x)
    entries = []
    s2 = a * a
    for k in range(m):
        entries.append(s2)
        if k < m - 1:
            s2 = s2 * jets.sin(x[k]) ** 2
    return entries


def sphere(m: int, a: float = 1.0) -> ChartedManifold:
    """S^m(a) in angles; polar angles in (0, pi), azimuth periodic."""
    polar = ((0.0, math.pi),) * (m - 1)
    return ChartedManifold(
        name=f"S{m}({a:g})",
        dim=m,
        metric=lambda x: _diag(_sphere_metric_entries(x, a)),
        chart_domain=polar + ((0.0, 2 * math.pi),),
        sample_box=((math.pi / 4, 3 * math.pi / 4),) * (m - 1) + ((0.0, 2 * math.pi),),
        axes=("gauss",) * (m - 1) + ("periodic",),
        embedding=lambda x: sphere_point(x, a),
    )


def stereographic_sphere(n: int) -> ChartedManifold:
    """Unit S^n in stereographic coordinates from (0, ..., 0, 1)."""

    def metric(y):
        r2 = sum(y[i] * y[i] for i in range(n))
        c = 4.0 * (1.0 + r2) ** -2
        return _diag([c] * n)

    return ChartedManifold(
        name=f"S{n}",
        dim=n,
        metric=metric,
        chart_domain=((-np.inf, np.inf),) * n,
        sample_box=((-1.0, 1.0),) * n,
    )


def stereographic(X):
    """Ambient point on the unit sphere -> stereographic coordinates."""
    den = 1.0 - X[-1]
    return [X[i] / den for i in range(len(X) - 1)]


def flat_torus(m: int, radii=None) -> ChartedManifold:
    r = [1.0] * m if radii is None else list(radii)

    def embed(x):
        out = []
        for i in range(m):
            out += [r[i] * jets.cos(x[i]), r[i] * jets.sin(x[i])]
        return out

    g = _diag([ri * ri for ri in r])
    return ChartedManifold(
        name=f"T{m}",
        dim=m,
        metric=lambda x: g,
        chart_domain=((0.0, 2 * math.pi),) * m,
        sample_box=((0.0, 2 * math.pi),) * m,
        axes=("periodic",) * m,
        embedding=embed,
        flat=True,
    )


def product(A: ChartedManifold, B: ChartedManifold) -> ChartedManifold:
    p, q = A.dim, B.dim

    def metric(x):
        ga = jets.as_tensor(A.metric(x[0:p]), x)
        gb = jets.as_tensor(B.metric(x[p : p + q]), x)
        rows = []
        for i in range(p + q):
            row = []
            for j in range(p + q):
                if i < p and j < p:
                    row.append(ga[i, j])
                elif i >= p and j >= p:
                    row.append(gb[i - p, j - p])
                else:
                    row.append(0.0)
            rows.append(row)
        return rows

    def embed(x):
        return list(A.embedding(x[0:p])) + list(B.embedding(x[p : p + q]))

    both = A.axes is not None and B.axes is not None
    return ChartedManifold(
        name=f"{A.name}x{B.name}",
        dim=p + q,
        metric=metric,
        chart_domain=tuple(A.chart_domain) + tuple(B.chart_domain),
        sample_box=tuple(map(tuple, A.box)) + tuple(map(tuple, B.box)),
        axes=tuple(A.axes) + tuple(B.axes) if both else None,
        embedding=embed if A.embedding and B.embedding else None,
        flat=A.flat and B.flat,
    )


# ------------------------------------------------------------- parameters
@dataclass(frozen=True)
class Param:
    kind: str  # "int", "real" or "vector"
    default: object
    lo: Optional[float] = None
    hi: Optional[float] = None
    lo_open: bool = False
    hi_open: bool = False
    doc: str = ""

    def describe(self) -> str:
        if self.kind == "vector":
            return f"vector of reals, default {self.default}"
        if self.lo is None and self.hi is None:
            rng = "(-inf,inf)"
        else:
            lb = ("(" if self.lo_open or self.lo is None else "[") + ("-inf" if self.lo is None else f"{self.lo:g}")
            ub = ("inf" if self.hi is None else f"{self.hi:g}") + (")" if self.hi_open or self.hi is None else "]")
            rng = f"{lb},{ub}"
        return f"{self.kind} in {rng}, default {self.default}"

    def coerce(self, name: str, value):
        if self.kind == "vector":
            if isinstance(value, str):
                value = [float(v) for v in value.replace(" ", "").split(",") if v]
            try:
                vec = tuple(float(v) for v in np.atleast_1d(value))
            except (TypeError, ValueError) as exc:
                raise InvalidParameterError(f"{name} must be a list of reals") from exc
            return vec
        try:
            if self.kind == "int":
                f = float(value)
                if f != int(f):
                    raise ValueError
                v = int(f)
            else:
                v = float(value)
        except (TypeError, ValueError) as exc:
            raise InvalidParameterError(f"{name} must be {'an integer' if self.kind == 'int' else 'a real'}") from exc
        if not math.isfinite(v):
            raise InvalidParameterError(f"{name} must be finite")
        if self.lo is not None and (v < self.lo or (self.lo_open and v <= self.lo)):
            raise InvalidParameterError(f"{name}={v} outside {self.describe()}")
        if self.hi is not None and (v > self.hi or (self.hi_open and v >= self.hi)):
            raise InvalidParameterError(f"{name}={v} outside {self.describe()}")
        return v


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    map: SmoothMap
    parameters: dict
    expected: frozenset
    citations: dict
    mesh: Optional[QuadratureMesh] = None
    notes: str = ""

    @property
    def compact(self) -> bool:
        return self.map.source.compact

    @property
    def source(self) -> ChartedManifold:
        return self.map.source


@dataclass(frozen=True)
class _Spec:
    builder: Callable
    schema: dict
    summary: str


REGISTRY: dict[str, _Spec] = {}


def _register(name, summary, **schema):
    def deco(fn):
        REGISTRY[name] = _Spec(fn, schema, summary)
        return fn

    return deco


def _close(x, y) -> bool:
    return abs(x - y) <= PARAM_TOL


def _closure(tags) -> frozenset:
    """Close a tag set under the implications between tags."""
    t = set(tags)
    if "harmonic" in t:
        t |= {"S2_zero"}
        t.discard("proper_biharmonic")
    if "S2_zero" in t:
        t |= {"S2_lambda_g", "parallel_S2"}
    if "S2_lambda_g" in t:
        t |= {"parallel_S2"}
    return frozenset(t)


# ----------------------------------------------------------------- entries
@_register(
    "cubic_curve",
    "gamma(t) = t^3 a in R^n: S_2 = 0 although gamma is not a geodesic",
    n=Param("int", 3, 1, None, doc="target dimension"),
    a=Param("vector", (1.0, -0.5, 2.0), doc="direction vector a (length n)"),
)
def _cubic_curve(n, a):
    a = np.asarray(a, dtype=float)
    if a.shape != (n,):
        raise InvalidParameterError(f"a must have {n} components")
    if not np.any(a):
        raise InvalidParameterError("a must be non-zero")
    src = euclidean(1, "R1")
    phi = SmoothMap(src, euclidean(n), lambda x: [x[0] ** 3 * ai for ai in a])
    return phi, {"proper_biharmonic", "S2_zero"}


@_register(
    "circle_arclength",
    "unit-speed circle of radius r in R^2: S_2 = (3/2)|tau|^2 g",
    r=Param("real", 1.0, 0.0, None, lo_open=True, doc="radius"),
)
def _circle_arclength(r):
    src = ChartedManifold(
        name=f"S1(len {2 * math.pi * r:g})",
        dim=1,
        metric=lambda x: [[1.0]],
        chart_domain=((0.0, 2 * math.pi * r),),
        sample_box=((0.0, 2 * math.pi * r),),
        axes=("periodic",),
        embedding=lambda x: [r * jets.cos(x[0] / r), r * jets.sin(x[0] / r)],
        flat=True,
    )
    phi = SmoothMap(src, euclidean(2), lambda x: [r * jets.cos(x[0] / r), r * jets.sin(x[0] / r)],
                    "riemannian_immersion")
    return phi, {"S2_lambda_g"}


@_register(
    "warped_projection",
    "projection R^k x_{f^2} R^n -> R^k with ln f = slope * x_1",
    k=Param("int", 2, 1, None, doc="base dimension"),
    n=Param("int", 2, 1, None, doc="fibre dimension"),
    slope=Param("real", 0.5, doc="slope of ln f"),
)
def _warped_projection(k, n, slope):
    m = k + n

    def metric(x):
        f2 = jets.exp(2.0 * slope * x[0])
        return _diag([1.0] * k + [f2] * n)

    src = ChartedManifold(f"R{k}x_f2R{n}", m, metric, ((-np.inf, np.inf),) * m,
                          sample_box=((-1.0, 1.0),) * m)
    phi = SmoothMap(src, euclidean(k), lambda x: [x[i] for i in range(k)], "submersion")
    tags = {"S2_lambda_g"} if slope == 0 else {"proper_biharmonic", "S2_lambda_g"}
    if slope == 0:
        tags.add("harmonic")
    return phi, tags


def _conformal_source(m, log_factor, name, lo=-np.inf):
    """R^m with metric e^{2 log_factor(x)} delta."""

    def metric(x):
        e = jets.exp(2.0 * log_factor(x))
        return _diag([e] * m)

    return ChartedManifold(name, m, metric, ((lo, np.inf),) + ((-np.inf, np.inf),) * (m - 1),
                           sample_box=((-1.0, 1.0),) * m)


@_register(
    "conformal_identity_a",
    "identity (R^m, g) -> (R^m, gbar = f g), f = 1 + slope * y_1 affine positive",
    m=Param("int", 3, 3, None, doc="dimension (m != 2)"),
    slope=Param("real", 0.5, -1.0, 1.0, lo_open=True, hi_open=True, doc="slope of f; |slope| < 1 keeps f > 0 on the sample box"),
)
def _conformal_identity_a(m, slope):
    if slope == 0:
        raise InvalidParameterError("slope must be non-zero (f non-constant)")
    # f > 0 on the half space on one side of its zero set
    edge = -1.0 / slope
    y1 = (edge, np.inf) if slope > 0 else (-np.inf, edge)
    src = ChartedManifold(f"R{m}_a", m, lambda x: _diag([1.0 / (1.0 + slope * x[0])] * m),
                          (y1,) + ((-np.inf, np.inf),) * (m - 1), sample_box=((-1.0, 1.0),) * m)
    phi = SmoothMap(src, euclidean(m), lambda x: [x[i] for i in range(m)], "identity_conformal")
    return phi, {"proper_biharmonic", "S2_lambda_g"}


@_register(
    "conformal_identity_b",
    "identity (R^m, e^{-2 rho} delta) -> (R^m, delta), rho = slope * y_1 affine; biharmonic iff m = 4",
    m=Param("int", 4, 3, None, doc="dimension (m != 2)"),
    slope=Param("real", 1.0, doc="c = |grad rho|"),
)
def _conformal_identity_b(m, slope):
    if slope == 0:
        raise InvalidParameterError("slope must be non-zero (rho non-constant)")
    src = _conformal_source(m, lambda x: -slope * x[0], f"R{m}_b")
    phi = SmoothMap(src, euclidean(m), lambda x: [x[i] for i in range(m)], "identity_conformal")
    return phi, ({"proper_biharmonic"} if m == 4 else set())


@_register(
    "conformal_torus",
    "identity (T^m, e^{-2 rho} delta) -> (T^m, delta) with periodic rho = eps * sin(y_1); compact test map",
    m=Param("int", 3, 3, None, doc="dimension"),
    eps=Param("real", 0.3, 0.0, None, lo_open=True, doc="amplitude of rho"),
)
def _conformal_torus(m, eps):
    T = flat_torus(m)

    def metric(x):
        e = jets.exp(-2.0 * eps * jets.sin(x[0]))
        return _diag([e] * m)

    src = ChartedManifold(f"T{m}_conf", m, metric, T.chart_domain, T.sample_box, T.axes, T.embedding)
    phi = SmoothMap(src, T, lambda x: [x[i] for i in range(m)], "identity_conformal")
    return phi, set()


def _sphere_tags(m, a, minimal_a=1.0):
    if _close(a, minimal_a):
        return {"harmonic"}
    tags = {"S2_lambda_g"}
    if _close(a, INV_SQRT2):
        tags.add("proper_biharmonic")
    if m == 4:
        tags.add("S2_zero")
    return tags


@_register(
    "hypersphere",
    "small hypersphere S^m(a) in S^{m+1}, proper biharmonic iff a = 1/sqrt(2)",
    m=Param("int", 3, 1, 6, doc="dimension"),
    a=Param("real", INV_SQRT2, 0.0, 1.0, lo_open=True, doc="radius"),
)
def _hypersphere(m, a):
    b = math.sqrt(max(1.0 - a * a, 0.0))
    src = sphere(m, a)

    def comp(x):
        u = sphere_point(x, a)
        return stereographic(u + [b])

    phi = SmoothMap(src, stereographic_sphere(m + 1), comp, "riemannian_immersion")
    return phi, _sphere_tags(m, a)


@_register(
    "clifford_torus",
    "S^{m1}(a1) x S^{m2}(a2) in S^{m1+m2+1} with a1^2 + a2^2 = 1",
    m1=Param("int", 1, 1, 5, doc="first factor dimension"),
    m2=Param("int", 2, 1, 5, doc="second factor dimension"),
    a1=Param("real", 0.6, 0.0, 1.0, lo_open=True, hi_open=True, doc="first radius"),
    a2=Param("real", None, 0.0, 1.0, lo_open=True, hi_open=True, doc="second radius, defaults to sqrt(1 - a1^2)"),
)
def _clifford_torus(m1, m2, a1, a2):
    if a2 is None:
        a2 = math.sqrt(1.0 - a1 * a1)
    elif abs(a1 * a1 + a2 * a2 - 1.0) > PARAM_TOL:
        raise InvalidParameterError(f"a1^2 + a2^2 = {a1 * a1 + a2 * a2!r}, must equal 1")
    m = m1 + m2
    src = product(sphere(m1, a1), sphere(m2, a2))

    def comp(x):
        X = sphere_point(x[0:m1], a1) + sphere_point(x[m1:m], a2)
        return stereographic(X)

    phi = SmoothMap(src, stereographic_sphere(m + 1), comp, "riemannian_immersion")
    x = a1 * a1
    if _close(x, m1 / m):
        tags = {"harmonic"}
    elif _close(x, 0.5) and m1 != m2:
        tags = {"proper_biharmonic", "parallel_S2"}
    else:
        tags = {"parallel_S2"}
    return phi, tags, {"a2": a2}


@_register(
    "minimal_in_umbilical",
    "minimal Clifford torus S^1(a/sqrt2) x S^1(a/sqrt2) in S^3(a) in S^4",
    a=Param("real", INV_SQRT2, 0.0, 1.0, lo_open=True, doc="radius of the umbilical S^3(a)"),
)
def _minimal_in_umbilical(a):
    r = a * INV_SQRT2
    b = math.sqrt(max(1.0 - a * a, 0.0))
    src = flat_torus(2, (r, r))

    def comp(x):
        X = [r * jets.cos(x[0]), r * jets.sin(x[0]), r * jets.cos(x[1]), r * jets.sin(x[1]), b]
        return stereographic(X)

    phi = SmoothMap(src, stereographic_sphere(4), comp, "riemannian_immersion")
    return phi, _sphere_tags(2, a)


@_register(
    "horizontally_conformal",
    "projection (R^n x R^k, delta/l2 + delta) -> (R^n, delta) with dilation^2 l2 = 1 + slope * y_1 affine",
    n=Param("int", 3, 1, None, doc="base dimension (n != 2)"),
    k=Param("int", 1, 1, None, doc="fibre dimension"),
    slope=Param("real", 0.5, -1.0, 1.0, lo_open=True, hi_open=True, doc="slope of the squared dilation"),
)
def _horizontally_conformal(n, k, slope):
    if n == 2:
        raise InvalidParameterError("n must differ from 2")
    if slope == 0:
        raise InvalidParameterError("slope must be non-zero (dilation non-constant)")
    m = n + k

    def metric(x):
        inv = 1.0 / (1.0 + slope * x[0])
        return _diag([inv] * n + [1.0] * k)

    src = ChartedManifold(f"R{n}xR{k}_hc", m, metric, ((-1.0 / abs(slope), 1.0 / abs(slope)),) + ((-np.inf, np.inf),) * (m - 1),
                          sample_box=((-1.0, 1.0),) * m)
    phi = SmoothMap(src, euclidean(n), lambda x: [x[i] for i in range(n)], "submersion")
    return phi, {"proper_biharmonic", "S2_lambda_g"}


# ---------------------------------------------------------------- builders
def names() -> list[str]:
    return sorted(REGISTRY)


def schema(name: str) -> dict:
    try:
        return REGISTRY[name].schema
    except KeyError:
        raise UnknownEntryError(f"unknown catalog entry {name!r}; known: {', '.join(names())}") from None


def resolve_params(name: str, params: dict | None = None) -> dict:
    sch = schema(name)
    params = dict(params or {})
    unknown = set(params) - set(sch)
    if unknown:
        raise InvalidParameterError(f"unknown parameter(s) for {name}: {', '.join(sorted(unknown))}")
    out = {}
    for key, spec in sch.items():
        if key in params and params[key] is not None:
            out[key] = spec.coerce(key, params[key])
        else:
            out[key] = spec.default
    return out


def build(name: str, resolution=None, **params) -> CatalogEntry:
    spec = REGISTRY.get(name)
    if spec is None:
        raise UnknownEntryError(f"unknown catalog entry {name!r}; known: {', '.join(names())}")
    values = resolve_params(name, params)
    res = spec.builder(**values)
    phi, tags = res[0], res[1]
    if len(res) > 2:
        values.update(res[2])
    expected = _closure(tags)
    mesh = make_mesh(phi.source, resolution) if phi.source.compact else None
    return CatalogEntry(
        name=name,
        map=phi,
        parameters=values,
        expected=expected,
        citations={t: CITATIONS[t] for t in sorted(expected)},
        mesh=mesh,
        notes=spec.summary,
    )


def default_entries() -> list[CatalogEntry]:
    return [build(n) for n in names()]


# ----------------------------------------------------------- classification
def sample_points(M: ChartedManifold, n: int = SAMPLES, seed: int = 0) -> np.ndarray:
    """Deterministic quasi-random points in the sample box."""
    box = M.box
    sampler = qmc.Halton(d=M.dim, scramble=True, seed=seed)
    u = sampler.random(n)
    return box[:, 0] + u * (box[:, 1] - box[:, 0])


@dataclass
class Residuals:
    """Pointwise residual norms of a map over a set of sample points."""

    tau: np.ndarray
    tau2: np.ndarray
    S2: np.ndarray
    nabla_S2: np.ndarray
    lambda_g: np.ndarray
    lam: float

    @classmethod
    def compute(cls, phi: SmoothMap, points) -> "Residuals":
        c = PullbackConnectionContext.at(phi, points, 4)
        ginv0 = c.ginv0
        S2 = c.S2.value
        m = c.m
        lam_p = np.einsum("pij,pij->p", ginv0, S2) / m
        lam = float(np.mean(lam_p))
        return cls(
            tau=target_norm(c.tau.value, c.h0),
            tau2=target_norm(c.tau2, c.h0),
            S2=form_norm(S2, ginv0),
            nabla_S2=form_norm(c.nabla_S2.value, ginv0),
            lambda_g=form_norm(S2 - lam * c.g0, ginv0),
            lam=lam,
        )

    def table(self) -> dict:
        return {
            "harmonic": float(np.max(self.tau)),
            "proper_biharmonic": float(np.max(self.tau2)),
            "S2_zero": float(np.max(self.S2)),
            "parallel_S2": float(np.max(self.nabla_S2)),
            "S2_lambda_g": float(np.max(self.lambda_g)),
        }


@dataclass
class Classification:
    tags: frozenset
    residuals: dict
    expected: frozenset
    lam: float = 0.0
    inconclusive: tuple = field(default=())

    @property
    def matches(self) -> bool:
        return self.tags == self.expected


def classify(entry: CatalogEntry, samples=None, tol_yes: float = TOL_YES, tol_no: float = TOL_NO,
             seed: int = 0, strict: bool = True) -> Classification:
    """Tag a map from residual norms at sample points.

    A residual below ``tol_yes`` means the property holds, one at or above
    ``tol_no`` means it fails; anything between is inconclusive and raises
    unless ``strict`` is false.
    """
    if samples is None:
        samples = sample_points(entry.source, SAMPLES, seed)
    r = Residuals.compute(entry.map, samples)
    table = r.table()
    holds = {}
    band = []
    for tag, val in table.items():
        if val < tol_yes:
            holds[tag] = True
        elif val >= tol_no:
            holds[tag] = False
        else:
            holds[tag] = False
            band.append(tag)
    tags = set()
    if holds["harmonic"]:
        tags.add("harmonic")
    elif holds["proper_biharmonic"]:
        tags.add("proper_biharmonic")
    for t in ("S2_zero", "parallel_S2", "S2_lambda_g"):
        if holds[t]:
            tags.add(t)
    out = Classification(frozenset(tags), table, entry.expected, r.lam, tuple(band))
    if band and strict:
        raise InconclusiveError(f"{entry.name}: residuals in the inconclusive band for {', '.join(band)}", table)
    return out
