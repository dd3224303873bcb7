"""Metric variations of the bienergy functional F(g) = 1/2 int |tau|^2 v_g.

The map is fixed and the source metric moves along g_t = g + t omega.  The
finite-difference derivative of F is compared with -1/2 int <S_2, omega> v_g.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import jets
from .fields import PullbackConnectionContext, form_norm
from .geometry import (
    ChartedManifold,
    DegenerateMetricError,
    GeometryError,
    QuadratureMesh,
    SmoothMap,
    as_points,
    check_metric,
    christoffel_from_metric,
    chunks,
    divergence_2form,
    make_mesh,
    metric_jet,
)
from .jets import MAX_ORDER, Jet, UnsupportedOrderError, jeinsum

FD_STEP = 1e-4
T_MAX = 1e-2


class NoMeshError(GeometryError):
    pass


class StepTooLargeError(GeometryError):
    pass


# ---------------------------------------------------------------- variations
def _lifted(x: Jet) -> Jet:
    """Coordinate jets one order higher (capped), for fields built from d(E)."""
    return jets.variables(x.value, min(x.order + 1, MAX_ORDER))


@dataclass(frozen=True)
class MetricVariation:
    """Symmetric 2-tensor field omega and the family g_t = g + t omega."""

    omega: Callable
    t_max: float = T_MAX
    label: str = "omega"
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")

    def field(self, x: Jet) -> Jet:
        w = jets.as_tensor(self.omega(x), x)
        return (w + w.transpose(1, 0)) * 0.5

    def values(self, points) -> np.ndarray:
        X = jets.variables(np.atleast_2d(points), 0)
        return self.field(X).value

    def metric_at(self, M: ChartedManifold, t: float) -> ChartedManifold:
        if t == 0:
            return M

        def metric(x):
            return metric_jet(M, x) + self.field(x) * t

        return M.with_metric(metric, name=f"{M.name}+{t:g}{self.label}")

    def check(self, M: ChartedManifold, points, t: float | None = None) -> None:
        """Raise if g +- t omega is not positive definite at the points."""
        t = self.t_max if t is None else t
        g0 = M.metric_values(points)
        w0 = self.values(points)
        for s in (t, -t):
            try:
                check_metric(g0 + s * w0)
            except DegenerateMetricError as exc:
                raise StepTooLargeError(f"g + t omega indefinite at t={s:g}") from exc


def homothety(M: ChartedManifold) -> MetricVariation:
    """omega = g."""
    return MetricVariation(lambda x: metric_jet(M, x), label="g")


def conformal_variation(M: ChartedManifold, f: Callable) -> MetricVariation:
    """omega = f g for a scalar chart function f."""
    return MetricVariation(lambda x: metric_jet(M, x) * f(x), label="fg")


def random_variation(M: ChartedManifold, seed: int, bumps: int = 3, amplitude: float = 0.5) -> MetricVariation:
    """Globally smooth random omega: pullback of Gaussian-bump ambient tensors.

    omega_ij = sum_ab A_ab(E(x)) d_i E^a d_j E^b with E the embedding, so
    the field is smooth across chart singularities (poles, seams).
    """
    if M.embedding is None:
        raise NoMeshError(f"{M.name} has no embedding for random variations")
    rng = np.random.default_rng(seed)
    box = M.box
    centres_x = box[:, 0] + rng.random((bumps, M.dim)) * (box[:, 1] - box[:, 0])
    X0 = jets.variables(centres_x, 0)
    centres = jets.as_tensor(M.embedding(X0), X0).value
    N = centres.shape[1]
    scale = max(float(np.max(np.linalg.norm(centres, axis=1))), 1e-3)
    width = 0.6 * scale
    mats = []
    for _ in range(bumps):
        A = rng.normal(size=(N, N))
        mats.append(amplitude * 0.5 * (A + A.T))
    mats = np.array(mats)

    def omega(x: Jet) -> Jet:
        xl = _lifted(x)
        E = jets.as_tensor(M.embedding(xl), xl)
        dE = E.grad()
        E = E.truncate(dE.order)
        A = None
        for c, S in zip(centres, mats):
            d = E - c
            r2 = jeinsum("a,a->", d, d)
            term = jets.exp(r2 * (-0.5 / width**2))
            part = jeinsum("ab,->ab", S, term)
            A = part if A is None else A + part
        w = jeinsum("ab,ai,bj->ij", A, dE, dE)
        return w.truncate(x.order)

    return MetricVariation(omega, label=f"rand{seed}", seed=seed)


# ---------------------------------------------------------------- integrals
def _require_mesh(phi: SmoothMap, mesh):
    if mesh is not None:
        return mesh
    if not phi.source.compact:
        raise NoMeshError(f"{phi.source.name} is not compact; integrals need a mesh")
    return make_mesh(phi.source)


def integrate_map(phi: SmoothMap, mesh: QuadratureMesh, integrand: Callable, order: int, chunk: int = 2048) -> float:
    """sum_i w_i integrand(ctx)_i sqrt(det g) over mesh nodes, chunked."""
    if len(mesh) == 0:
        raise NoMeshError("empty mesh")
    total = np.empty(len(mesh))
    for sl in chunks(len(mesh), chunk):
        c = PullbackConnectionContext.at(phi, mesh.nodes[sl], order)
        vals = np.asarray(integrand(c), dtype=float)
        total[sl] = vals * np.sqrt(np.linalg.det(c.g0))
    return float(np.sum(mesh.weights * total))


def bienergy(phi: SmoothMap, mesh: QuadratureMesh | None = None, metric: ChartedManifold | None = None) -> float:
    """F(g) = 1/2 int |tau|^2 v_g, optionally with a replacement source metric."""
    mesh = _require_mesh(phi, mesh)
    if metric is not None:
        phi = phi.with_source(metric)
    return 0.5 * integrate_map(phi, mesh, lambda c: c.tau_norm2.value, 2)


def first_variation_fd(phi: SmoothMap, var: MetricVariation, mesh: QuadratureMesh | None = None,
                       h_step: float = FD_STEP, richardson: bool = True) -> float:
    """Central difference of F(g_t) at t = 0, with one Richardson level."""
    mesh = _require_mesh(phi, mesh)
    if h_step <= 0:
        raise ValueError("h_step must be positive")
    if h_step > var.t_max:
        raise StepTooLargeError(f"step {h_step:g} exceeds t_max {var.t_max:g}")
    M = phi.source
    var.check(M, mesh.nodes, h_step)

    def F(t):
        try:
            return bienergy(phi, mesh, var.metric_at(M, t))
        except DegenerateMetricError as exc:
            raise StepTooLargeError(f"g_t indefinite at t={t:g}") from exc

    def D(h):
        return (F(h) - F(-h)) / (2.0 * h)

    d1 = D(h_step)
    if not richardson:
        return d1
    d2 = D(0.5 * h_step)
    return (4.0 * d2 - d1) / 3.0


def s2_pairing(c: PullbackConnectionContext, var: MetricVariation) -> np.ndarray:
    w = var.values(c.points)
    return np.einsum("pia,pjb,pij,pab->p", c.ginv0, c.ginv0, c.S2.value, w)


def first_variation_s2(phi: SmoothMap, var: MetricVariation, mesh: QuadratureMesh | None = None) -> float:
    """-1/2 int <S_2, omega> v_g."""
    mesh = _require_mesh(phi, mesh)
    return -0.5 * integrate_map(phi, mesh, lambda c: s2_pairing(c, var), 3)


# ------------------------------------------------------------------ xi field
def xi_field(M: ChartedManifold, var: MetricVariation, p, order: int = 2) -> np.ndarray:
    """xi = (Div omega)^# - 1/2 grad(trace omega), a source vector."""
    pts, single = as_points(p, M.dim)
    X = jets.variables(pts, order)
    g = metric_jet(M, X)
    check_metric(g.value)
    ginv = jets.inverse(g.truncate(order - 1))
    G = christoffel_from_metric(g, ginv)
    w = var.field(X)
    if w.order < 1:
        raise UnsupportedOrderError("omega jet too short for xi")
    div = divergence_2form(w, ginv, G).value
    tr = jeinsum("ij,ij->", ginv, w)
    dtr = tr.grad().value
    ginv0 = ginv.value
    xi = np.einsum("pij,pj->pi", ginv0, div - 0.5 * dtr)
    return xi[0] if single else xi


def xi_identity_residual(phi: SmoothMap, var: MetricVariation, p, h_step: float = FD_STEP):
    """Relative gap between a finite-difference d/dt |tau_t|^2 and
    -2<tau . nabla d phi, omega> - 2<tau, d phi(xi)>."""
    pts, single = as_points(p, phi.source.dim)
    M = phi.source

    def tau2(t):
        c = PullbackConnectionContext.at(phi.with_source(var.metric_at(M, t)), pts, 2)
        return c.tau_norm2.value

    fd = (tau2(h_step) - tau2(-h_step)) / (2 * h_step)
    fd2 = (tau2(0.5 * h_step) - tau2(-0.5 * h_step)) / h_step
    fd = (4 * fd2 - fd) / 3
    c = PullbackConnectionContext.at(phi, pts, 3)
    w = var.values(pts)
    tB = np.einsum("pab,pa,pbij->pij", c.h0, c.tau.value, c.hessian.value)
    pair = np.einsum("pia,pjb,pij,pab->p", c.ginv0, c.ginv0, tB, w)
    xi = xi_field(M, var, pts)
    dxi = np.einsum("pab,pa,pbi,pi->p", c.h0, c.tau.value, c.dphi.value, xi)
    rhs = -2 * pair - 2 * dxi
    gap = np.abs(fd - rhs) / (np.abs(rhs) + 1e-12 + np.abs(fd))
    return gap[0] if single else gap


# --------------------------------------------------------------- projection
def isovolumetric_project(var: MetricVariation, M: ChartedManifold, mesh: QuadratureMesh) -> MetricVariation:
    """omega' = omega - c g with int <g, omega'> v_g = 0."""
    nodes = mesh.nodes
    g0 = M.metric_values(nodes)
    ginv0 = np.linalg.inv(g0)
    vol = np.sqrt(np.linalg.det(g0))
    tr = np.einsum("pij,pij->p", ginv0, var.values(nodes))
    c = float(np.sum(mesh.weights * tr * vol) / (M.dim * np.sum(mesh.weights * vol)))
    base = var.omega

    def omega(x):
        return jets.as_tensor(base(x), x) - metric_jet(M, x) * c

    return MetricVariation(omega, var.t_max, f"{var.label}'", var.seed)


def trace_integral(var: MetricVariation, M: ChartedManifold, mesh: QuadratureMesh) -> float:
    """int <g, omega> v_g."""
    g0 = M.metric_values(mesh.nodes)
    tr = np.einsum("pij,pij->p", np.linalg.inv(g0), var.values(mesh.nodes))
    return float(np.sum(mesh.weights * tr * np.sqrt(np.linalg.det(g0))))


# ------------------------------------------------------------- lambda g law
def lambda_g_residual(phi: SmoothMap, mesh: QuadratureMesh | None = None) -> tuple[float, float]:
    """L^2 best constant lambda with S_2 ~ lambda g, and ||S_2 - lambda g||_{L^2}."""
    mesh = _require_mesh(phi, mesh)
    m = phi.source.dim
    vol = integrate_map(phi, mesh, lambda c: np.ones(c.X.batch), 0)
    tr = integrate_map(phi, mesh, lambda c: np.einsum("pij,pij->p", c.ginv0, c.S2.value), 3)
    lam = tr / (m * vol)
    sq = integrate_map(phi, mesh, lambda c: form_norm(c.S2.value - lam * c.g0, c.ginv0) ** 2, 3)
    return lam, float(np.sqrt(max(sq, 0.0)))


def lambda_g_pointwise(phi: SmoothMap, points) -> np.ndarray:
    """||S_2 - ((4-m)/2m)|tau|^2 g|| at each point (Riemannian immersions)."""
    pts, single = as_points(points, phi.source.dim)
    c = PullbackConnectionContext.at(phi, pts, 3)
    m = c.m
    lam = (4.0 - m) / (2.0 * m) * c.tau_norm2.value
    res = form_norm(c.S2.value - lam[:, None, None] * c.g0, c.ginv0)
    return res[0] if single else res


# ---------------------------------------------------------------- homothety
def homothety_relative_error(phi: SmoothMap, t: float, mesh: QuadratureMesh | None = None) -> tuple[float, float, float]:
    """(F((1+t) g), (1+t)^{(m-4)/2} F(g), relative error)."""
    mesh = _require_mesh(phi, mesh)
    if t <= -1:
        raise StepTooLargeError("1 + t must be positive")
    M = phi.source
    m = M.dim
    F0 = bienergy(phi, mesh)
    scaled = M.with_metric(lambda x: metric_jet(M, x) * (1.0 + t), name=f"{M.name}*{1 + t:g}")
    Ft = bienergy(phi, mesh, scaled)
    expect = (1.0 + t) ** ((m - 4) / 2.0) * F0
    err = abs(Ft - expect) / max(abs(expect), 1e-300)
    return Ft, expect, err


# ------------------------------------------------------------- trace check
def global_trace_check(phi: SmoothMap, mesh: QuadratureMesh | None = None) -> tuple[float, float, float]:
    """int trace S_2 v_g directly and as ((4-m)/2) int |tau|^2 v_g; relative gap."""
    mesh = _require_mesh(phi, mesh)
    m = phi.source.dim
    direct = integrate_map(phi, mesh, lambda c: np.einsum("pij,pij->p", c.ginv0, c.S2.value), 3)
    via = 0.5 * (4 - m) * integrate_map(phi, mesh, lambda c: c.tau_norm2.value, 2)
    gap = abs(direct - via) / (abs(via) + 1e-12)
    return direct, via, gap


# ------------------------------------------------------------------ reports
@dataclass
class VariationReport:
    F_at_g: float
    dF_fd: float
    dF_s2: float
    relative_gap: float
    xi_check: Optional[float] = None
    label: str = ""
    seed: Optional[int] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "F_at_g": self.F_at_g,
            "dF_fd": self.dF_fd,
            "dF_s2": self.dF_s2,
            "relative_gap": self.relative_gap,
            "xi_check": self.xi_check,
            "label": self.label,
            "seed": self.seed,
        }


def variation_report(phi: SmoothMap, var: MetricVariation, mesh: QuadratureMesh | None = None,
                     h_step: float = FD_STEP, xi_points=None) -> VariationReport:
    mesh = _require_mesh(phi, mesh)
    F0 = bienergy(phi, mesh)
    fd = first_variation_fd(phi, var, mesh, h_step)
    s2 = first_variation_s2(phi, var, mesh)
    gap = abs(fd - s2) / (abs(s2) + 1e-12)
    xi = None
    if xi_points is not None:
        xi = float(np.max(xi_identity_residual(phi, var, xi_points)))
    return VariationReport(F0, fd, s2, gap, xi, var.label, var.seed)
