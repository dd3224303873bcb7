"""Tension, bitension and stress-energy tensors of charted maps.

Everything is evaluated from jets centred at the sample points: the map and
the source metric are expanded in source coordinates, the target metric in
target coordinates at phi(p), and target quantities are pulled back by
substituting the Taylor expansion of phi.  Each covariant derivative costs
one jet order, so a context of order K yields

    tau, nabla d phi      order K-2
    nabla tau, S_2        order K-3
    tau_2, Div S_2, nabla S_2   order K-4
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from . import jets
from .geometry import (
    ChartedManifold,
    GeometryError,
    SmoothMap,
    TensorValue,
    as_points,
    check_metric,
    christoffel_from_metric,
    covariant_derivative_1form,
    covariant_derivative_2form,
    divergence_2form,
    divergence_vector,
    metric_jet,
    riemann_from_christoffel,
)
from .jets import MAX_ORDER, Jet, UnsupportedOrderError, jeinsum

ISOMETRY_TOL = 1e-8


class NotAnIsometryError(GeometryError):
    pass


class DimensionError(GeometryError, ValueError):
    pass


class PullbackConnectionContext:
    """Cached jets of phi, g and h along phi around a batch of points."""

    def __init__(self, phi: SmoothMap, X: Jet):
        if X.shape != (phi.source.dim,):
            raise ValueError("coordinate jets do not match the source dimension")
        self.map = phi
        self.X = X
        self.order = X.order
        self.m = phi.source.dim

    @classmethod
    def at(cls, phi: SmoothMap, points, order: int = MAX_ORDER) -> "PullbackConnectionContext":
        pts, _ = as_points(points, phi.source.dim)
        return cls(phi, jets.variables(pts, order))

    @property
    def points(self) -> np.ndarray:
        return self.X.value

    def _need(self, loss: int, what: str):
        if self.order < loss:
            raise UnsupportedOrderError(f"{what} needs jets of order {loss}, context has {self.order}")

    # ------------------------------------------------------------ source
    @cached_property
    def phi(self) -> Jet:
        out = jets.as_tensor(self.map.components(self.X), self.X)
        self.n = out.shape[0]
        if out.shape != (self.map.target.dim,):
            raise ValueError("map components do not match the target dimension")
        return out

    @cached_property
    def g(self) -> Jet:
        g = metric_jet(self.map.source, self.X)
        check_metric(g.value)
        return g

    @cached_property
    def g0(self) -> np.ndarray:
        return self.g.value

    @cached_property
    def ginv(self) -> Jet:
        # everything downstream of g^{-1} and Gamma needs at most order K-2
        return jets.inverse(self.g.truncate(max(self.order - 2, 0)))

    @cached_property
    def ginv0(self) -> np.ndarray:
        return np.linalg.inv(self.g0)

    @cached_property
    def gamma(self) -> Jet:
        self._need(1, "Christoffel symbols")
        return christoffel_from_metric(self.g.truncate(self.order - 1), self.ginv)

    # ------------------------------------------------------------ target
    @cached_property
    def y0(self) -> np.ndarray:
        return self.phi.value

    @cached_property
    def _target_jets(self):
        T = self.map.target
        # Gamma^N along phi needs order K-2, the curvature term needs order 1
        ky = max(self.order - 1, 2 if self.order >= 4 else 1)
        Y = jets.variables(self.y0, ky)
        hy = metric_jet(T, Y)
        check_metric(hy.value)
        hyinv = jets.inverse(hy.truncate(ky - 1))
        return hy, christoffel_from_metric(hy, hyinv)

    @cached_property
    def _comp_order(self) -> int:
        return max(self.order - 2, 0)

    @cached_property
    def _powers(self) -> np.ndarray:
        k = self._comp_order
        delta = self.phi.truncate(k) - self.y0
        return jets.monomial_powers(delta, k)

    def _pull(self, fy: Jet) -> Jet:
        k = self._comp_order
        delta = self.phi.truncate(k) - self.y0
        return jets.compose(fy, delta, k, self._powers)

    @cached_property
    def h(self) -> Jet:
        """Target metric along phi, order K-2."""
        if self.map.target.flat:
            h0 = self.map.target.metric_values(self.y0)
            return jets.constant(h0, self.m, self._comp_order, self.X.batch)
        return self._pull(self._target_jets[0])

    @cached_property
    def h0(self) -> np.ndarray:
        return self.h.value

    @cached_property
    def target_gamma(self) -> Jet:
        n = self.map.target.dim
        if self.map.target.flat:
            return jets.constant(np.zeros((n, n, n)), self.m, self._comp_order, self.X.batch)
        return self._pull(self._target_jets[1])

    @cached_property
    def target_riemann(self) -> np.ndarray:
        """R^a_{s b c} of the target at phi(p)."""
        n = self.map.target.dim
        if self.map.target.flat:
            return np.zeros((self.X.batch, n, n, n, n))
        return riemann_from_christoffel(self._target_jets[1]).value

    # ------------------------------------------------------- map tensors
    @cached_property
    def dphi(self) -> Jet:
        """d phi, axes (alpha, i)."""
        self._need(1, "d phi")
        return self.phi.grad()

    @cached_property
    def pullback_metric(self) -> Jet:
        return jeinsum("ab,ai,bj->ij", self.h, self.dphi, self.dphi)

    @cached_property
    def hessian(self) -> Jet:
        """Second fundamental form nabla d phi, axes (alpha, i, j)."""
        self._need(2, "nabla d phi")
        d2 = self.dphi.grad()
        return (
            d2
            - jeinsum("kij,ak->aij", self.gamma, self.dphi)
            + jeinsum("abs,bi,sj->aij", self.target_gamma, self.dphi, self.dphi)
        )

    @cached_property
    def tau(self) -> Jet:
        return jeinsum("ij,aij->a", self.ginv, self.hessian)

    def nabla_section(self, V: Jet) -> Jet:
        """Pullback covariant derivative of a section V^alpha, axes (alpha, i)."""
        return V.grad() + jeinsum("abs,bi,s->ai", self.target_gamma, self.dphi, V)

    @cached_property
    def nabla_tau(self) -> Jet:
        self._need(3, "nabla tau")
        return self.nabla_section(self.tau)

    @cached_property
    def nabla2_tau(self) -> Jet:
        """(nabla^2 tau)(X_j, X_i), axes (alpha, i, j)."""
        self._need(4, "nabla^2 tau")
        nt = self.nabla_tau
        return (
            nt.grad()
            - jeinsum("kji,ak->aij", self.gamma, nt)
            + jeinsum("abs,bj,si->aij", self.target_gamma, self.dphi, nt)
        )

    @cached_property
    def rough_laplacian_trace(self) -> np.ndarray:
        """trace nabla^2 tau = -Delta tau (geometer's sign)."""
        return np.einsum("pij,paij->pa", self.ginv0, self.nabla2_tau.value)

    @cached_property
    def curvature_term(self) -> np.ndarray:
        """trace R^N(d phi, tau) d phi."""
        self._need(4, "curvature term")
        dp = self.dphi.value
        t = self.tau.value
        return np.einsum("pij,pasbc,pbi,pc,psj->pa", self.ginv0, self.target_riemann, dp, t, dp)

    @cached_property
    def tau2(self) -> np.ndarray:
        return self.rough_laplacian_trace - self.curvature_term

    @cached_property
    def tau_norm2(self) -> Jet:
        return jeinsum("ab,a,b->", self.h, self.tau, self.tau)

    @cached_property
    def dphi_nabla_tau(self) -> Jet:
        """A_ij = <d phi(X_i), nabla_j tau>."""
        return jeinsum("ab,ai,bj->ij", self.h, self.dphi, self.nabla_tau)

    @cached_property
    def dphi_dot_nabla_tau(self) -> Jet:
        """<d phi, nabla tau>."""
        return jeinsum("ij,ij->", self.ginv, self.dphi_nabla_tau)

    @cached_property
    def T1(self) -> Jet:
        return self.g * (self.tau_norm2 * 0.5 + self.dphi_dot_nabla_tau)

    @cached_property
    def T2(self) -> Jet:
        A = self.dphi_nabla_tau
        return -(A + A.transpose(1, 0))

    @cached_property
    def S2(self) -> Jet:
        return self.T1 + self.T2

    @cached_property
    def div_S2(self) -> Jet:
        self._need(4, "Div S_2")
        return divergence_2form(self.S2, self.ginv, self.gamma)

    @cached_property
    def nabla_S2(self) -> Jet:
        """(nabla_k S_2)_ij reordered to axes (k, i, j)."""
        self._need(4, "nabla S_2")
        return covariant_derivative_2form(self.S2, self.gamma).transpose(2, 0, 1)

    @cached_property
    def energy_density2(self) -> Jet:
        """|d phi|^2."""
        return jeinsum("ij,ij->", self.ginv, self.pullback_metric)

    @cached_property
    def S(self) -> Jet:
        return self.g * (self.energy_density2 * 0.5) - self.pullback_metric

    @cached_property
    def div_S(self) -> Jet:
        self._need(3, "Div S")
        return divergence_2form(self.S, self.ginv, self.gamma)

    @cached_property
    def dphi_tau(self) -> Jet:
        """The one-form X -> <d phi(X), tau>."""
        return jeinsum("ab,ai,b->i", self.h, self.dphi, self.tau)


# ------------------------------------------------------------ value types
@dataclass
class BiStressTensor:
    S2: TensorValue
    T1: TensorValue
    T2: TensorValue


@dataclass
class ImmersionGeometry:
    B: TensorValue
    H: TensorValue
    A_H: TensorValue
    normal_projector: TensorValue
    tau_norm2: np.ndarray

    def pseudo_umbilical_residual(self) -> np.ndarray:
        """Frobenius norm of A_tau - (|tau|^2/m) I (A is g-self-adjoint)."""
        A = np.asarray(self.A_H.components)
        m = A.shape[-1]
        A_tau = m * A
        E = A_tau - (self.tau_norm2 / m)[..., None, None] * np.eye(m)
        return np.sqrt(np.abs(np.einsum("...ij,...ji->...", E, E)))


# -------------------------------------------------------------- norms
def target_norm(v: np.ndarray, h0: np.ndarray) -> np.ndarray:
    return np.sqrt(np.abs(np.einsum("...ab,...a,...b->...", h0, v, v)))


def form_norm(T: np.ndarray, ginv0: np.ndarray) -> np.ndarray:
    """g-norm of a covariant tensor, trailing axes are source slots."""
    T = np.asarray(T)
    nslots = T.ndim - (ginv0.ndim - 2)
    cur = T
    for s in range(nslots):
        cur = _raise_axis(cur, ginv0, T.ndim - nslots + s)
    val = np.sum((cur * T).reshape(T.shape[: T.ndim - nslots] + (-1,)), axis=-1)
    return np.sqrt(np.abs(val))


def _raise_axis(T, ginv0, axis):
    moved = np.moveaxis(T, axis, -1)
    extra = moved.ndim - ginv0.ndim + 1
    gi = ginv0.reshape(ginv0.shape[:-2] + (1,) * extra + ginv0.shape[-2:])
    raised = np.einsum("...ij,...j->...i", gi, moved)
    return np.moveaxis(raised, -1, axis)


# ------------------------------------------------------------- helpers
def _ctx(phi: SmoothMap, p, order: int = MAX_ORDER):
    pts, single = as_points(p, phi.source.dim)
    return PullbackConnectionContext.at(phi, pts, order), pts, single


def _o(arr, single):
    return arr[0] if single else arr


def _tv(arr, valence, pts, single):
    return TensorValue(_o(arr, single), valence, _o(pts, single))


def s2_field(phi: SmoothMap) -> Callable:
    """S_2 as a field callable on coordinate jets."""
    return lambda X: PullbackConnectionContext(phi, X).S2


# ------------------------------------------------------------ operations
def tension(phi: SmoothMap, p) -> TensorValue:
    c, pts, single = _ctx(phi, p, 2)
    return _tv(c.tau.value, ("target",), pts, single)


def bitension(phi: SmoothMap, p) -> TensorValue:
    c, pts, single = _ctx(phi, p, 4)
    return _tv(c.tau2, ("target",), pts, single)


def stress_energy_harmonic(phi: SmoothMap, p) -> TensorValue:
    c, pts, single = _ctx(phi, p, 2)
    return _tv(c.S.value, ("down", "down"), pts, single)


def divergence_stress_energy_harmonic(phi: SmoothMap, p) -> TensorValue:
    c, pts, single = _ctx(phi, p, 3)
    return _tv(c.div_S.value, ("down",), pts, single)


def stress_energy_bienergy(phi: SmoothMap, p) -> BiStressTensor:
    c, pts, single = _ctx(phi, p, 3)
    return BiStressTensor(
        S2=_tv(c.S2.value, ("down", "down"), pts, single),
        T1=_tv(c.T1.value, ("down", "down"), pts, single),
        T2=_tv(c.T2.value, ("down", "down"), pts, single),
    )


def divergence_2tensor(M: ChartedManifold, S: Callable, p, order: int = MAX_ORDER) -> TensorValue:
    """(Div S)(Y) = sum_i (nabla_{X_i} S)(X_i, Y) for a field callable S."""
    pts, single = as_points(p, M.dim)
    X = jets.variables(pts, order)
    g = metric_jet(M, X)
    check_metric(g.value)
    ginv = jets.inverse(g.truncate(order - 1))
    G = christoffel_from_metric(g, ginv)
    sigma = jets.as_tensor(S(X), X)
    if sigma.order < 1:
        raise UnsupportedOrderError("tensor field jet too short to differentiate")
    return _tv(divergence_2form(sigma, ginv, G).value, ("down",), pts, single)


def nabla_S2(phi: SmoothMap, p) -> TensorValue:
    c, pts, single = _ctx(phi, p, 4)
    return _tv(c.nabla_S2.value, ("down", "down", "down"), pts, single)


def immersion_geometry(phi: SmoothMap, p, tol: float = ISOMETRY_TOL) -> ImmersionGeometry:
    c, pts, single = _ctx(phi, p, 2)
    mismatch = np.max(np.abs(c.pullback_metric.value - c.g0))
    if mismatch > tol:
        raise NotAnIsometryError(f"pullback metric differs from the source metric by {mismatch:.3e}")
    return _immersion_geometry(c, pts, single)


def _immersion_geometry(c: PullbackConnectionContext, pts, single) -> ImmersionGeometry:
    m = c.m
    B = c.hessian.value
    H = c.tau.value / m
    A_H = np.einsum("pik,pab,pakj,pb->pij", c.ginv0, c.h0, B, H)
    dp = c.dphi.value
    n = dp.shape[1]
    proj = np.eye(n) - np.einsum("pai,pij,pcj,pcb->pab", dp, c.ginv0, dp, c.h0)
    return ImmersionGeometry(
        B=_tv(B, ("target", "down", "down"), pts, single),
        H=_tv(H, ("target",), pts, single),
        A_H=_tv(A_H, ("up", "down"), pts, single),
        normal_projector=_tv(proj, ("target", "target"), pts, single),
        tau_norm2=_o(c.tau_norm2.value, single),
    )


def divergence_identity_residual(phi: SmoothMap, p, Y) -> np.ndarray:
    """|Div S_2(Y) + <tau_2, d phi(Y)>| at each point."""
    c, pts, single = _ctx(phi, p, 4)
    Y = np.broadcast_to(np.asarray(Y, dtype=float), pts.shape)
    lhs = np.einsum("pj,pj->p", c.div_S2.value, Y)
    rhs = np.einsum("pab,pa,pbj,pj->p", c.h0, c.tau2, c.dphi.value, Y)
    return _o(np.abs(lhs + rhs), single)


def contraction_div_identity(M: ChartedManifold, theta: Callable, sigma: Callable, p, order: int = MAX_ORDER):
    """Residual of <theta, Div sigma> - Div(C(theta, sigma)^#) + <sym nabla theta, sigma>."""
    pts, single = as_points(p, M.dim)
    X = jets.variables(pts, order)
    g = metric_jet(M, X)
    check_metric(g.value)
    ginv = jets.inverse(g.truncate(order - 1))
    G = christoffel_from_metric(g, ginv)
    th = jets.as_tensor(theta(X), X)
    sg = jets.as_tensor(sigma(X), X)
    div_sigma = divergence_2form(sg, ginv, G)
    lhs = jeinsum("ij,i,j->", ginv, th, div_sigma)
    V = jeinsum("lj,ik,k,ij->l", ginv, ginv, th, sg)
    divV = divergence_vector(V, G)
    nth = covariant_derivative_1form(th, G)
    sym = (nth + nth.transpose(1, 0)) * 0.5
    pair = jeinsum("ia,jb,ij,ab->", ginv, ginv, sym, sg)
    return _o(np.abs(lhs.value - divV.value + pair.value), single)


def div_contraction(M: ChartedManifold, theta: Callable, sigma: Callable, p, order: int = MAX_ORDER):
    """Div(C(theta, sigma)^#) where C(theta, sigma)_j = theta^i sigma_ij."""
    pts, single = as_points(p, M.dim)
    X = jets.variables(pts, order)
    g = metric_jet(M, X)
    ginv = jets.inverse(g.truncate(order - 1))
    G = christoffel_from_metric(g, ginv)
    th = jets.as_tensor(theta(X), X)
    sg = jets.as_tensor(sigma(X), X)
    V = jeinsum("lj,ik,k,ij->l", ginv, ginv, th, sg)
    return _o(divergence_vector(V, G).value, single)


def divergence_sharp_identity(phi: SmoothMap, p) -> np.ndarray:
    """Residual of Div (d phi . tau)^# - |tau|^2 - <d phi, nabla tau>."""
    c, pts, single = _ctx(phi, p, 3)
    V = jeinsum("ij,j->i", c.ginv, c.dphi_tau)
    divV = divergence_vector(V, c.gamma)
    res = divV.value - c.tau_norm2.value - c.dphi_dot_nabla_tau.value
    return _o(np.abs(res), single)


def trace_identity_residual(phi: SmoothMap, p) -> np.ndarray:
    """trace S_2 - ((m/2)|tau|^2 + (m-2)<d phi, nabla tau>)."""
    c, pts, single = _ctx(phi, p, 3)
    m = c.m
    tr = np.einsum("pij,pij->p", c.ginv0, c.S2.value)
    expect = 0.5 * m * c.tau_norm2.value + (m - 2) * c.dphi_dot_nabla_tau.value
    return _o(np.abs(tr - expect), single)


def equivalent_form(phi: SmoothMap, p) -> TensorValue:
    """|tau|^2/(m-2) g + <nabla_X tau, d phi(Y)> + <nabla_Y tau, d phi(X)>."""
    c, pts, single = _ctx(phi, p, 3)
    m = c.m
    if m == 2:
        raise DimensionError("the equivalent form of S_2 = 0 needs m != 2")
    A = c.dphi_nabla_tau.value
    E = c.tau_norm2.value[:, None, None] / (m - 2) * c.g0 + A + np.swapaxes(A, 1, 2)
    return _tv(E, ("down", "down"), pts, single)


def conformal_immersion_relation(phi_bar: SmoothMap, rho: Callable, p) -> np.ndarray:
    """Max residual of the conformal change formula for S_2 on a 4-manifold.

    ``phi_bar`` is a Riemannian immersion of (M, gbar); ``phi`` is the same
    map on (M, e^{2 rho} gbar).
    """
    M = phi_bar.source
    if M.dim != 4:
        raise DimensionError("the conformal immersion formula is stated for 4-dimensional domains")
    pts, single = as_points(p, M.dim)

    def conformal_metric(x):
        return jets.as_tensor(M.metric(x), x) * jets.exp(2.0 * rho(x))

    phi = SmoothMap(M.with_metric(conformal_metric, name=f"{M.name}_conformal"), phi_bar.target,
                    phi_bar.components, "generic")
    cb = PullbackConnectionContext.at(phi_bar, pts, 4)
    c = PullbackConnectionContext(phi, cb.X)

    r = jets.as_tensor(rho(cb.X), cb.X)
    dr = r.grad()
    hess = covariant_derivative_1form(dr, cb.gamma).value  # Hess_gbar rho
    dr0 = dr.value
    gb0, gbinv0 = cb.g0, cb.ginv0
    grad2 = np.einsum("pij,pi,pj->p", gbinv0, dr0, dr0)
    lap = -np.einsum("pij,pij->p", gbinv0, hess)
    rhs = (
        cb.S2.value
        - 2.0 * (grad2 + lap)[:, None, None] * gb0
        + 8.0 * np.einsum("pi,pj->pij", dr0, dr0)
        - 4.0 * 0.5 * (hess + np.swapaxes(hess, 1, 2))
    )
    lhs = np.exp(2.0 * r.value)[:, None, None] * c.S2.value
    res = np.max(np.abs(lhs - rhs), axis=(1, 2))
    return _o(res, single)


def tangent_bitension(phi: SmoothMap, p, tol: float = ISOMETRY_TOL) -> TensorValue:
    """-m(-(m/2) grad |H|^2 + 2 trace (nabla A_H)(.,.)) as a source vector."""
    c, pts, single = _ctx(phi, p, 4)
    mismatch = np.max(np.abs(c.pullback_metric.value - c.g0))
    if mismatch > tol:
        raise NotAnIsometryError(f"pullback metric differs from the source metric by {mismatch:.3e}")
    m = c.m
    H = c.tau * (1.0 / m)
    A = jeinsum("ik,ab,akj,b->ij", c.ginv, c.h, c.hessian, H)
    dA = A.grad()  # [i, j, k] = d_k A^i_j
    nA = dA + jeinsum("ikl,lj->ijk", c.gamma, A) - jeinsum("lkj,il->ijk", c.gamma, A)
    tr_nA = np.einsum("pkj,pijk->pi", c.ginv0, nA.value)
    H2 = jeinsum("ab,a,b->", c.h, H, H)
    grad_H2 = np.einsum("pij,pj->pi", c.ginv0, H2.grad().value)
    out = -m * (-(m / 2.0) * grad_H2 + 2.0 * tr_nA)
    return _tv(out, ("up",), pts, single)


def tangent_projection_of_bitension(phi: SmoothMap, p) -> TensorValue:
    """Source vector X with d phi(X) = tangent part of tau_2."""
    c, pts, single = _ctx(phi, p, 4)
    X = np.einsum("pij,pab,paj,pb->pi", c.ginv0, c.h0, c.dphi.value, c.tau2)
    return _tv(X, ("up",), pts, single)
