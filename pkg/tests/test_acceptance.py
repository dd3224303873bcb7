"""Acceptance suite: one test per criterion, at the stated tolerances.

A summary line per criterion is printed at the end of the pytest run.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from bistress import catalog as cat
from bistress import jets
from bistress import variations as var
from bistress.fields import PullbackConnectionContext, form_norm, target_norm, tension
from bistress.geometry import christoffel, metric_jet

INV_SQRT2 = 1 / math.sqrt(2)
HERE = os.path.dirname(os.path.abspath(__file__))

ENTRIES = [
    "cubic_curve",
    "circle_arclength",
    "warped_projection",
    "conformal_identity_a",
    "conformal_identity_b",
    "hypersphere",
    "clifford_torus",
    "minimal_in_umbilical",
    "horizontally_conformal",
]


def ctx(name, order, n=cat.SAMPLES, seed=0, **params):
    e = cat.build(name, **params)
    pts = cat.sample_points(e.source, n, seed)
    return PullbackConnectionContext.at(e.map, pts, order), pts


def test_criterion_01_divergence_identity():
    """Div S_2(Y) = -<tau_2, d phi(Y)> on every catalog entry, 50 random (p, Y) each, under 60 s"""
    t0 = time.perf_counter()
    worst = {}
    for k, name in enumerate(ENTRIES):
        e = cat.build(name)
        pts = cat.sample_points(e.source, 50, seed=100 + k)
        Y = np.random.default_rng(k).normal(size=pts.shape)
        c = PullbackConnectionContext.at(e.map, pts, 4)
        lhs = np.einsum("pj,pj->p", c.div_S2.value, Y)
        rhs = np.einsum("pab,pa,pbj,pj->p", c.h0, c.tau2, c.dphi.value, Y)
        bound = 1e-7 * (1 + target_norm(c.tau2, c.h0))
        worst[name] = float(np.max(np.abs(lhs + rhs) / bound))
    elapsed = time.perf_counter() - t0
    assert all(w < 1 for w in worst.values()), worst
    assert elapsed < 60, elapsed


def test_criterion_02_first_variation():
    """dF_fd matches -1/2 int <S_2, omega> on S^2(0.8) and a conformal flat torus, 10 omegas each, under 120 s"""
    t0 = time.perf_counter()
    gaps = []
    for name, params in (("hypersphere", {"m": 2, "a": 0.8}), ("conformal_torus", {"m": 3})):
        e = cat.build(name, **params)
        for seed in range(10):
            w = var.random_variation(e.source, 1000 + seed)
            fd = var.first_variation_fd(e.map, w, e.mesh)
            s2 = var.first_variation_s2(e.map, w, e.mesh)
            gaps.append(abs(fd - s2) / (abs(s2) + 1e-12))
    elapsed = time.perf_counter() - t0
    assert max(gaps) < 1e-3, gaps
    assert elapsed < 120, elapsed


def test_criterion_03_homothety():
    """F((1+t) g) = (1+t)^((m-4)/2) F(g) for m = 2..5 and t = +-0.1, +-0.01; invariant at m = 4"""
    for m in (2, 3, 4, 5):
        e = cat.build("hypersphere", m=m, a=0.8)
        F0 = var.bienergy(e.map, e.mesh)
        for t in (0.1, -0.1, 0.01, -0.01):
            Ft, expect, err = var.homothety_relative_error(e.map, t, e.mesh)
            assert err < 1e-8, (m, t, err)
            if m == 4:
                assert abs(Ft - F0) <= 1e-12 * F0


def test_criterion_04_biharmonic_spheres():
    """S^m(1/sqrt 2) in S^{m+1} is proper biharmonic for m = 2, 3, 4; S^m(0.6) is not"""
    for m in (2, 3, 4):
        c, _ = ctx("hypersphere", 4, m=m, a=INV_SQRT2)
        assert target_norm(c.tau2, c.h0).max() < 1e-8
        assert target_norm(c.tau.value, c.h0).min() > 0.5
        c, _ = ctx("hypersphere", 4, m=m, a=0.6)
        assert target_norm(c.tau2, c.h0).min() > 1e-2


def test_criterion_05_conformal_dichotomy():
    """conformal identity with affine rho: Div S_2 = 0 iff m = 4, closed form otherwise"""
    slope = 1.0
    for m in (3, 4, 5, 6):
        c, pts = ctx("conformal_identity_b", 4, m=m, slope=slope)
        d = c.div_S2.value
        norm = np.linalg.norm(d, axis=1)
        if m == 4:
            assert norm.max() < 1e-8
            continue
        # Z = d/dy_1, Z rho = c, rho = c y_1
        want = np.zeros_like(d)
        want[:, 0] = 2 * (2 - m) * (m - 4) * slope**2 * np.exp(4 * slope * pts[:, 0]) * slope
        rel = np.linalg.norm(d - want, axis=1) / np.linalg.norm(want, axis=1)
        assert rel.max() < 1e-6
        assert norm.min() > 1e-8


def test_criterion_06_pseudo_umbilical():
    """S^4(a) in S^5 has S_2 = 0 for a = 0.5, 0.7, 0.9; S^3(0.7) in S^4 does not"""
    for a in (0.5, 0.7, 0.9):
        c, _ = ctx("hypersphere", 3, m=4, a=a)
        assert form_norm(c.S2.value, c.ginv0).max() < 1e-9
    c, _ = ctx("hypersphere", 3, m=3, a=0.7)
    assert form_norm(c.S2.value, c.ginv0).min() > 1e-2


PARALLEL = [("hypersphere", {"m": m, "a": a}) for m in (2, 3, 4) for a in (0.6, INV_SQRT2, 0.9)] + [
    ("clifford_torus", p)
    for p in ({"m1": 1, "m2": 1, "a1": 0.6}, {"m1": 1, "m2": 2, "a1": 0.6}, {"m1": 2, "m2": 2, "a1": 0.5},
              {"m1": 1, "m2": 3, "a1": 0.8})
]


def test_criterion_07_parallel():
    """nabla S_2 = 0 and the tangent part of tau_2 vanishes on hyperspheres and Clifford tori"""
    for name, params in PARALLEL:
        c, _ = ctx(name, 4, n=50, **params)
        assert form_norm(c.nabla_S2.value, c.ginv0).max() < 1e-8, (name, params)
        X = np.einsum("pij,pab,paj,pb->pi", c.ginv0, c.h0, c.dphi.value, c.tau2)
        tang = np.sqrt(np.abs(np.einsum("pij,pi,pj->p", c.g0, X, X)))
        assert tang.max() < 1e-8, (name, params)


def test_criterion_08_lambda_g():
    """S_2 = ((4-m)/2m)|tau|^2 g on hyperspheres; not proportional to g on non-umbilical Clifford tori"""
    for m in (2, 3, 4, 5):
        for a in (0.6, 0.8):
            e = cat.build("hypersphere", m=m, a=a)
            res = var.lambda_g_pointwise(e.map, cat.sample_points(e.source, cat.SAMPLES, 1))
            assert res.max() < 1e-8, (m, a)
    e = cat.build("hypersphere", m=3, a=0.6)
    lam, l2 = var.lambda_g_residual(e.map, e.mesh)
    assert l2 < 1e-8
    assert lam == pytest.approx((4 - 3) / 6 * 9 * (1 - 0.36) / 0.36, rel=1e-10)
    for p in ({"m1": 1, "m2": 1, "a1": 0.6}, {"m1": 1, "m2": 2, "a1": 0.6}, {"m1": 2, "m2": 2, "a1": 0.6}):
        e = cat.build("clifford_torus", **p)
        res = var.lambda_g_pointwise(e.map, cat.sample_points(e.source, cat.SAMPLES, 1))
        assert res.min() > 1e-3, p
    e = cat.build("clifford_torus", m1=1, m2=1, a1=0.6)
    assert var.lambda_g_residual(e.map, e.mesh)[1] > 1e-3


# ---------------------------------------------------------------- jets
NS = {"exp": jets.exp, "log": jets.log, "sin": jets.sin, "cos": jets.cos, "sqrt": jets.sqrt}


def _fd_grad_hess(f, p, h=1e-3):
    """Fourth-order central differences of a vector-valued f: (grad, hessian)."""
    p = np.asarray(p, dtype=float)
    n = p.size
    f0 = np.asarray(f(p))
    c1 = np.array([1, -8, 0, 8, -1]) / 12.0
    c2 = np.array([-1, 16, -30, 16, -1]) / 12.0
    offs = np.arange(-2, 3)
    grad = np.zeros(f0.shape + (n,))
    hess = np.zeros(f0.shape + (n, n))
    for i in range(n):
        ei = np.eye(n)[i] * h
        vals = [np.asarray(f(p + o * ei)) for o in offs]
        grad[..., i] = sum(c * v for c, v in zip(c1, vals)) / h
        hess[..., i, i] = sum(c * v for c, v in zip(c2, vals)) / h**2
        for j in range(i + 1, n):
            ej = np.eye(n)[j] * h
            acc = 0
            for a, ca in zip(offs, c1):
                for b, cb in zip(offs, c1):
                    if ca and cb:
                        acc = acc + ca * cb * np.asarray(f(p + a * ei + b * ej))
            hess[..., i, j] = hess[..., j, i] = acc / h**2
    return grad, hess


def _jet_grad_hess(J):
    """First and second partials from an order-2 jet at one point."""
    d1 = J.grad()
    d2 = d1.grad()
    return d1.value[0], d2.value[0]


def _christoffel_fd(metric, p):
    ginv = np.linalg.inv(metric(p))
    dg, _ = _fd_grad_hess(metric, p)
    t = dg + np.transpose(dg, (0, 2, 1)) - np.transpose(dg, (2, 0, 1))
    return 0.5 * np.einsum("kl,lij->kij", ginv, t)


def _close(got, want, tol=1e-6):
    scale = max(1.0, float(np.abs(want).max()))
    return float(np.abs(got - want).max()) / scale < tol


def test_criterion_09_jet_engine():
    """jet partials to order 4 match closed forms on 20 fixtures; geometry matches 4th-order differences"""
    with open(os.path.join(HERE, "data", "jet_oracle.json")) as fh:
        oracle = json.load(fh)
    assert len(oracle) == 20
    for case in oracle:
        p = np.asarray(case["point"])
        X = jets.variables(p[None, :], 4)
        ns = dict(NS)
        ns.update({f"x{i}": X[i] for i in range(p.size)})
        got = eval(case["expr"], {"__builtins__": {}}, ns).partials
        for key, want in case["partials"].items():
            mi = tuple(int(a) for a in key.split(","))
            assert abs(got[mi] - want) <= 1e-12 * max(1.0, abs(want)), (case["expr"], mi)

    for name in cat.names():
        e = cat.build(name)
        phi, M, N = e.map, e.source, e.map.target
        for p in cat.sample_points(M, 3, seed=9):
            X = jets.variables(p[None, :], 2)
            comp = jets.as_tensor(phi.components(X), X)
            g = metric_jet(M, X)
            fmap = lambda q: phi.values(q[None, :])[0]
            fmet = lambda q: M.metric_values(q[None, :])[0]
            for J, f in ((comp, fmap), (g, fmet)):
                jg, jh = _jet_grad_hess(J)
                fg, fh = _fd_grad_hess(f, p)
                assert _close(jg, fg) and _close(jh, fh), name
            y = comp.value[0]
            Y = jets.variables(y[None, :], 2)
            jg, jh = _jet_grad_hess(metric_jet(N, Y))
            fg, fh = _fd_grad_hess(lambda q: N.metric_values(q[None, :])[0], y)
            assert _close(jg, fg) and _close(jh, fh), name

            # Christoffel symbols from the differenced metric, then the tension field
            gam_fd = _christoffel_fd(fmet, p)
            assert _close(christoffel(M, p).components, gam_fd), name
            gamN = _christoffel_fd(lambda q: N.metric_values(q[None, :])[0], y)
            dphi, ddphi = _fd_grad_hess(fmap, p)
            hess = ddphi - np.einsum("kij,ak->aij", gam_fd, dphi) + np.einsum("abc,bi,cj->aij", gamN, dphi, dphi)
            tau_fd = np.einsum("ij,aij->a", np.linalg.inv(fmet(p)), hess)
            assert _close(tension(phi, p).components, tau_fd), name


def test_criterion_10_full_verify():
    """bistress verify --suite all exits 0 in under 10 minutes"""
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "bistress.cli", "verify", "--suite", "all"],
                          capture_output=True, text=True, timeout=900)
    elapsed = time.perf_counter() - t0
    print(proc.stdout.splitlines()[-1] if proc.stdout else proc.stderr)
    assert proc.returncode == 0, proc.stdout[-2000:] + proc.stderr[-2000:]
    assert elapsed < 600, elapsed
