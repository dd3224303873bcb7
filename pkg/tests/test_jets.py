import json
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bistress import jets
from bistress.jets import DomainError, Jet, UnsupportedOrderError, jeinsum
from bistress.geometry import jet_eval

HERE = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(HERE, "data", "jet_oracle.json")) as fh:
    ORACLE = json.load(fh)

NS = {"exp": jets.exp, "log": jets.log, "sin": jets.sin, "cos": jets.cos, "sqrt": jets.sqrt}


def fixture_jet(expr, point, order=4):
    X = jets.variables(np.asarray(point)[None, :], order)
    ns = dict(NS)
    ns.update({f"x{i}": X[i] for i in range(len(point))})
    return eval(expr, {"__builtins__": {}}, ns)


@pytest.mark.parametrize("case", ORACLE, ids=[c["expr"] for c in ORACLE])
def test_fixture_partials_match_symbolic_oracle(case):
    J = fixture_jet(case["expr"], case["point"])
    got = J.partials
    for key, want in case["partials"].items():
        mi = tuple(int(a) for a in key.split(","))
        assert abs(got[mi] - want) <= 1e-12 * max(1.0, abs(want)), (mi, got[mi], want)


def test_polynomial_mixed_partial():
    J = jet_eval(lambda x: x[0] ** 2 * x[1], (1.0, 1.0), 3)
    assert J.partial((2, 1)) == pytest.approx(2.0, abs=1e-14)


def test_exp_fourth_partial():
    J = jet_eval(lambda x: jets.exp(2 * x[0]), (0.0,), 4)
    assert J.partial((4,)) == pytest.approx(16.0, rel=1e-14)


def test_sphere_metric_component_second_partial():
    J = jet_eval(lambda x: jets.sin(x[0]) ** 2, (math.pi / 2, 0.0), 2)
    assert J.partial((2, 0)) == pytest.approx(-2.0, rel=1e-14)


def test_order_cap_enforced():
    with pytest.raises(UnsupportedOrderError):
        jet_eval(lambda x: x[0], (0.0,), 5)
    with pytest.raises(UnsupportedOrderError):
        jets.variables([[0.0]], 1).diff(0).diff(0)


def test_domain_errors():
    with pytest.raises(DomainError):
        jet_eval(lambda x: jets.log(x[0]), (-1.0,), 2)
    with pytest.raises(DomainError):
        jet_eval(lambda x: jets.sqrt(x[0]), (-0.5,), 2)


def test_inverse_matches_pointwise_derivatives():
    X = jets.variables([[0.3, -0.2]], 3)
    G = jets.as_tensor([[2 + X[0] ** 2, X[0] * X[1]], [X[0] * X[1], 1 + jets.exp(X[1])]], X)
    I = jeinsum("ik,kj->ij", G, jets.inverse(G))
    eye = np.zeros_like(I.coef)
    eye[0, :, :, 0] = np.eye(2)
    np.testing.assert_allclose(I.coef, eye, atol=1e-13)


def test_compose_matches_direct():
    X = jets.variables([[0.4, 0.1]], 4)
    inner = jets.as_tensor([jets.sin(X[0]) + X[1], X[0] * X[1]], X)
    y0 = inner.value
    Y = jets.variables(y0, 4)
    outer = jets.exp(Y[0]) * Y[1] + Y[0] ** 3
    delta = inner - y0
    direct = jets.exp(inner[0]) * inner[1] + inner[0] ** 3
    np.testing.assert_allclose(jets.compose(outer, delta).coef, direct.coef, rtol=1e-13, atol=1e-14)


def fd4(f, x, i, h=1e-3):
    e = np.zeros_like(x)
    e[i] = h
    return (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)


def test_gradient_matches_fourth_order_differences():
    case = ORACLE[10]
    p = np.array(case["point"])

    def f(x):
        return fixture_jet(case["expr"], x, 0).value[0]

    J = fixture_jet(case["expr"], p, 1)
    for i in range(len(p)):
        mi = [0] * len(p)
        mi[i] = 1
        assert J.partial(mi) == pytest.approx(fd4(f, p, i), rel=1e-6)


reals = st.floats(-1.5, 1.5, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(reals, reals, st.integers(0, 4))
def test_leibniz_rule(a, b, order):
    X = jets.variables([[a, b]], order)
    f = jets.sin(X[0]) + X[1] ** 2
    g = jets.exp(X[0] * X[1])
    if order == 0:
        return
    lhs = (f * g).diff(0)
    rhs = f.diff(0) * g.truncate(order - 1) + f.truncate(order - 1) * g.diff(0)
    np.testing.assert_allclose(lhs.coef, rhs.coef, rtol=1e-11, atol=1e-11)


@settings(max_examples=40, deadline=None)
@given(reals, st.integers(1, 4))
def test_chain_rule(a, order):
    X = jets.variables([[a]], order)
    u = X[0] ** 2 + 1
    lhs = jets.log(u).diff(0)
    rhs = u.diff(0) / u.truncate(order - 1)
    np.testing.assert_allclose(lhs.coef, rhs.coef, rtol=1e-11, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(reals, min_size=3, max_size=3))
def test_jeinsum_matches_pairwise_products(v):
    X = jets.variables([v], 2)
    A = jets.as_tensor([[X[0], X[1]], [X[2], X[0] * X[2]]], X)
    B = jets.as_tensor([X[1], jets.cos(X[0])], X)
    out = jeinsum("ij,j->i", A, B)
    want0 = A[0, 0] * B[0] + A[0, 1] * B[1]
    want1 = A[1, 0] * B[0] + A[1, 1] * B[1]
    np.testing.assert_allclose(out[0].coef, want0.coef, atol=1e-13)
    np.testing.assert_allclose(out[1].coef, want1.coef, atol=1e-13)


def test_jet_shape_validation():
    with pytest.raises(ValueError):
        Jet(np.zeros((1, 5)), 2, 2)
