"""Verification suites: identity checks over catalog maps, as report records.

Every check produces a record with a residual and a tolerance and passes
iff residual < tolerance.  Checks of the form "value must exceed a bound"
report residual = bound / value against tolerance 1.
"""

from __future__ import annotations

import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, jets
from . import catalog as cat
from . import fields as fl
from . import variations as var
from .catalog import CITATIONS, TOL_NO, TOL_YES, build, sample_points
from .fields import PullbackConnectionContext, form_norm, target_norm

SCHEMA_VERSION = 1
SUITES = ("divergence", "variation", "classification", "parallel", "lambda_g")
VERDICTS = ("pass", "fail", "inconclusive")

TOLERANCES = {
    "divergence": 1e-7,
    "identity": 1e-8,
    "variation": 1e-3,
    "xi": 1e-5,
    "homothety": 1e-8,
    "trace": 1e-5,
    "isovolumetric": 1e-5,
    "biharmonic": 1e-8,
    "s2_zero": 1e-9,
    "parallel": 1e-8,
    "tangent": 1e-8,
    "lambda_g": 1e-8,
    "umbilical": 1e-9,
    "conformal": 1e-6,
    "zero": TOL_YES,
    "band": TOL_NO,
}

DEFAULTS = {
    "suite": "all",
    "entries": [],
    "resolution": None,
    "tolerances": {},
    "seed": 0,
    "format": "text",
    "samples": 50,
    "omegas": 10,
    "workers": 1,
}

CITE = {
    "divergence": "Div S_2(Y) = -<tau_2, d phi(Y)> for every map",
    "sharp": "Div (d phi . tau)^# = |tau|^2 + <d phi, nabla tau>",
    "trace": "trace S_2 = (m/2)|tau|^2 + (m-2)<d phi, nabla tau>",
    "contraction": "<theta, Div sigma> = Div(C(theta, sigma)^#) - <sym nabla theta, sigma>",
    "variation": "dF(g_t)/dt = -1/2 int <S_2, omega> v_g",
    "xi": "d/dt |tau_t|^2 = -2<tau . nabla d phi, omega> - 2<tau, d phi(xi)>",
    "homothety": "F((1+t) g) = (1+t)^{(m-4)/2} F(g)",
    "trace_integral": "int trace S_2 v_g = ((4-m)/2) int |tau|^2 v_g on compact domains",
    "isovolumetric": "S_2 = lambda g makes the map critical for volume-preserving variations",
    "iso_projection": "int <g, omega'> v_g = 0 after projection",
    "biharmonic": "S^m(a) in S^{m+1} is proper biharmonic iff a = 1/sqrt(2)",
    "nonharmonic": "the small hypersphere is not minimal",
    "conformal_b": "Div S_2(Z) = 2(2-m)(m-4) c^2 e^{4 rho} (Z rho) for the conformal identity",
    "pseudo_umbilical": "Riemannian immersion of M^4 has S_2 = 0 iff pseudo-umbilical",
    "umbilical": "hyperspheres are pseudo-umbilical: A_tau = (|tau|^2/m) I",
    "conformal_immersion": "e^{2 rho} S_2 = Sbar_2 - 2(|grad rho|^2 + Delta rho) gbar + 8 d rho (x) d rho - 4 Hess rho",
    "arclength": "arc-length curve: S_2(d/dt, d/dt) = (3/2)|tau|^2",
    "killing": "Killing basic tension of constant norm c gives S_2 = (c^2/2) g",
    "parallel": "umbilical and parallel hypersurfaces have nabla S_2 = 0",
    "tangent": "tangent part of tau_2 vanishes for parallel hypersurfaces",
    "tangent_formula": "(tau_2)^T = -m(-(m/2) grad |H|^2 + 2 trace (nabla A_H)(.,.))",
    "lambda_g": "pseudo-umbilical immersions have S_2 = ((4-m)/2m)|tau|^2 g",
    "not_lambda_g": "non-umbilical Clifford tori have S_2 not proportional to g",
}


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ records
@dataclass
class Record:
    id: str
    suite: str
    citation: str
    residual: float
    tolerance: float
    verdict: str
    detail: dict = field(default_factory=dict)


@dataclass
class RunReport:
    records: list
    config: dict
    engine_version: str = __version__
    wall_time: float = 0.0
    schema_version: int = SCHEMA_VERSION

    @property
    def counts(self) -> dict:
        out = {v: 0 for v in VERDICTS}
        for r in self.records:
            out[r.verdict] += 1
        return out

    @property
    def exit_code(self) -> int:
        c = self.counts
        if c["fail"]:
            return 1
        if c["inconclusive"]:
            return 3
        return 0

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "engine_version": self.engine_version,
            "config": self.config,
            "wall_time": self.wall_time,
            "summary": dict(self.counts, exit_code=self.exit_code),
            "records": [asdict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported report schema {d.get('schema_version')!r}")
        recs = [Record(**r) for r in d["records"]]
        return cls(recs, d["config"], d["engine_version"], d["wall_time"], d["schema_version"])

    def __eq__(self, other):
        return isinstance(other, RunReport) and self.to_dict() == other.to_dict()


def _verdict(residual: float, tol: float, band: bool = False) -> str:
    if residual < tol:
        return "pass"
    return "inconclusive" if band else "fail"


def upper(rid, suite, cite, value, tol, **detail) -> Record:
    """Pass iff value < tol."""
    value = float(value)
    if not math.isfinite(value):
        value = 1e300
    return Record(rid, suite, cite, value, float(tol), _verdict(value, tol), detail)


def lower(rid, suite, cite, value, bound, **detail) -> Record:
    """Pass iff value > bound, reported as bound/value < 1."""
    value = float(value)
    res = bound / value if value > 0 else 1e300
    return Record(rid, suite, cite, float(res), 1.0, _verdict(res, 1.0), dict(detail, value=value, bound=bound))


def label(name: str, params: dict) -> str:
    if not params:
        return name
    parts = ",".join(f"{k}={_fmt(v)}" for k, v in sorted(params.items()))
    return f"{name}[{parts}]"


def _fmt(v):
    if isinstance(v, (tuple, list)):
        return ":".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def task_seed(seed: int, key: str) -> int:
    return (zlib.crc32(key.encode()) ^ (seed * 2654435761)) & 0x7FFFFFFF


# ------------------------------------------------------------- check groups
def check_divergence(name, params, cfg) -> list:
    e = build(name, **params)
    lab = label(name, params)
    tol = cfg["tolerances"]
    seed = task_seed(cfg["seed"], "div" + lab)
    pts = sample_points(e.source, cfg["samples"], seed)
    Y = np.random.default_rng(seed).normal(size=pts.shape)
    c = PullbackConnectionContext.at(e.map, pts, 4)
    tau2 = c.tau2
    lhs = np.einsum("pj,pj->p", c.div_S2.value, Y)
    rhs = np.einsum("pab,pa,pbj,pj->p", c.h0, tau2, c.dphi.value, Y)
    scale = 1.0 + target_norm(tau2, c.h0)
    res = np.max(np.abs(lhs + rhs) / scale)
    out = [upper(f"divergence/{lab}", "divergence", CITE["divergence"], res, tol["divergence"], points=len(pts))]

    tn2 = c.tau_norm2.value
    dnt = c.dphi_dot_nabla_tau.value
    sharp = fl.divergence_sharp_identity(e.map, pts)
    out.append(upper(f"divergence_sharp/{lab}", "divergence", CITE["sharp"],
                     np.max(sharp / (1.0 + np.abs(tn2) + np.abs(dnt))), tol["identity"]))
    tr = fl.trace_identity_residual(e.map, pts)
    out.append(upper(f"trace_identity/{lab}", "divergence", CITE["trace"],
                     np.max(tr / (1.0 + np.abs(tn2) + np.abs(dnt))), tol["identity"]))
    phi = e.map
    theta = lambda X: PullbackConnectionContext(phi, X).dphi_tau
    cres = fl.contraction_div_identity(e.source, theta, fl.s2_field(phi), pts[:10])
    scale = 1.0 + np.max(form_norm(c.S2.value[:10], c.ginv0[:10])) * (1.0 + np.max(np.sqrt(np.abs(tn2))))
    out.append(upper(f"contraction/{lab}", "divergence", CITE["contraction"], np.max(cres) / scale, tol["identity"]))
    return out


def check_variation(name, params, cfg) -> list:
    e = build(name, resolution=cfg["resolution"], **params)
    lab = label(name, params)
    tol = cfg["tolerances"]
    out = []
    M = e.source
    mesh = e.mesh
    for k in range(cfg["omegas"]):
        s = task_seed(cfg["seed"], f"omega{k}{lab}")
        w = var.random_variation(M, s)
        fd = var.first_variation_fd(e.map, w, mesh)
        s2 = var.first_variation_s2(e.map, w, mesh)
        gap = abs(fd - s2) / (abs(s2) + 1e-12)
        out.append(upper(f"variation/{lab}/omega{k}", "variation", CITE["variation"], gap, tol["variation"],
                         dF_fd=fd, dF_s2=s2, seed=s))
        if k < 3:
            pts = sample_points(M, 5, s)
            xi = float(np.max(var.xi_identity_residual(e.map, w, pts)))
            out.append(upper(f"xi/{lab}/omega{k}", "variation", CITE["xi"], xi, tol["xi"], seed=s))
    direct, via, gap = var.global_trace_check(e.map, mesh)
    out.append(upper(f"trace_integral/{lab}", "variation", CITE["trace_integral"], gap, tol["trace"],
                     direct=direct, via=via))
    return out


def check_homothety(name, params, cfg) -> list:
    e = build(name, resolution=cfg["resolution"], **params)
    lab = label(name, params)
    out = []
    for t in (0.1, -0.1, 0.01, -0.01):
        Ft, expect, err = var.homothety_relative_error(e.map, t, e.mesh)
        out.append(upper(f"homothety/{lab}/t={t:+g}", "variation", CITE["homothety"], err,
                         cfg["tolerances"]["homothety"], F_t=Ft, expected=expect))
    return out


def check_isovolumetric(name, params, cfg) -> list:
    e = build(name, resolution=cfg["resolution"], **params)
    lab = label(name, params)
    tol = cfg["tolerances"]
    out = []
    M, mesh = e.source, e.mesh
    F0 = var.bienergy(e.map, mesh)
    for k in range(3):
        s = task_seed(cfg["seed"], f"iso{k}{lab}")
        w = var.random_variation(M, s)
        wp = var.isovolumetric_project(w, M, mesh)
        ti = abs(var.trace_integral(wp, M, mesh))
        out.append(upper(f"iso_projection/{lab}/omega{k}", "variation", CITE["iso_projection"], ti, 1e-10))
        dF = var.first_variation_fd(e.map, wp, mesh)
        scale = abs(var.first_variation_fd(e.map, w, mesh)) + F0
        out.append(upper(f"isovolumetric/{lab}/omega{k}", "variation", CITE["isovolumetric"], abs(dF) / scale,
                         tol["isovolumetric"], dF=dF, scale=scale, seed=s))
    return out


def check_classification(name, params, cfg) -> list:
    e = build(name, **params)
    lab = label(name, params)
    tol = cfg["tolerances"]
    seed = task_seed(cfg["seed"], "cls" + lab)
    r = cat.Residuals.compute(e.map, sample_points(e.source, cat.SAMPLES, seed))
    table = r.table()
    out = []
    zero, band = tol["zero"], tol["band"]
    for tag in cat.TAGS:
        val = table[tag]
        if tag == "proper_biharmonic":
            expect = "proper_biharmonic" in e.expected or "harmonic" in e.expected
        else:
            expect = tag in e.expected
        cite = CITATIONS[tag]
        short = "biharmonic" if tag == "proper_biharmonic" else tag
        rid = f"classify/{lab}/{short if expect else 'not_' + short}"
        in_band = zero <= val < band
        if expect:
            out.append(Record(rid, "classification", cite, val, zero, _verdict(val, zero, in_band), {}))
        else:
            res = band / val if val > 0 else 1e300
            out.append(Record(rid, "classification", cite, res, 1.0, _verdict(res, 1.0, in_band), {"value": val}))
    return out


def check_named_criteria(cfg) -> list:
    """Explicit statements about specific catalog maps."""
    tol = cfg["tolerances"]
    out = []
    S = cfg["seed"]
    for m in (2, 3, 4):
        for a in (cat.INV_SQRT2, 0.6):
            e = build("hypersphere", m=m, a=a)
            lab = label("hypersphere", {"m": m, "a": a})
            c = PullbackConnectionContext.at(e.map, sample_points(e.source, cat.SAMPLES, task_seed(S, lab)), 4)
            t2 = target_norm(c.tau2, c.h0)
            t1 = target_norm(c.tau.value, c.h0)
            if a == cat.INV_SQRT2:
                out.append(upper(f"biharmonic/{lab}", "classification", CITE["biharmonic"], t2.max(), tol["biharmonic"]))
                out.append(lower(f"nonharmonic/{lab}", "classification", CITE["nonharmonic"], t1.min(), 0.5))
            else:
                out.append(lower(f"not_biharmonic/{lab}", "classification", CITE["biharmonic"], t2.min(), 1e-2))
    for m in (3, 4, 5, 6):
        e = build("conformal_identity_b", m=m, slope=1.0)
        lab = label("conformal_identity_b", {"m": m})
        pts = sample_points(e.source, cat.SAMPLES, task_seed(S, lab))
        d = PullbackConnectionContext.at(e.map, pts, 4).div_S2.value
        if m == 4:
            out.append(upper(f"conformal_b/{lab}/div_zero", "classification", CITE["conformal_b"],
                             np.max(np.linalg.norm(d, axis=1)), tol["biharmonic"]))
        else:
            K = 2.0 * (2 - m) * (m - 4) * np.exp(4.0 * pts[:, 0])
            expect = np.zeros_like(d)
            expect[:, 0] = K
            rel = np.max(np.linalg.norm(d - expect, axis=1) / np.linalg.norm(expect, axis=1))
            out.append(upper(f"conformal_b/{lab}/formula", "classification", CITE["conformal_b"], rel, tol["conformal"]))
            out.append(lower(f"conformal_b/{lab}/div_nonzero", "classification", CITE["conformal_b"],
                             np.min(np.linalg.norm(d, axis=1)), tol["biharmonic"]))
    for a in (0.5, 0.7, 0.9):
        e = build("hypersphere", m=4, a=a)
        lab = label("hypersphere", {"m": 4, "a": a})
        c = PullbackConnectionContext.at(e.map, sample_points(e.source, cat.SAMPLES, task_seed(S, lab)), 3)
        out.append(upper(f"pseudo_umbilical/{lab}/S2_zero", "classification", CITE["pseudo_umbilical"],
                         form_norm(c.S2.value, c.ginv0).max(), tol["s2_zero"]))
    e = build("hypersphere", m=3, a=0.7)
    c = PullbackConnectionContext.at(e.map, sample_points(e.source, cat.SAMPLES, S), 3)
    out.append(lower("pseudo_umbilical/hypersphere[a=0.7,m=3]/S2_nonzero", "classification", CITE["pseudo_umbilical"],
                     form_norm(c.S2.value, c.ginv0).min(), 1e-2))

    for m, a in ((2, 0.6), (3, 0.8), (4, 0.7), (5, 0.9)):
        e = build("hypersphere", m=m, a=a)
        lab = label("hypersphere", {"m": m, "a": a})
        ig = fl.immersion_geometry(e.map, sample_points(e.source, 20, S))
        out.append(upper(f"umbilical/{lab}", "classification", CITE["umbilical"],
                         ig.pseudo_umbilical_residual().max(), tol["umbilical"]))
    for m1, m2, a1 in ((1, 1, 0.6), (1, 2, 0.6), (2, 2, 0.8)):
        e = build("clifford_torus", m1=m1, m2=m2, a1=a1)
        lab = label("clifford_torus", {"m1": m1, "m2": m2, "a1": a1})
        ig = fl.immersion_geometry(e.map, sample_points(e.source, 20, S))
        out.append(lower(f"not_umbilical/{lab}", "classification", CITE["umbilical"],
                         ig.pseudo_umbilical_residual().min(), 1e-3))

    e = build("hypersphere", m=4, a=0.6)
    pts = sample_points(e.source, 20, S)
    for tag, rho in (
        ("bump", lambda x: 0.2 * jets.sin(x[0]) * jets.cos(x[3]) + 0.1 * jets.cos(x[1])),
        ("zero", lambda x: 0.0 * x[0]),
        ("constant", lambda x: 0.0 * x[0] + 0.4),
    ):
        res = fl.conformal_immersion_relation(e.map, rho, pts)
        out.append(upper(f"conformal_immersion/hypersphere[a=0.6,m=4]/{tag}", "classification",
                         CITE["conformal_immersion"], res.max(), 1e-7))

    e = build("circle_arclength", r=1.5)
    pts = sample_points(e.source, 20, S)
    c = PullbackConnectionContext.at(e.map, pts, 3)
    gap = np.abs(c.S2.value[:, 0, 0] - 1.5 * c.tau_norm2.value)
    out.append(upper("arclength/circle_arclength[r=1.5]", "classification", CITE["arclength"], gap.max(), tol["s2_zero"]))
    e = build("warped_projection", k=2, n=3, slope=0.4)
    pts = sample_points(e.source, 20, S)
    c = PullbackConnectionContext.at(e.map, pts, 3)
    c2 = (3 * 0.4) ** 2
    gap = form_norm(c.S2.value - 0.5 * c2 * c.g0, c.ginv0)
    out.append(upper("killing/warped_projection[k=2,n=3,slope=0.4]", "classification", CITE["killing"], gap.max(),
                     tol["s2_zero"]))
    return out


def check_parallel(name, params, cfg) -> list:
    e = build(name, **params)
    lab = label(name, params)
    tol = cfg["tolerances"]
    pts = sample_points(e.source, cfg["samples"], task_seed(cfg["seed"], "par" + lab))
    c = PullbackConnectionContext.at(e.map, pts, 4)
    nab = form_norm(c.nabla_S2.value, c.ginv0).max()
    Xt = np.einsum("pij,pab,paj,pb->pi", c.ginv0, c.h0, c.dphi.value, c.tau2)
    tang = np.sqrt(np.abs(np.einsum("pij,pi,pj->p", c.g0, Xt, Xt))).max()
    formula = fl.tangent_bitension(e.map, pts[:20]).components
    fgap = np.sqrt(np.abs(np.einsum("pij,pi,pj->p", c.g0[:20], formula - Xt[:20], formula - Xt[:20]))).max()
    return [
        upper(f"parallel/{lab}", "parallel", CITE["parallel"], nab, tol["parallel"]),
        upper(f"tangent_bitension/{lab}", "parallel", CITE["tangent"], tang, tol["tangent"]),
        upper(f"tangent_formula/{lab}", "parallel", CITE["tangent_formula"], fgap, tol["tangent"]),
    ]


def check_lambda_g(name, params, cfg, integral: bool = False) -> list:
    e = build(name, resolution=cfg["resolution"], **params)
    lab = label(name, params)
    tol = cfg["tolerances"]
    pts = sample_points(e.source, cat.SAMPLES, task_seed(cfg["seed"], "lam" + lab))
    out = []
    if "S2_lambda_g" not in e.expected:
        res = var.lambda_g_pointwise(e.map, pts)
        out.append(lower(f"not_lambda_g/{lab}/pointwise", "lambda_g", CITE["not_lambda_g"], res.min(), 1e-3))
        if integral:
            lam, l2 = var.lambda_g_residual(e.map, e.mesh)
            out.append(lower(f"not_lambda_g/{lab}/L2", "lambda_g", CITE["not_lambda_g"], l2, 1e-3, lam=lam))
        return out
    res = var.lambda_g_pointwise(e.map, pts)
    out.append(upper(f"lambda_g/{lab}/pointwise", "lambda_g", CITE["lambda_g"], res.max(), tol["lambda_g"]))
    if integral:
        lam, l2 = var.lambda_g_residual(e.map, e.mesh)
        m = e.source.dim
        c = PullbackConnectionContext.at(e.map, pts[:1], 2)
        lam_formula = (4.0 - m) / (2.0 * m) * float(c.tau_norm2.value[0])
        out.append(upper(f"lambda_g/{lab}/L2", "lambda_g", CITE["lambda_g"], l2, tol["lambda_g"], lam=lam))
        out.append(upper(f"lambda_g/{lab}/lambda", "lambda_g", CITE["lambda_g"], abs(lam - lam_formula),
                         tol["lambda_g"], lam=lam, lam_formula=lam_formula))
    return out


CHECKS = {
    "divergence": check_divergence,
    "variation": check_variation,
    "homothety": check_homothety,
    "isovolumetric": check_isovolumetric,
    "classification": check_classification,
    "named": lambda name, params, cfg: check_named_criteria(cfg),
    "parallel": check_parallel,
    "lambda_g": check_lambda_g,
    "lambda_g_int": lambda name, params, cfg: check_lambda_g(name, params, cfg, integral=True),
}


# ------------------------------------------------------------------- plans
def _default_tasks(suite: str) -> list:
    """(check, entry name, params) triples for the curated suites."""
    R2 = cat.INV_SQRT2
    if suite == "divergence":
        tasks = [("divergence", n, {}) for n in cat.names()]
        tasks += [("divergence", "hypersphere", {"m": m, "a": 0.6}) for m in (2, 4, 5)]
        tasks += [("divergence", "conformal_identity_b", {"m": m}) for m in (3, 5, 6)]
        tasks += [("divergence", "clifford_torus", {"m1": 2, "m2": 2, "a1": 0.5})]
        return tasks
    if suite == "variation":
        tasks = [("variation", "hypersphere", {"m": 2, "a": 0.8}), ("variation", "conformal_torus", {"m": 3})]
        tasks += [("homothety", "hypersphere", {"m": m, "a": 0.8}) for m in (2, 3, 4, 5)]
        tasks += [("isovolumetric", "hypersphere", {"m": 3, "a": 0.7})]
        return tasks
    if suite == "classification":
        tasks = [("classification", n, {}) for n in cat.names()]
        tasks += [("classification", "conformal_identity_b", {"m": m}) for m in (3, 5, 6)]
        tasks += [("classification", "hypersphere", {"m": m, "a": a}) for m in (2, 4) for a in (0.6, R2, 1.0)]
        tasks += [("classification", "clifford_torus", p) for p in
                  ({"m1": 1, "m2": 1, "a1": 0.6}, {"m1": 1, "m2": 2, "a1": R2}, {"m1": 1, "m2": 1, "a1": R2})]
        tasks += [("classification", "minimal_in_umbilical", {"a": 0.8})]
        tasks += [("named", "-", {})]
        return tasks
    if suite == "parallel":
        tasks = [("parallel", "hypersphere", {"m": m, "a": a}) for m in (2, 3, 4, 5) for a in (0.6, R2, 0.9)]
        tasks += [("parallel", "clifford_torus", p) for p in
                  ({"m1": 1, "m2": 1, "a1": 0.6}, {"m1": 1, "m2": 2, "a1": 0.6}, {"m1": 2, "m2": 2, "a1": 0.5},
                   {"m1": 1, "m2": 3, "a1": 0.8})]
        return tasks
    if suite == "lambda_g":
        tasks = [("lambda_g_int" if m <= 3 else "lambda_g", "hypersphere", {"m": m, "a": a})
                 for m in (2, 3, 4, 5) for a in (0.6, 0.8)]
        tasks += [("lambda_g", "minimal_in_umbilical", {"a": 0.8})]
        tasks += [("lambda_g_int" if p["m1"] + p["m2"] <= 2 else "lambda_g", "clifford_torus", p) for p in
                  ({"m1": 1, "m2": 1, "a1": 0.6}, {"m1": 1, "m2": 2, "a1": 0.6}, {"m1": 2, "m2": 2, "a1": 0.6})]
        return tasks
    raise ConfigError(f"unknown suite {suite!r}")


def _entry_tasks(suite: str, name: str, params: dict) -> list:
    """Checks for one user-selected entry, driven by its expected tags."""
    e = build(name, **params)
    if suite == "divergence":
        return [("divergence", name, params)]
    if suite == "classification":
        return [("classification", name, params)]
    if suite == "variation":
        return [("variation", name, params), ("homothety", name, params)] if e.compact else []
    if suite == "parallel":
        return [("parallel", name, params)] if e.map.kind == "riemannian_immersion" and "parallel_S2" in e.expected else []
    if suite == "lambda_g":
        return [("lambda_g", name, params)] if e.map.kind == "riemannian_immersion" else []
    raise ConfigError(f"unknown suite {suite!r}")


def plan(cfg: dict) -> list:
    suites = SUITES if cfg["suite"] == "all" else (cfg["suite"],)
    tasks = []
    for s in suites:
        if cfg["entries"]:
            for name, params in cfg["entries"]:
                tasks += [(s,) + t for t in _entry_tasks(s, name, params)]
        else:
            tasks += [(s,) + t for t in _default_tasks(s)]
    return tasks


def run_task(task, cfg) -> list:
    suite, check, name, params = task
    recs = CHECKS[check](name, params, cfg)
    for r in recs:
        r.suite = suite
    return recs


def normalize_config(raw: dict) -> dict:
    cfg = {k: (v.copy() if isinstance(v, (dict, list)) else v) for k, v in DEFAULTS.items()}
    for k, v in raw.items():
        if k not in DEFAULTS:
            raise ConfigError(f"unknown config key {k!r}")
        if v is not None:
            cfg[k] = v
    if cfg["suite"] not in SUITES + ("all",):
        raise ConfigError(f"suite must be one of {', '.join(SUITES + ('all',))}")
    if cfg["format"] not in ("text", "json"):
        raise ConfigError("format must be text or json")
    tols = dict(TOLERANCES)
    for k, v in dict(cfg["tolerances"]).items():
        if k not in TOLERANCES:
            raise ConfigError(f"unknown tolerance {k!r}; known: {', '.join(sorted(TOLERANCES))}")
        try:
            v = float(v)
        except (TypeError, ValueError):
            raise ConfigError(f"tolerance {k} must be a number") from None
        if not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"tolerance {k} must be positive")
        tols[k] = v
    if tols["zero"] >= tols["band"]:
        raise ConfigError("tolerance zero must be below band")
    cfg["tolerances"] = tols
    for key, lo in (("seed", 0), ("samples", 1), ("omegas", 1), ("workers", 1)):
        try:
            cfg[key] = int(cfg[key])
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer") from None
        if cfg[key] < lo:
            raise ConfigError(f"{key} must be >= {lo}")
    if cfg["resolution"] is not None:
        try:
            cfg["resolution"] = int(cfg["resolution"])
        except (TypeError, ValueError):
            raise ConfigError("resolution must be an integer") from None
        if cfg["resolution"] < 8:
            raise ConfigError("resolution must be >= 8")
    entries = []
    for item in cfg["entries"]:
        if isinstance(item, str):
            name, params = item, {}
        elif isinstance(item, dict):
            item = dict(item)
            name, params = item.pop("name", None), item.pop("params", item)
        else:
            name, params = item
        if name is None:
            raise ConfigError("entry without a name")
        try:
            params = _checked_params(name, params)
        except cat.CatalogError as exc:
            raise ConfigError(str(exc)) from None
        entries.append((name, params))
    cfg["entries"] = entries
    return cfg


def _checked_params(name, params) -> dict:
    """Validate by building; keep only the explicitly given values."""
    build(name, **params)
    sch = cat.schema(name)
    return {k: sch[k].coerce(k, v) for k, v in params.items()}


def echo(cfg: dict) -> dict:
    out = dict(cfg)
    out["entries"] = [{"name": n, "params": {k: list(v) if isinstance(v, tuple) else v for k, v in p.items()}}
                      for n, p in cfg["entries"]]
    return out


def run(raw_cfg: dict) -> RunReport:
    cfg = normalize_config(raw_cfg)
    t0 = time.perf_counter()
    tasks = plan(cfg)
    if cfg["workers"] > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            results = list(pool.map(run_task, tasks, [cfg] * len(tasks)))
    else:
        results = [run_task(t, cfg) for t in tasks]
    records = [r for rs in results for r in rs]
    order = {s: i for i, s in enumerate(SUITES)}
    records.sort(key=lambda r: (order[r.suite], r.id))
    return RunReport(records, echo(cfg), __version__, time.perf_counter() - t0)
