"""Truncated multivariate Taylor arithmetic ("jets").

A :class:`Jet` stores, for every point of a batch and every entry of a
tensor, the Taylor coefficients ``d^alpha f / alpha!`` of a function of
``nvars`` chart variables for all multi-indices ``|alpha| <= order``.  The
coefficient axis is always last and the batch axis always first, so a jet of
tensor shape ``(m, m)`` evaluated at ``P`` points has ``coef.shape ==
(P, m, m, N)``.

Monomials are enumerated degree by degree, so the space of order ``k`` is a
prefix of the space of order ``k + 1`` and truncation is a slice.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

MAX_ORDER = 4


class JetError(Exception):
    """Base class for jet arithmetic failures."""


class UnsupportedOrderError(JetError):
    pass


class DomainError(JetError, ValueError):
    pass


class JetSpace:
    """Index tables for monomials of degree <= order in nvars variables."""

    def __init__(self, nvars: int, order: int):
        if nvars < 1:
            raise ValueError("nvars must be positive")
        if order < 0 or order > MAX_ORDER:
            raise UnsupportedOrderError(f"jet order {order} outside [0, {MAX_ORDER}]")
        self.nvars = nvars
        self.order = order

        exps = []
        for d in range(order + 1):
            for combo in combinations_with_replacement(range(nvars), d):
                e = [0] * nvars
                for v in combo:
                    e[v] += 1
                exps.append(tuple(e))
        self.exponents = np.array(exps, dtype=int).reshape(len(exps), nvars)
        self.index = {e: i for i, e in enumerate(exps)}
        self.size = len(exps)
        self.degree = self.exponents.sum(axis=1)
        self.factorial = np.array(
            [math.prod(math.factorial(a) for a in e) for e in exps], dtype=float
        )
        # first index of each degree block
        self.degree_start = [int(np.searchsorted(self.degree, d)) for d in range(order + 2)]

        # Cauchy product pairs, sorted by output monomial for reduceat.
        ii, jj, kk = [], [], []
        for i, ei in enumerate(exps):
            for j, ej in enumerate(exps):
                if self.degree[i] + self.degree[j] > order:
                    continue
                k = self.index[tuple(a + b for a, b in zip(ei, ej))]
                ii.append(i)
                jj.append(j)
                kk.append(k)
        perm = np.argsort(kk, kind="stable")
        self.mul_i = np.array(ii)[perm]
        self.mul_j = np.array(jj)[perm]
        mul_k = np.array(kk)[perm]
        self.mul_starts = np.flatnonzero(np.r_[True, mul_k[1:] != mul_k[:-1]])

        # d/dx_v maps the order-k space onto the order-(k-1) space.
        if order > 0:
            n_low = self.degree_start[order]
            src = np.zeros((nvars, n_low), dtype=int)
            fac = np.zeros((nvars, n_low))
            for b in range(n_low):
                eb = exps[b]
                for v in range(nvars):
                    up = list(eb)
                    up[v] += 1
                    src[v, b] = self.index[tuple(up)]
                    fac[v, b] = up[v]
            self.diff_src = src
            self.diff_fac = fac

        # each monomial of positive degree = parent monomial * x_var
        parent = np.zeros(self.size, dtype=int)
        var = np.zeros(self.size, dtype=int)
        for i, e in enumerate(exps):
            if self.degree[i] == 0:
                continue
            v = next(k for k, a in enumerate(e) if a > 0)
            low = list(e)
            low[v] -= 1
            parent[i] = self.index[tuple(low)]
            var[i] = v
        self.parent = parent
        self.var = var


@lru_cache(maxsize=None)
def jet_space(nvars: int, order: int) -> JetSpace:
    return JetSpace(nvars, order)


def n_monomials(nvars: int, order: int) -> int:
    return math.comb(nvars + order, order)


class Jet:
    """Batched, tensor-valued truncated Taylor expansion."""

    __slots__ = ("coef", "nvars", "order")
    __array_priority__ = 100

    def __init__(self, coef, nvars: int, order: int):
        coef = np.asarray(coef, dtype=float)
        if order < 0:
            raise UnsupportedOrderError("derivative order exhausted: jet order became negative")
        if order > MAX_ORDER:
            raise UnsupportedOrderError(f"jet order {order} exceeds cap {MAX_ORDER}")
        if coef.ndim < 2 or coef.shape[-1] != n_monomials(nvars, order):
            raise ValueError("coefficient array does not match jet space")
        self.coef = coef
        self.nvars = nvars
        self.order = order

    # ------------------------------------------------------------------ shape
    @property
    def space(self) -> JetSpace:
        return jet_space(self.nvars, self.order)

    @property
    def shape(self) -> tuple:
        return self.coef.shape[1:-1]

    @property
    def batch(self) -> int:
        return self.coef.shape[0]

    @property
    def ndim(self) -> int:
        return self.coef.ndim - 2

    @property
    def value(self) -> np.ndarray:
        return self.coef[..., 0]

    @property
    def dim(self) -> int:
        return self.nvars

    def __repr__(self):
        return f"Jet(batch={self.batch}, shape={self.shape}, nvars={self.nvars}, order={self.order})"

    def __len__(self):
        return self.shape[0]

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.coef[(slice(None),) + idx], self.nvars, self.order)

    def __iter__(self):
        for i in range(self.shape[0]):
            yield self[i]

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        return Jet(self.coef[..., : n_monomials(self.nvars, order)], self.nvars, order)

    def transpose(self, *axes) -> "Jet":
        axes = tuple(a + 1 for a in axes)
        return Jet(self.coef.transpose((0,) + axes + (self.coef.ndim - 1,)), self.nvars, self.order)

    def sum(self, axis) -> "Jet":
        if isinstance(axis, int):
            axis = (axis,)
        axis = tuple((a % self.ndim) + 1 for a in axis)
        return Jet(self.coef.sum(axis=axis), self.nvars, self.order)

    def reshape(self, *shape) -> "Jet":
        return Jet(self.coef.reshape((self.batch,) + shape + (self.coef.shape[-1],)), self.nvars, self.order)

    # -------------------------------------------------------- derivatives
    def diff(self, v: int) -> "Jet":
        if self.order == 0:
            raise UnsupportedOrderError("cannot differentiate an order-0 jet")
        sp = self.space
        return Jet(self.coef[..., sp.diff_src[v]] * sp.diff_fac[v], self.nvars, self.order - 1)

    def grad(self) -> "Jet":
        """All first partials, appended as a trailing tensor axis."""
        if self.order == 0:
            raise UnsupportedOrderError("cannot differentiate an order-0 jet")
        sp = self.space
        c = self.coef[..., sp.diff_src] * sp.diff_fac
        return Jet(c, self.nvars, self.order - 1)

    def partial(self, multi_index, point: int = 0, entry=()) -> float:
        """Mixed partial derivative for a multi-index given as exponent counts."""
        mi = tuple(int(a) for a in multi_index)
        if len(mi) != self.nvars:
            raise ValueError("multi-index length must equal the number of variables")
        if sum(mi) > self.order:
            raise UnsupportedOrderError(f"partial of order {sum(mi)} from a jet of order {self.order}")
        sp = self.space
        k = sp.index[mi]
        return float(self.coef[(point,) + tuple(entry) + (k,)] * sp.factorial[k])

    @property
    def partials(self) -> dict:
        """Map multi-index -> partial derivative, for a scalar single-point jet."""
        if self.ndim != 0 or self.batch != 1:
            raise ValueError("partials is defined for scalar jets at one point")
        sp = self.space
        return {
            tuple(int(a) for a in sp.exponents[k]): float(self.coef[0, k] * sp.factorial[k])
            for k in range(sp.size)
        }

    def derivatives(self) -> np.ndarray:
        """Coefficients rescaled to partial derivatives."""
        return self.coef * self.space.factorial

    # -------------------------------------------------------- arithmetic
    def _lift(self, other):
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise ValueError("jets over different variable counts")
            return other
        return None

    def _align(self, o):
        """Truncate to a common order and right-align tensor axes."""
        k = min(self.order, o.order)
        a, b = self.truncate(k).coef, o.truncate(k).coef
        d = a.ndim - b.ndim
        if d > 0:
            b = b.reshape(b.shape[:1] + (1,) * d + b.shape[1:])
        elif d < 0:
            a = a.reshape(a.shape[:1] + (1,) * -d + a.shape[1:])
        return a, b, k

    def __add__(self, other):
        o = self._lift(other)
        if o is not None:
            a, b, k = self._align(o)
            return Jet(a + b, self.nvars, k)
        other = np.asarray(other, dtype=float)
        shape = np.broadcast_shapes(self.coef.shape[:-1], other.shape)
        c = np.array(np.broadcast_to(self.coef, shape + self.coef.shape[-1:]))
        c[..., 0] += other
        return Jet(c, self.nvars, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coef, self.nvars, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._lift(other)
        if o is None:
            return Jet(self.coef * np.asarray(other, dtype=float)[..., None], self.nvars, self.order)
        a, b, k = self._align(o)
        sp = jet_space(self.nvars, k)
        prod = a[..., sp.mul_i] * b[..., sp.mul_j]
        return Jet(np.add.reduceat(prod, sp.mul_starts, axis=-1), self.nvars, k)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * power(other, -1)
        return Jet(self.coef / np.asarray(other, dtype=float)[..., None], self.nvars, self.order)

    def __rtruediv__(self, other):
        return power(self, -1) * other

    def __pow__(self, r):
        return power(self, r)


# ---------------------------------------------------------------- builders
def constant(value, nvars: int, order: int, batch: int = 1) -> Jet:
    value = np.asarray(value, dtype=float)
    if value.ndim == 0 or value.shape[0] != batch:
        value = np.broadcast_to(value, (batch,) + value.shape)
    c = np.zeros(value.shape + (n_monomials(nvars, order),))
    c[..., 0] = value
    return Jet(c, nvars, order)


def variables(points, order: int) -> Jet:
    """Identity jets x_i = p_i + dx_i at a batch of points, shape (P, m)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    P, m = pts.shape
    c = np.zeros((P, m, n_monomials(m, order)))
    c[..., 0] = pts
    if order >= 1:
        c[:, np.arange(m), 1 + np.arange(m)] = 1.0
    return Jet(c, m, order)


def as_tensor(obj, like: Jet) -> Jet:
    """Convert nested lists of jets/floats to one Jet with the batch of ``like``."""
    if isinstance(obj, Jet):
        return obj
    if isinstance(obj, (list, tuple)):
        parts = [as_tensor(o, like) for o in obj]
        k = min(p.order for p in parts)
        batch = max(p.batch for p in parts)
        coefs = []
        for p in parts:
            c = p.truncate(k).coef
            if c.shape[0] != batch:
                c = np.broadcast_to(c, (batch,) + c.shape[1:])
            coefs.append(c)
        return Jet(np.stack(coefs, axis=1), like.nvars, k)
    val = np.asarray(obj, dtype=float)
    if val.ndim == 0:
        return constant(val, like.nvars, like.order, like.batch)
    return constant(val, like.nvars, like.order, like.batch) if val.shape[0] == like.batch else \
        constant(np.broadcast_to(val, (like.batch,) + val.shape), like.nvars, like.order, like.batch)


def stack(jets, axis: int = 0) -> Jet:
    k = min(j.order for j in jets)
    axis = axis + 1 if axis >= 0 else axis - 1
    return Jet(np.stack([j.truncate(k).coef for j in jets], axis=axis), jets[0].nvars, k)


# ------------------------------------------------------ analytic functions
def _series(a: Jet, derivs) -> Jet:
    """sum_n f^(n)(a0)/n! (a - a0)^n, given derivs[n] = f^(n)(a0)."""
    delta = Jet(a.coef.copy(), a.nvars, a.order)
    delta.coef[..., 0] = 0.0
    out = Jet(np.zeros_like(a.coef), a.nvars, a.order)
    out.coef[..., 0] = derivs[0]
    pw = None
    for n in range(1, a.order + 1):
        pw = delta if pw is None else pw * delta
        out = out + pw * (derivs[n] / math.factorial(n))
    return out


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e = np.exp(x.value)
    return _series(x, [e] * (x.order + 1))


def log(x):
    if not isinstance(x, Jet):
        if np.any(np.asarray(x) <= 0):
            raise DomainError("log of a non-positive number")
        return np.log(x)
    a0 = x.value
    if np.any(a0 <= 0):
        raise DomainError("log of a non-positive jet")
    d = [np.log(a0)] + [(-1) ** (n - 1) * math.factorial(n - 1) / a0**n for n in range(1, x.order + 1)]
    return _series(x, d)


def power(x, r):
    if not isinstance(x, Jet):
        xv = np.asarray(x, dtype=float)
        if float(r) != int(r) and np.any(xv < 0):
            raise DomainError("fractional power of a negative number")
        return xv**r
    a0 = x.value
    r = float(r)
    if r.is_integer() and r >= 0:
        n = int(r)
        if n == 0:
            c = np.zeros_like(x.coef)
            c[..., 0] = 1.0
            return Jet(c, x.nvars, x.order)
        out = x
        for _ in range(n - 1):
            out = out * x
        return out
    if not r.is_integer() and np.any(a0 <= 0):
        raise DomainError("fractional power of a non-positive jet")
    if np.any(a0 == 0):
        raise DomainError("negative power of a jet with zero value")
    d = []
    c = 1.0
    for n in range(x.order + 1):
        d.append(c * a0 ** (r - n))
        c *= r - n
    return _series(x, d)


def sqrt(x):
    return power(x, 0.5)


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cyc = [s, c, -s, -c]
    return _series(x, [cyc[n % 4] for n in range(x.order + 1)])


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cyc = [c, -s, -c, s]
    return _series(x, [cyc[n % 4] for n in range(x.order + 1)])


# ------------------------------------------------------------ contraction
def _pair(spec: str, a, b):
    ins, out = spec.split("->")
    sa, sb = ins.split(",")
    ja, jb = isinstance(a, Jet), isinstance(b, Jet)
    if ja and jb:
        k = min(a.order, b.order)
        a, b = a.truncate(k), b.truncate(k)
        sp = jet_space(a.nvars, k)
        ga = a.coef[..., sp.mul_i]
        gb = b.coef[..., sp.mul_j]
        prod = np.einsum(f"...{sa}@,...{sb}@->...{out}@".replace("@", "Z"), ga, gb, optimize=True)
        return Jet(np.add.reduceat(prod, sp.mul_starts, axis=-1), a.nvars, k)
    if ja:
        c = np.einsum(f"...{sa}Z,...{sb}->...{out}Z", a.coef, np.asarray(b), optimize=True)
        return Jet(c, a.nvars, a.order)
    if jb:
        c = np.einsum(f"...{sa},...{sb}Z->...{out}Z", np.asarray(a), b.coef, optimize=True)
        return Jet(c, b.nvars, b.order)
    return np.einsum(f"...{sa},...{sb}->...{out}", a, b)


def jeinsum(spec: str, *ops):
    """einsum over tensor indices with Cauchy products over jet coefficients.

    Subscripts name tensor axes only; the batch axis is implicit.  Plain
    ndarray operands are constants, broadcast against the tensor axes from
    the right (a leading batch axis is allowed).
    """
    ins, out = spec.replace(" ", "").split("->")
    subs = ins.split(",")
    if len(subs) != len(ops):
        raise ValueError("operand count does not match subscripts")
    cur_s, cur = subs[0], ops[0]
    for k in range(1, len(ops)):
        rest = "".join(subs[k + 1 :]) + out
        keep = "".join(dict.fromkeys(c for c in cur_s + subs[k] if c in rest))
        cur = _pair(f"{cur_s},{subs[k]}->{keep}", cur, ops[k])
        cur_s = keep
    if cur_s != out:
        if isinstance(cur, Jet):
            cur = Jet(np.einsum(f"...{cur_s}Z->...{out}Z", cur.coef), cur.nvars, cur.order)
        else:
            cur = np.einsum(f"...{cur_s}->...{out}", cur)
    return cur


def inverse(G: Jet) -> Jet:
    """Inverse of a batch of square jet matrices via the Neumann series."""
    g0 = G.value
    inv0 = np.linalg.inv(g0)
    E = Jet(G.coef.copy(), G.nvars, G.order)
    E.coef[..., 0] = 0.0
    A = jeinsum("ik,kj->ij", -inv0, E)
    out = constant(inv0, G.nvars, G.order, G.batch)
    term = out
    for _ in range(G.order):
        term = jeinsum("ik,kj->ij", A, term)
        out = out + term
    return out


def monomial_powers(delta: Jet, order: int) -> np.ndarray:
    """Table of delta^gamma for all target monomials gamma, shape (P, Ny, Nx)."""
    n = delta.shape[0]
    ysp = jet_space(n, order)
    d = delta.truncate(order)
    P, Nx = d.batch, d.coef.shape[-1]
    table = np.zeros((P, ysp.size, Nx))
    table[:, 0, 0] = 1.0
    for deg in range(1, order + 1):
        lo, hi = ysp.degree_start[deg], ysp.degree_start[deg + 1]
        par = Jet(table[:, ysp.parent[lo:hi], :], d.nvars, order)
        fac = Jet(d.coef[:, ysp.var[lo:hi], :], d.nvars, order)
        table[:, lo:hi, :] = (par * fac).coef
    return table


def compose(fy: Jet, delta: Jet, order: int | None = None, table: np.ndarray | None = None) -> Jet:
    """Substitute y = y0 + delta(x) into a jet in target variables.

    ``fy`` is a jet in the target variables centred at y0 and ``delta`` a jet
    in the source variables with vanishing constant term.
    """
    k = min(fy.order, delta.order, MAX_ORDER if order is None else order)
    if table is None or table.shape[1] < n_monomials(delta.shape[0], k):
        table = monomial_powers(delta, k)
    ny = n_monomials(delta.shape[0], k)
    nx = n_monomials(delta.nvars, k)
    c = np.einsum("p...a,pab->p...b", fy.truncate(k).coef, table[:, :ny, :nx], optimize=True)
    return Jet(c, delta.nvars, k)
