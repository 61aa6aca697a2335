"""Derivative engines for phase functions.

A phase is a function of ``x`` in R^n and ``w`` in R^{n-1}.  Engines return
mixed partials ``d^alpha_x d^beta_w phi`` evaluated with numpy broadcasting
over leading axes.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
import sympy as sp


@lru_cache(maxsize=None)
def phase_symbols(n: int):
    """Symbols (x1..xn), (w1..w_{n-1}) used for closed-form phases."""
    xs = sp.symbols(f"x1:{n + 1}", real=True)
    ws = sp.symbols(f"w1:{n}", real=True)
    return xs, ws


def multi_indices(dim: int, order: int):
    """All multi-indices of length ``dim`` with total order ``order``."""
    if dim == 0:
        return [()] if order == 0 else []
    out = []
    for head in range(order, -1, -1):
        for tail in multi_indices(dim - 1, order - head):
            out.append((head,) + tail)
    return out


def unit_index(dim: int, *positions) -> tuple:
    a = [0] * dim
    for p in positions:
        a[p] += 1
    return tuple(a)


def _broadcast_eval(fn, x, w):
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    shape = np.broadcast_shapes(x.shape[:-1], w.shape[:-1])
    args = [x[..., i] for i in range(x.shape[-1])] + [w[..., j] for j in range(w.shape[-1])]
    val = fn(*args)
    return np.array(np.broadcast_to(val, shape), dtype=float)


class SymbolicEngine:
    """Closed-form derivatives from a sympy expression, compiled to numpy on demand."""

    kind = "closed-form"

    def __init__(self, expr, n: int):
        self.n = n
        self.xs, self.ws = phase_symbols(n)
        self.expr = sp.sympify(expr)
        self._exprs = {((0,) * n, (0,) * (n - 1)): self.expr}
        self._funcs = {}

    def expression(self, alpha, beta):
        key = (tuple(alpha), tuple(beta))
        cached = self._exprs.get(key)
        if cached is not None:
            return cached
        # differentiate the parent obtained by removing one order from the last active slot
        a, b = list(key[0]), list(key[1])
        if any(b):
            j = max(i for i, v in enumerate(b) if v)
            b[j] -= 1
            var = self.ws[j]
        else:
            j = max(i for i, v in enumerate(a) if v)
            a[j] -= 1
            var = self.xs[j]
        e = sp.diff(self.expression(tuple(a), tuple(b)), var)
        self._exprs[key] = e
        return e

    def function(self, alpha, beta):
        key = (tuple(alpha), tuple(beta))
        fn = self._funcs.get(key)
        if fn is None:
            fn = sp.lambdify(self.xs + self.ws, self.expression(*key), "numpy")
            self._funcs[key] = fn
        return fn

    def __call__(self, x, w, alpha, beta):
        return _broadcast_eval(self.function(alpha, beta), x, w)

    def value(self, x, w):
        return self(x, w, (0,) * self.n, (0,) * (self.n - 1))


def fornberg_weights(order: int, offsets) -> np.ndarray:
    """Finite-difference weights at the given offsets for the derivative of ``order`` at 0."""
    z = np.asarray(offsets, dtype=float)
    m = len(z)
    c = np.zeros((m, order + 1))
    c1, c4 = 1.0, z[0]
    c[0, 0] = 1.0
    for i in range(1, m):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, z[i]
        for j in range(i):
            c3 = z[i] - z[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (z[i] * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = z[i] * c[j, 0] / c3
        c1 = c2
    return c[:, order]


@lru_cache(maxsize=None)
def central_stencil(order: int):
    """Second-order accurate central stencil (offsets, weights) for d^order/dt^order."""
    half = (order + 1) // 2
    offsets = np.arange(-half, half + 1, dtype=float)
    w = fornberg_weights(order, offsets)
    keep = np.abs(w) > 1e-14
    return tuple(offsets[keep]), tuple(w[keep])


def fd_step(order: int, base: float) -> float:
    """Step for an order-k central difference balancing truncation against rounding."""
    return max(base, np.finfo(float).eps ** (1.0 / (order + 2)))


def fd_partial(fn, z, orders, h: float):
    """Tensor-product central difference of ``fn`` (acting on the last axis of z)."""
    z = np.asarray(z, dtype=float)
    active = [(i, k) for i, k in enumerate(orders) if k]
    if not active:
        return fn(z)
    stencils = [central_stencil(k) for _, k in active]
    total = None
    for combo in itertools.product(*[range(len(s[0])) for s in stencils]):
        shift = np.zeros(z.shape[-1])
        coef = 1.0
        for (i, _), s, c in zip(active, stencils, combo):
            shift[i] = s[0][c] * h
            coef *= s[1][c]
        term = coef * fn(z + shift)
        total = term if total is None else total + term
    return total / h ** sum(orders)


class FiniteDifferenceEngine:
    """Central finite differences of a value callable ``fn(x, w)``.

    The step for total order k is max(step, eps^(1/(k+2))); with
    ``richardson`` the h and h/2 estimates are combined to cancel the
    leading O(h^2) term.
    """

    kind = "finite-difference"

    def __init__(self, fn, n: int, step: float = 1e-5, richardson: bool = True):
        self.fn = fn
        self.n = n
        self.step = float(step)
        self.richardson = richardson

    def value(self, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], w.shape[:-1])
        return np.array(np.broadcast_to(self.fn(x, w), shape), dtype=float)

    def _joint(self, z):
        return self.fn(z[..., : self.n], z[..., self.n :])

    def raw(self, x, w, alpha, beta, h: float):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], w.shape[:-1])
        z = np.concatenate([np.broadcast_to(x, shape + x.shape[-1:]), np.broadcast_to(w, shape + w.shape[-1:])], axis=-1)
        return np.asarray(fd_partial(self._joint, z, tuple(alpha) + tuple(beta), h), dtype=float)

    def __call__(self, x, w, alpha, beta, step: float | None = None):
        k = sum(alpha) + sum(beta)
        if k == 0:
            return self.value(x, w)
        h = fd_step(k, self.step if step is None else step)
        d1 = self.raw(x, w, alpha, beta, h)
        if not self.richardson:
            return d1
        d2 = self.raw(x, w, alpha, beta, h / 2)
        return (4.0 * d2 - d1) / 3.0


def symbolic_is_split(expr, n: int) -> bool:
    """True when expr = <x', w> + q(x_n, w)."""
    xs, ws = phase_symbols(n)
    for k in range(n - 1):
        if sp.simplify(sp.diff(expr, xs[k]) - ws[k]) != 0:
            return False
    return True


def factorial_index(alpha) -> int:
    return math.prod(math.factorial(a) for a in alpha)
