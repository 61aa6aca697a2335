"""Homogeneous phase functions: derivatives, Gauss map, structural checks, implicit maps.

Coordinates: x = (x'', x_{n-1}, x_n) in R^n with x' = (x'', x_{n-1}), and
w = (w', w_{n-1}) in R^{n-1}.  Unless stated otherwise, operations take the
unit-scale point x in the spatial box X; the scaled phase is
phi^lam(x; w) = lam * phi(x / lam; w).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import sympy as sp

from .derivatives import (
    FiniteDifferenceEngine,
    SymbolicEngine,
    factorial_index,
    fd_partial,
    multi_indices,
    phase_symbols,
    symbolic_is_split,
    unit_index,
)
from .errors import DegeneratePhaseError, DomainError, InconsistentDataError, OutOfRangeError
from .geometry import Box, SectorSpec, Subspace, angle_between, bump, plateau

__all__ = [
    "Amplitude",
    "Box",
    "ConditionReport",
    "GaussAngleReport",
    "KFlatReport",
    "PhaseField",
    "SectorSpec",
    "Subspace",
    "build_builtin",
    "check_C1",
    "check_C2plus",
    "check_reduced",
    "gauss_angle_estimates",
    "gauss_map",
    "graph_height",
    "graph_height_derivative",
    "hessian_deviation",
    "kakeya_matrix",
    "kflat_defect",
    "phase_from_callable",
    "phase_from_dict",
    "phase_from_expression",
    "phase_from_table",
    "phase_to_dict",
    "solve_Phi",
    "solve_Psi",
    "solve_Upsilon",
    "taylor_remainder_integral",
]

BUILTINS = ("model_parabolic_cone", "circular_cone", "kakeya_n")
C_CONE = 0.1
DERIV_ORDER_N = 8
NEWTON_TOL = 1e-10
NEWTON_MAXIT = 50


# ---------------------------------------------------------------------------
# phase container


@dataclass(frozen=True, eq=False)
class PhaseField:
    """A 1-homogeneous phase with its domain, scale and derivative engine."""

    dim_n: int
    scale_lambda: float
    spatial_domain: Box
    frequency_domain: SectorSpec
    evaluator: str
    engine: object = field(repr=False)
    split: bool = False
    params: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.dim_n < 2:
            raise DomainError("dim_n must be at least 2")
        if self.scale_lambda <= 0:
            raise DomainError("scale_lambda must be positive")
        if self.spatial_domain.dim != self.dim_n or self.frequency_domain.dim != self.dim_n - 1:
            raise DomainError("domain dimensions do not match dim_n")

    @property
    def n(self) -> int:
        return self.dim_n

    @property
    def lam(self) -> float:
        return self.scale_lambda

    @property
    def derivative_mode(self) -> str:
        return self.engine.kind

    # -- evaluation -------------------------------------------------------
    def value(self, x, w):
        return self.engine.value(x, w)

    def value_scaled(self, x, w):
        """phi^lam(x; w) = lam * phi(x / lam; w) at a lam-scale point x."""
        return self.lam * self.value(np.asarray(x, float) / self.lam, w)

    def partial(self, x, w, alpha=None, beta=None):
        n = self.n
        alpha = (0,) * n if alpha is None else tuple(alpha)
        beta = (0,) * (n - 1) if beta is None else tuple(beta)
        if len(alpha) != n or len(beta) != n - 1:
            raise DomainError("multi-index lengths must be (n, n-1)")
        return self.engine(x, w, alpha, beta)

    def d(self, x, w, xi=(), wi=()):
        """Partial derivative by lists of variable positions, e.g. d(x, w, [n-1], [0, 0])."""
        return self.partial(x, w, unit_index(self.n, *xi), unit_index(self.n - 1, *wi))

    def grad_x(self, x, w):
        return np.stack([self.d(x, w, [k]) for k in range(self.n)], axis=-1)

    def grad_w(self, x, w):
        return np.stack([self.d(x, w, (), [j]) for j in range(self.n - 1)], axis=-1)

    def hess_xw(self, x, w):
        """Mixed Hessian, entry [..., k, j] = d_{x_k} d_{w_j} phi."""
        n = self.n
        rows = [np.stack([self.d(x, w, [k], [j]) for j in range(n - 1)], axis=-1) for k in range(n)]
        return np.stack(rows, axis=-2)

    def hess_ww(self, x, w, xi=()):
        """Frequency Hessian of d^xi_x phi."""
        m = self.n - 1
        vals = {}
        for i in range(m):
            for j in range(i, m):
                vals[i, j] = self.d(x, w, xi, [i, j])
        rows = [np.stack([vals[min(i, j), max(i, j)] for j in range(m)], axis=-1) for i in range(m)]
        return np.stack(rows, axis=-2)

    # -- variants ---------------------------------------------------------
    def with_lambda(self, lam: float) -> "PhaseField":
        return replace(self, scale_lambda=float(lam))

    def with_domains(self, spatial: Box | None = None, sector: SectorSpec | None = None) -> "PhaseField":
        return replace(
            self,
            spatial_domain=spatial or self.spatial_domain,
            frequency_domain=sector or self.frequency_domain,
        )

    def with_finite_differences(self, step: float = 1e-5, richardson: bool = True) -> "PhaseField":
        base = self.engine

        def fn(x, w):
            return base.value(x, w)

        return replace(self, engine=FiniteDifferenceEngine(fn, self.n, step, richardson))

    def negated(self) -> "PhaseField":
        base = self.engine
        if isinstance(base, SymbolicEngine):
            eng = SymbolicEngine(-base.expr, self.n)
        else:
            eng = FiniteDifferenceEngine(lambda x, w: -base.value(x, w), self.n, getattr(base, "step", 1e-5))
        return replace(self, engine=eng, split=False, evaluator=f"negated:{self.evaluator}")


# ---------------------------------------------------------------------------
# amplitudes

PROFILES = ("bump", "plateau", "flat")


def _profile(kind: str, t):
    return bump(t) if kind == "bump" else plateau(t)


@dataclass(frozen=True)
class Amplitude:
    """Product amplitude a(x; w) = a1(x) a2(w) built from smooth bumps.

    a1 is a tensor bump supported in ``spatial_support``; a2 is a radial bump
    times an angular bump supported in ``frequency_support`` (no angular
    factor when that sector is a full annulus).  Profiles: ``bump`` (smooth,
    peaked), ``plateau`` (smooth, equal to 1 on the inner half) or ``flat``
    (indicator).
    """

    spatial_support: Box
    frequency_support: SectorSpec
    deriv_bound: float = 1.0
    spatial_profile: str = "bump"
    frequency_profile: str = "bump"

    def __post_init__(self):
        for prof in (self.spatial_profile, self.frequency_profile):
            if prof not in PROFILES:
                raise DomainError(f"amplitude profile must be one of {PROFILES}, got {prof!r}")

    def a1(self, x):
        x = np.asarray(x, dtype=float)
        if self.spatial_profile == "flat":
            return self.spatial_support.contains(x).astype(float)
        c = self.spatial_support.center
        hw = self.spatial_support.halfwidths
        return np.prod(_profile(self.spatial_profile, (x - c) / hw), axis=-1)

    def a2(self, w):
        s = self.frequency_support
        w = np.asarray(w, dtype=float)
        if self.frequency_profile == "flat":
            return s.contains(w).astype(float)
        r = np.linalg.norm(w, axis=-1)
        val = _profile(self.frequency_profile, (2.0 * r - (s.r0 + s.r1)) / (s.r1 - s.r0))
        if not s.is_full:
            val = val * _profile(self.frequency_profile, s.angle_to_center(w) / s.aperture)
        return val

    def __call__(self, x, w):
        return self.a1(x) * self.a2(w)

    def scaled(self, x, w, lam: float):
        """a^lam(x; w) = a(x / lam; w)."""
        return self(np.asarray(x, float) / lam, w)

    def margin(self, phase: PhaseField) -> float:
        return phase.spatial_domain.boundary_distance(self.spatial_support)

    def check_support(self, phase: PhaseField) -> None:
        if not phase.spatial_domain.contains_box(self.spatial_support):
            raise InconsistentDataError("spatial support of the amplitude leaves the phase domain X")
        fs, fd = self.frequency_support, phase.frequency_domain
        if fs.r0 < fd.r0 - 1e-12 or fs.r1 > fd.r1 + 1e-12:
            raise InconsistentDataError("radial support of the amplitude leaves the phase sector")
        if not fd.is_full:
            gap = angle_between(np.asarray(fs.center), np.asarray(fd.center))
            if fs.is_full or gap + fs.aperture > fd.aperture + 1e-12:
                raise InconsistentDataError("angular support of the amplitude leaves the phase sector")

    def frequency_derivative_sup(self, max_order: int = 2, samples: int = 200, seed: int = 0) -> float:
        """Sampled sup of |d^beta_w a2| over 1 <= |beta| <= max_order (finite differences)."""
        rng = np.random.default_rng(seed)
        w = self.frequency_support.sample(rng, samples)
        best = float(np.max(np.abs(self.a2(w))))
        d = w.shape[1]
        for k in range(1, max_order + 1):
            for beta in multi_indices(d, k):
                vals = fd_partial(self.a2, w, beta, 1e-3)
                best = max(best, float(np.max(np.abs(vals))))
        return best

    @classmethod
    def for_phase(cls, phase: PhaseField, shrink: float = 0.5, **kw) -> "Amplitude":
        """Amplitude whose supports sit inside the phase domain, scaled by ``shrink`` about the centers."""
        X = phase.spatial_domain
        c, hw = X.center, X.halfwidths * shrink
        sec = phase.frequency_domain
        mid = 0.5 * (sec.r0 + sec.r1)
        half = 0.5 * (sec.r1 - sec.r0)
        fsec = SectorSpec(sec.center, sec.aperture, mid - half, mid + half)
        return cls(Box(tuple(c - hw), tuple(c + hw)), fsec, **kw)

    def to_dict(self) -> dict:
        return {
            "spatial_support": self.spatial_support.to_dict(),
            "frequency_support": self.frequency_support.to_dict(),
            "deriv_bound": self.deriv_bound,
            "spatial_profile": self.spatial_profile,
            "frequency_profile": self.frequency_profile,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Amplitude":
        return cls(
            Box.from_dict(d["spatial_support"]),
            SectorSpec.from_dict(d["frequency_support"]),
            float(d.get("deriv_bound", 1.0)),
            d.get("spatial_profile", "bump"),
            d.get("frequency_profile", "bump"),
        )


# ---------------------------------------------------------------------------
# constructors


def kakeya_matrix(t, dim: int):
    """Block-diagonal matrix A(t): 2x2 blocks [[t, t^2], [t^2, t + t^3]] and a (t) tail when dim is odd."""
    A = sp.zeros(dim, dim) if isinstance(t, sp.Basic) else np.zeros((dim, dim))
    for b in range(dim // 2):
        i = 2 * b
        A[i, i] = t
        A[i, i + 1] = t**2
        A[i + 1, i] = t**2
        A[i + 1, i + 1] = t + t**3
    if dim % 2:
        A[dim - 1, dim - 1] = t
    return A


def _builtin_expression(name: str, n: int):
    xs, ws = phase_symbols(n)
    lin = sum(xs[k] * ws[k] for k in range(n - 1))
    t = xs[n - 1]
    wp = sp.Matrix(ws[: n - 2])
    wl = ws[n - 2]
    if name == "model_parabolic_cone":
        return lin + t * (wp.T * wp)[0, 0] / (2 * wl)
    if name == "circular_cone":
        return lin + t * sp.sqrt(sum(w**2 for w in ws))
    if name == "kakeya_n":
        A = kakeya_matrix(t, n - 2)
        return lin + (wp.T * A * wp)[0, 0] / (2 * wl)
    raise DomainError(f"unknown built-in phase {name!r}")


def default_sector(name: str, n: int) -> SectorSpec:
    e = np.zeros(n - 1)
    e[-1] = 1.0
    if name == "model_parabolic_cone":
        return SectorSpec(tuple(e), 0.1, 1.0, 2.0)
    if name == "circular_cone":
        return SectorSpec.annulus(n - 1, 0.5, 2.0)
    if name == "kakeya_n":
        return SectorSpec(tuple(e), 0.1, 0.5, 1.0)
    raise DomainError(f"unknown built-in phase {name!r}")


def build_builtin(name: str, n: int, lam: float = 1.0, sector: SectorSpec | None = None,
                  spatial: Box | None = None) -> PhaseField:
    """Closed-form built-in phases (model parabolic cone, circular cone, Kakeya-compression phase)."""
    if name not in BUILTINS:
        raise DomainError(f"unknown built-in phase {name!r}; choose from {BUILTINS}")
    if n < 3 or (name == "kakeya_n" and n < 4):
        raise DomainError(f"{name} is not available for n = {n}")
    if lam < 1:
        raise DomainError("lambda must be >= 1")
    expr = _builtin_expression(name, n)
    return PhaseField(
        dim_n=n,
        scale_lambda=float(lam),
        spatial_domain=spatial or Box.cube(n, 0.5),
        frequency_domain=sector or default_sector(name, n),
        evaluator=name,
        engine=SymbolicEngine(expr, n),
        split=True,
        params={},
    )


def _check_homogeneous(phase: PhaseField, samples: int = 64, tol: float = 1e-9) -> None:
    rng = np.random.default_rng(1234)
    x = phase.spatial_domain.sample(rng, samples)
    w = phase.frequency_domain.sample(rng, samples)
    base = phase.value(x, w)
    for mu in (0.5, 2.0):
        err = np.abs(phase.value(x, mu * w) - mu * base)
        if np.any(err > tol * (mu * np.abs(base) + 1.0)):
            raise DomainError("phase is not 1-homogeneous in the frequency variable")


def phase_from_expression(expr: str | sp.Expr, n: int, lam: float = 1.0, sector: SectorSpec | None = None,
                          spatial: Box | None = None, name: str = "expression") -> PhaseField:
    """User phase from a sympy expression in symbols x1..xn, w1..w_{n-1}."""
    xs, ws = phase_symbols(n)
    local = {str(s): s for s in xs + ws}
    e = sp.sympify(expr, locals=local) if isinstance(expr, str) else expr
    extra = e.free_symbols - set(xs) - set(ws)
    if extra:
        raise DomainError(f"expression has unknown symbols {sorted(map(str, extra))}")
    phase = PhaseField(
        dim_n=n,
        scale_lambda=float(lam),
        spatial_domain=spatial or Box.cube(n, 0.5),
        frequency_domain=sector or default_sector("model_parabolic_cone", n),
        evaluator=name,
        engine=SymbolicEngine(e, n),
        split=symbolic_is_split(e, n),
        params={"expression": str(e)},
    )
    _check_homogeneous(phase)
    return phase


def phase_from_table(table, n: int, lam: float = 1.0, sector: SectorSpec | None = None,
                     spatial: Box | None = None, linear_part: bool = True) -> PhaseField:
    """Phase from a coefficient table.

    Each entry (alpha, beta', c) contributes c * x^alpha * (w')^beta' * w_{n-1}^(1 - |beta'|),
    which is 1-homogeneous in w.  ``linear_part`` adds <x', w>.
    """
    xs, ws = phase_symbols(n)
    entries = table.items() if isinstance(table, dict) else [((a, b), c) for a, b, c in table]
    expr = sum(xs[k] * ws[k] for k in range(n - 1)) if linear_part else sp.Integer(0)
    rows = []
    for (alpha, beta), c in entries:
        alpha, beta = tuple(int(v) for v in alpha), tuple(int(v) for v in beta)
        if len(alpha) != n or len(beta) != n - 2:
            raise DomainError("table multi-indices must have lengths (n, n-2)")
        term = sp.nsimplify(c) if isinstance(c, (int, str)) else sp.Float(c)
        for k, a in enumerate(alpha):
            term *= xs[k] ** a
        for j, b in enumerate(beta):
            term *= ws[j] ** b
        expr += term * ws[n - 2] ** (1 - sum(beta))
        rows.append([list(alpha), list(beta), float(c)])
    phase = phase_from_expression(expr, n, lam, sector, spatial, name="table")
    return replace(phase, params={"table": rows, "linear_part": linear_part})


def phase_from_callable(fn, n: int, lam: float = 1.0, sector: SectorSpec | None = None,
                        spatial: Box | None = None, step: float = 1e-5, split: bool = False) -> PhaseField:
    """Phase given only as a vectorized value callable fn(x, w); derivatives by finite differences."""
    phase = PhaseField(
        dim_n=n,
        scale_lambda=float(lam),
        spatial_domain=spatial or Box.cube(n, 0.5),
        frequency_domain=sector or default_sector("model_parabolic_cone", n),
        evaluator="callable",
        engine=FiniteDifferenceEngine(fn, n, step),
        split=split,
    )
    _check_homogeneous(phase)
    return phase


def phase_to_dict(phase: PhaseField, amplitude: Amplitude | None = None) -> dict:
    d = {
        "name": phase.evaluator,
        "n": phase.n,
        "lambda": phase.lam,
        "sector": phase.frequency_domain.to_dict(),
        "spatial": phase.spatial_domain.to_dict(),
        "derivative_mode": phase.derivative_mode,
    }
    if "expression" in phase.params and "table" not in phase.params:
        d["expression"] = phase.params["expression"]
    if "table" in phase.params:
        d["table"] = phase.params["table"]
        d["linear_part"] = phase.params["linear_part"]
    if amplitude is not None:
        d["margin"] = amplitude.margin(phase)
        d["amplitude"] = amplitude.to_dict()
    return d


def phase_from_dict(d: dict) -> PhaseField:
    n = int(d["n"])
    lam = float(d.get("lambda", 1.0))
    sector = SectorSpec.from_dict(d["sector"]) if "sector" in d else None
    spatial = Box.from_dict(d["spatial"]) if "spatial" in d else None
    name = d["name"]
    if name in BUILTINS:
        phase = build_builtin(name, n, lam, sector, spatial)
    elif "table" in d:
        phase = phase_from_table(d["table"], n, lam, sector, spatial, d.get("linear_part", True))
    elif "expression" in d:
        phase = phase_from_expression(d["expression"], n, lam, sector, spatial, name=name)
    else:
        raise DomainError(f"cannot rebuild phase {name!r} from its description")
    if d.get("derivative_mode") == "finite-difference":
        phase = phase.with_finite_differences()
    return phase


# ---------------------------------------------------------------------------
# Gauss map and curvature conditions


def _gauss_unit(phase: PhaseField, x, w):
    M = phase.hess_xw(x, w)
    u, s, _ = np.linalg.svd(M, full_matrices=True)
    if np.any(s[..., -1] <= 1e-8 * s[..., 0]):
        raise DegeneratePhaseError("mixed Hessian has rank below n-1; Gauss map undefined")
    g = u[..., :, -1]
    flip = g[..., -1] < 0
    g = np.where(flip[..., None], -g, g)
    return g


def gauss_map(phase: PhaseField, x, w, scaled: bool = True):
    """Unit Gauss map G^lam(x; w) = G(x / lam; w) with positive last coordinate.

    With ``scaled=False`` x is a unit-scale point.
    """
    x = np.asarray(x, dtype=float)
    if scaled:
        x = x / phase.lam
    return _gauss_unit(phase, x, w)


def check_C1(phase: PhaseField, x, w):
    """(rank, smallest singular value) of the mixed Hessian at a unit-scale point."""
    s = np.linalg.svd(phase.hess_xw(x, w), compute_uv=False)
    smax = s[..., 0]
    if np.ndim(smax) == 0 and smax == 0:
        return 0, 0.0
    rank = np.sum(s > 1e-8 * smax[..., None], axis=-1)
    return (int(rank) if np.ndim(rank) == 0 else rank), (float(s[..., -1]) if np.ndim(rank) == 0 else s[..., -1])


def curvature_matrix(phase: PhaseField, x, w, w0=None):
    """Frequency Hessian of <d_x phi(x; w), G(x; w0)>."""
    w0 = w if w0 is None else w0
    g = _gauss_unit(phase, x, w0)
    return sum(g[..., k, None, None] * phase.hess_ww(x, w, [k]) for k in range(phase.n))


def check_C2plus(phase: PhaseField, x, w0, rtol: float = 1e-6):
    """Sorted eigenvalues of the curvature matrix at w0 and whether the signature is (n-2 same sign, one zero)."""
    H = curvature_matrix(phase, np.asarray(x, float), np.asarray(w0, float))
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    scale = max(1.0, float(np.max(np.abs(ev))))
    zero = np.abs(ev) <= rtol * scale
    rest = ev[~zero]
    ok = int(zero.sum()) == 1 and (np.all(rest > 0) or np.all(rest < 0))
    return sorted(ev.tolist()), bool(ok)


# ---------------------------------------------------------------------------
# Newton solvers


def _newton(residual, jacobian, z0, tol=NEWTON_TOL, maxit=NEWTON_MAXIT, singular_error=False):
    """Batched damped Newton with step halving.  Returns (z, residual norm, converged)."""
    z = np.array(z0, dtype=float)
    r = residual(z)
    nr = np.linalg.norm(r, axis=-1)
    for _ in range(maxit):
        act = np.nonzero(nr > tol)[0]
        if act.size == 0:
            break
        J = jacobian(z[act])
        s = np.linalg.svd(J, compute_uv=False)
        bad = s[:, -1] <= 1e-13 * np.maximum(s[:, 0], 1e-300)
        if np.any(bad):
            if singular_error:
                raise DegeneratePhaseError("Jacobian of the implicit system is singular at an iterate")
            nr[act[bad]] = np.inf
            act, J = act[~bad], J[~bad]
            if act.size == 0:
                break
        step = np.linalg.solve(J, r[act][..., None])[..., 0]
        t = np.ones(act.size)
        pending = np.arange(act.size)
        for _ in range(30):
            trial = z[act[pending]] - t[pending, None] * step[pending]
            rt = residual(trial)
            nt = np.linalg.norm(rt, axis=-1)
            ok = (nt < nr[act[pending]]) | (nt <= tol)
            idx = act[pending[ok]]
            z[idx], r[idx], nr[idx] = trial[ok], rt[ok], nt[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            t[pending] *= 0.5
        if pending.size:
            nr[act[pending]] = np.where(nr[act[pending]] <= tol, nr[act[pending]], np.inf)
    return z, nr, nr <= tol


def _batch(arr, d):
    a = np.asarray(arr, dtype=float)
    return a.reshape(-1, d), a.shape[:-1]


def _finish(z, nr, conv, shape, strict, what):
    if strict and not np.all(conv):
        raise OutOfRangeError(f"{what}: Newton failed to converge at {int(np.sum(~conv))} of {conv.size} points")
    z = z.reshape(shape + z.shape[-1:])
    return z if strict else (z, conv.reshape(shape))


def solve_Psi(phase: PhaseField, x, u, tol: float = NEWTON_TOL, strict: bool = True):
    """Solve d_{x'} phi(x; w) = u for w (unit-scale x)."""
    n, m = phase.n, phase.n - 1
    ub, shape = _batch(u, m)
    N = len(ub)
    if phase.split:
        return _finish(ub.copy(), np.zeros(N), np.ones(N, bool), shape, strict, "solve_Psi")
    xb = np.broadcast_to(np.asarray(x, float), shape + (n,)).reshape(N, n)

    def res(w, data):
        return phase.grad_x(data[:, :n], w)[:, :m] - data[:, n:]

    def jac(w, data):
        return phase.hess_xw(data[:, :n], w)[:, :m, :]

    w, nr, conv = _augmented_newton(res, jac, ub.copy(), np.concatenate([xb, ub], axis=1), tol)
    return _finish(w, nr, conv, shape, strict, "solve_Psi")


def _model_grad_h(w):
    w = np.asarray(w, float)
    wp, wl = w[..., :-1], w[..., -1:]
    return np.concatenate([wp / wl, -0.5 * np.sum(wp * wp, axis=-1, keepdims=True) / wl**2], axis=-1)


def _augmented_newton(core_res, core_jac, unknown0, data, tol, singular_error=False):
    """Newton on `unknown` while carrying per-sample `data` columns through subsetting."""
    m = unknown0.shape[1]
    k = data.shape[1]
    z0 = np.concatenate([unknown0, data], axis=1)

    def residual(z):
        r = core_res(z[:, :m], z[:, m:])
        return np.concatenate([r, np.zeros((len(z), k))], axis=1)

    def jacobian(z):
        J = np.zeros((len(z), m + k, m + k))
        J[:, :m, :m] = core_jac(z[:, :m], z[:, m:])
        J[:, m:, m:] = np.eye(k)
        return J

    z, nr, conv = _newton(residual, jacobian, z0, tol, singular_error=singular_error)
    return z[:, :m], nr, conv


def solve_Phi(phase: PhaseField, x_n, w, target, tol: float = NEWTON_TOL, strict: bool = True):
    """Solve d_w phi(x', x_n; w) = target for x' (unit scale)."""
    n, m = phase.n, phase.n - 1
    tb, shape = _batch(target, m)
    N = len(tb)
    wb = np.broadcast_to(np.asarray(w, float), shape + (m,)).reshape(N, m)
    tn = np.broadcast_to(np.asarray(x_n, float), shape).reshape(N, 1)
    x0 = tb - tn * _model_grad_h(wb)

    def res(xp, data):
        xx = np.concatenate([xp, data[:, :1]], axis=1)
        return phase.grad_w(xx, data[:, 1 : 1 + m]) - data[:, 1 + m :]

    def jac(xp, data):
        xx = np.concatenate([xp, data[:, :1]], axis=1)
        return np.swapaxes(phase.hess_xw(xx, data[:, 1 : 1 + m])[:, :m, :], -1, -2)

    xp, nr, conv = _augmented_newton(res, jac, x0, np.concatenate([tn, wb, tb], axis=1), tol)
    return _finish(xp, nr, conv, shape, strict, "solve_Phi")


@dataclass
class UpsilonResult:
    y: np.ndarray
    jacobian: np.ndarray
    c_upsilon: float
    residual: float


def _upsilon_system(phase, y, xn, w):
    xx = np.concatenate([y, xn], axis=1)
    gw = phase.grad_w(xx, w)[:, : phase.n - 2]
    val = phase.value(xx, w)[:, None]
    return np.concatenate([gw, val], axis=1)


def _upsilon_jac(phase, y, xn, w):
    n, m = phase.n, phase.n - 1
    xx = np.concatenate([y, xn], axis=1)
    H = phase.hess_xw(xx, w)  # [k, j]
    J = np.empty((len(y), m, m))
    J[:, : m - 1, :] = np.swapaxes(H[:, :m, : m - 1], -1, -2)
    J[:, m - 1, :] = phase.grad_x(xx, w)[:, :m]
    return J


def solve_Upsilon(phase: PhaseField, xp, x_n, w, tol: float = NEWTON_TOL, full: bool = False):
    """Solve d_{w'} phi(y', x_n; w) = x'' and phi(y', x_n; w) = x_{n-1} for y' (unit scale).

    With ``full`` returns an UpsilonResult carrying the Jacobian d_{x'} Upsilon
    and its largest norm C_Upsilon.
    """
    n, m = phase.n, phase.n - 1
    xb, shape = _batch(xp, m)
    N = len(xb)
    wb = np.broadcast_to(np.asarray(w, float), shape + (m,)).reshape(N, m)
    tn = np.broadcast_to(np.asarray(x_n, float), shape).reshape(N, 1)
    wpr, wl = wb[:, :-1], wb[:, -1:]
    hstar = 0.5 * np.sum(wpr * wpr, axis=1, keepdims=True) / wl
    y2 = xb[:, :-1] - tn * wpr / wl
    y1 = (xb[:, -1:] - np.sum(y2 * wpr, axis=1, keepdims=True) - tn * hstar) / wl
    y0 = np.concatenate([y2, y1], axis=1)

    def res(y, data):
        return _upsilon_system(phase, y, data[:, :1], data[:, 1 : 1 + m]) - data[:, 1 + m :]

    def jac(y, data):
        return _upsilon_jac(phase, y, data[:, :1], data[:, 1 : 1 + m])

    y, nr, conv = _augmented_newton(res, jac, y0, np.concatenate([tn, wb, xb], axis=1), tol, singular_error=True)
    if not np.all(conv):
        raise OutOfRangeError(f"solve_Upsilon: no convergence at {int(np.sum(~conv))} of {N} points")
    out = y.reshape(shape + (m,))
    if not full:
        return out
    J = _upsilon_jac(phase, y, tn, wb)
    Jinv = np.linalg.inv(J)
    c_ups = float(np.max(np.linalg.norm(Jinv, ord=2, axis=(-2, -1))))
    return UpsilonResult(out, Jinv.reshape(shape + (m, m)), c_ups, float(np.max(nr)))


def upsilon_jacobian_det(phase: PhaseField, y, x_n, w):
    """Determinant of the Jacobian of y' -> (d_{w'} phi, phi) at (y', x_n; w)."""
    y = np.atleast_2d(np.asarray(y, float))
    N = len(y)
    w = np.broadcast_to(np.asarray(w, float), (N, phase.n - 1))
    tn = np.broadcast_to(np.asarray(x_n, float), (N,)).reshape(N, 1)
    return np.linalg.det(_upsilon_jac(phase, y, tn, w))


# ---------------------------------------------------------------------------
# graph height h_x(w) = d_{x_n} phi(x; Psi(x; w))


def graph_height(phase: PhaseField, xbar, u):
    """h_{xbar}(u) at a unit-scale point xbar."""
    w = solve_Psi(phase, xbar, u)
    return phase.d(xbar, w, [phase.n - 1])


def graph_height_derivative(phase: PhaseField, xbar, u, beta, step: float = 2e-3):
    """d^beta_u h_{xbar}(u); exact for split phases, finite differences of the implicit map otherwise."""
    beta = tuple(beta)
    if phase.split:
        return phase.partial(xbar, u, unit_index(phase.n, phase.n - 1), beta)
    if sum(beta) == 0:
        return graph_height(phase, xbar, u)

    def h(uu):
        shape = uu.shape[:-1]
        w = solve_Psi(phase, xbar, uu.reshape(-1, phase.n - 1), tol=1e-13)
        return phase.d(xbar, w, [phase.n - 1]).reshape(shape)

    return fd_partial(h, np.asarray(u, float), beta, step)


def graph_height_hessian(phase: PhaseField, xbar, u):
    m = phase.n - 1
    u = np.asarray(u, float)
    H = np.empty(u.shape[:-1] + (m, m))
    for i in range(m):
        for j in range(i, m):
            H[..., i, j] = H[..., j, i] = graph_height_derivative(phase, xbar, u, unit_index(m, i, j))
    return H


def hessian_deviation(phase: PhaseField, xbar, u):
    """|| d^2_{w'w'} h_x(u) - I / u_{n-1} || (Frobenius)."""
    u = np.asarray(u, float)
    H = graph_height_hessian(phase, xbar, u)[..., :-1, :-1]
    I = np.eye(phase.n - 2) / u[..., -1, None, None]
    return np.linalg.norm(H - I, axis=(-2, -1))


# ---------------------------------------------------------------------------
# reduced-phase conditions


@dataclass
class ConditionReport:
    c1_min_sv: float
    c2_eigenvalues: list
    reduced_constants: tuple
    kflat_sup: float | None
    margin: float
    time_derivative_sup: float
    deviations: dict
    pass_flags: dict

    def to_dict(self) -> dict:
        return {
            "c1_min_sv": self.c1_min_sv,
            "c2_eigenvalues": list(self.c2_eigenvalues),
            "reduced_constants": list(self.reduced_constants),
            "kflat_sup": self.kflat_sup,
            "margin": self.margin,
            "time_derivative_sup": self.time_derivative_sup,
            "deviations": dict(self.deviations),
            "pass_flags": dict(self.pass_flags),
        }


def _sup_over(phase, x, w, alpha, betas):
    best = 0.0
    for beta in betas:
        best = max(best, float(np.max(np.abs(phase.partial(x, w, alpha, beta)))))
    return best


def check_reduced(phase: PhaseField, amplitude: Amplitude, sample_budget: int = 200, c_cone: float = C_CONE,
                  N: int = DERIV_ORDER_N, d2_orders: tuple = (3, 3), time_bound: float = 10.0,
                  seed: int = 0) -> ConditionReport:
    """Sampled check of the reduced-phase conditions C1'', C2'', D1, D2 and the margin condition.

    Reports the smallest constants (A1, A2, A3) that the samples allow.  The
    D2 orders are capped at ``d2_orders`` = (max x-order, max w-order).
    """
    if sample_budget < 100:
        raise DomainError("sample_budget must be at least 100")
    amplitude.check_support(phase)
    n, m = phase.n, phase.n - 1
    rng = np.random.default_rng(seed)
    x = phase.spatial_domain.sample(rng, sample_budget)
    w = amplitude.frequency_support.sample(rng, sample_budget)

    H = phase.hess_xw(x, w)
    c1dev = float(np.max(np.linalg.norm(np.swapaxes(H[:, :m, :], -1, -2) - np.eye(m), axis=(-2, -1))))
    c1_min_sv = float(np.min(np.linalg.svd(H, compute_uv=False)[:, -1]))
    Hw = phase.hess_ww(x, w, [n - 1])[:, : m - 1, : m - 1]
    c2dev = float(np.max(np.linalg.norm(Hw - np.eye(m - 1) / w[:, -1, None, None], axis=(-2, -1))))

    d1a_betas = [b for k in (2, 3) for b in multi_indices(m, k) if sum(b[:-1]) >= 2]
    d1a = max(_sup_over(phase, x, w, unit_index(n, k), d1a_betas) for k in range(m))
    d1b_betas = [b for k in range(3, N + 1) for b in multi_indices(m, k) if sum(b[:-1]) >= 3]
    d1b = _sup_over(phase, x, w, unit_index(n, n - 1), d1b_betas)
    amax, bmax = d2_orders
    d2 = 0.0
    for ka in range(2, amax + 1):
        for alpha in multi_indices(n, ka):
            d2 = max(d2, _sup_over(phase, x, w, alpha, [b for kb in range(1, bmax + 1) for b in multi_indices(m, kb)]))
    # time-derivative bounds, normalized by |beta|! (the implicit constant grows with the order)
    tder = max(
        _sup_over(phase, x, w, unit_index(n, n - 1), multi_indices(m, k)) / math.factorial(k) for k in range(1, N + 1)
    )

    A1 = max(1.0, c1dev / c_cone, d1a / c_cone, d1b * 2 * n / c_cone)
    A2 = max(1.0, c2dev / c_cone)
    A3 = max(1.0, d2 * 2 * n / c_cone)
    margin = amplitude.margin(phase)

    xc = phase.spatial_domain.center
    ev, sig_ok = check_C2plus(phase, xc, np.asarray(amplitude.frequency_support.center) * 0.5 * (
        amplitude.frequency_support.r0 + amplitude.frequency_support.r1))
    flags = {
        "c1": c1dev <= c_cone,
        "c2": c2dev <= c_cone,
        "d1": d1a <= c_cone and d1b <= c_cone / (2 * n),
        "d2": d2 <= c_cone / (2 * n),
        "margin": margin >= 1.0 / (4.0 * A3) and margin > 0,
        "time_derivatives": tder <= time_bound,
        "c2plus": sig_ok,
    }
    flags["reduced"] = all(flags[k] for k in ("c1", "c2", "d1", "d2", "margin"))
    return ConditionReport(
        c1_min_sv=c1_min_sv,
        c2_eigenvalues=ev,
        reduced_constants=(A1, A2, A3),
        kflat_sup=None,
        margin=margin,
        time_derivative_sup=tder,
        deviations={"c1": c1dev, "c2": c2dev, "d1_spatial": d1a, "d1_time": d1b, "d2": d2},
        pass_flags=flags,
    )


# ---------------------------------------------------------------------------
# K-flatness


@dataclass
class KFlatReport:
    sup_norms: list          # sup over samples of max_{|alpha| = k} |d^alpha E|, k = 0..N0
    mixed_sup: dict          # sup of the mixed phase derivatives tested against K^-4
    defect: float            # max_k sup_norms[k] / K^4 (the unnormalized Taylor remainder size)
    is_kflat: bool
    K: float

    def to_dict(self) -> dict:
        return {"sup_norms": self.sup_norms, "mixed_sup": self.mixed_sup, "defect": self.defect,
                "is_kflat": self.is_kflat, "K": self.K}


def _quadratic_model(phase: PhaseField, xbar):
    """Sympy expression of w_{n-1} h(e) + d_{w'} h(e) . w' + <d^2_{w'w'} h(e) w', w'> / (2 w_{n-1})."""
    m = phase.n - 1
    _, ws = phase_symbols(phase.n)
    e = np.zeros(m)
    e[-1] = 1.0
    h0 = float(graph_height_derivative(phase, xbar, e, (0,) * m))
    g = [float(graph_height_derivative(phase, xbar, e, unit_index(m, j))) for j in range(m - 1)]
    H = [[float(graph_height_derivative(phase, xbar, e, unit_index(m, i, j))) for j in range(m - 1)] for i in range(m - 1)]
    wl = ws[m - 1]
    expr = wl * h0 + sum(g[j] * ws[j] for j in range(m - 1))
    expr += sum(H[i][j] * ws[i] * ws[j] for i in range(m - 1) for j in range(m - 1)) / (2 * wl)
    return expr


def _remainder_derivative_fn(phase: PhaseField, xbar):
    """Callable (w, beta) -> d^beta of h_{xbar} minus its quadratic model."""
    m = phase.n - 1
    _, ws = phase_symbols(phase.n)
    model = _quadratic_model(phase, xbar)
    xbar = np.asarray(xbar, float)
    cache = {}
    eng = phase.engine
    symbolic = phase.split and isinstance(eng, SymbolicEngine)
    if symbolic:
        xs, _ = phase_symbols(phase.n)
        h_expr = eng.expression(unit_index(phase.n, phase.n - 1), (0,) * m).subs(dict(zip(xs, xbar.tolist())))
        base = h_expr - model

    def fn(w, beta):
        beta = tuple(beta)
        if symbolic:
            f = cache.get(beta)
            if f is None:
                e = base
                for j, b in enumerate(beta):
                    if b:
                        e = sp.diff(e, ws[j], b)
                f = cache[beta] = sp.lambdify(ws, e, "numpy")
            return np.broadcast_to(f(*[w[..., j] for j in range(m)]), w.shape[:-1]).astype(float)
        f = cache.get(beta)
        if f is None:
            mexpr = model
            for j, b in enumerate(beta):
                if b:
                    mexpr = sp.diff(mexpr, ws[j], b)
            f = cache[beta] = sp.lambdify(ws, mexpr, "numpy")
        mval = np.broadcast_to(f(*[w[..., j] for j in range(m)]), w.shape[:-1])
        return np.asarray(graph_height_derivative(phase, xbar, w, beta)) - mval

    return fn


def taylor_remainder_integral(phase: PhaseField, xbar, w, nodes: int = 24):
    """Integral form of the third-order remainder of h_{xbar} at w.

    sum_{|a|=3} (3/a!) int_0^1 (1-s)^2 d^a g(s z) ds z^a * w_{n-1}, z = w'/w_{n-1},
    g(z) = h_{xbar}(z, 1); Gauss-Legendre in s.
    """
    m = phase.n - 1
    w = np.atleast_2d(np.asarray(w, float))
    z = w[:, :-1] / w[:, -1:]
    s, sw = np.polynomial.legendre.leggauss(nodes)
    s, sw = 0.5 * (s + 1.0), 0.5 * sw
    total = np.zeros(len(w))
    for a in multi_indices(m - 1, 3):
        beta = tuple(a) + (0,)
        # derivatives of g(z) = h(z, 1) in z are the w'-derivatives of h at (z, 1)
        acc = np.zeros(len(w))
        for si, wi in zip(s, sw):
            pts = np.concatenate([si * z, np.ones((len(w), 1))], axis=1)
            acc += wi * (1 - si) ** 2 * np.asarray(graph_height_derivative(phase, xbar, pts, beta))
        total += 3.0 / factorial_index(a) * acc * np.prod(z ** np.asarray(a), axis=1)
    return total * w[:, -1]


def kflat_defect(phase: PhaseField, xbar, K: float, N0: int = 4, C_flat: float = 10.0, samples: int = 200,
                 mixed_order: int | None = None, sector: SectorSpec | None = None, seed: int = 0) -> KFlatReport:
    """K-flatness test of h_{xbar}: sup |d^alpha E| <= C_flat for |alpha| <= N0, E = K^4 * (h - quadratic model),
    plus the K^-4 bounds on the mixed phase derivatives."""
    if K < 2:
        raise DomainError("K must be at least 2")
    m, n = phase.n - 1, phase.n
    rng = np.random.default_rng(seed)
    sec = sector or phase.frequency_domain
    w = sec.sample(rng, samples)
    c = np.asarray(sec.center)
    w = np.concatenate([w, [c * sec.r0, c * sec.r1]], axis=0)
    rem = _remainder_derivative_fn(phase, xbar)
    sup_norms = []
    for k in range(N0 + 1):
        best = 0.0
        for beta in multi_indices(m, k):
            best = max(best, float(np.max(np.abs(rem(w, beta)))))
        sup_norms.append(best * K**4)

    mo = (N0 + 5) if mixed_order is None else mixed_order
    x = phase.spatial_domain.sample(rng, max(20, samples // 4))
    ww = sec.sample(rng, len(x))
    sp_betas = [b for k in range(2, mo + 1) for b in multi_indices(m, k) if sum(b[:-1]) >= 2]
    t_betas = [b for k in range(3, mo + 1) for b in multi_indices(m, k) if sum(b[:-1]) >= 3]
    mixed = {
        "spatial": max(_sup_over(phase, x, ww, unit_index(n, k), sp_betas) for k in range(m)),
        "time": _sup_over(phase, x, ww, unit_index(n, n - 1), t_betas),
    }
    ok = max(sup_norms) <= C_flat and all(v <= K**-4 for v in mixed.values())
    return KFlatReport(sup_norms, mixed, max(sup_norms) / K**4, bool(ok), float(K))


# ---------------------------------------------------------------------------
# Gauss-map angle estimates


@dataclass
class GaussAngleReport:
    ratio_low: float
    ratio_high: float
    lipschitz_x: float


def gauss_angle_estimates(phase: PhaseField, samples: int = 200, pair_angle: float = 0.05, pair_dist: float = 0.05,
                          seed: int = 0) -> GaussAngleReport:
    """Sampled constants c, C, C' with c ang(w, v) <= ang(G(x; w), G(x; v)) <= C ang(w, v)
    and ang(G^lam(x; w), G^lam(y; w)) <= C' |x - y| / lam."""
    rng = np.random.default_rng(seed)
    sec = phase.frequency_domain
    X = phase.spatial_domain
    x = X.sample(rng, samples)
    w = sec.sample(rng, samples)
    pert = rng.standard_normal(w.shape)
    pert -= np.sum(pert * w, axis=1, keepdims=True) * w / np.sum(w * w, axis=1, keepdims=True)
    pert /= np.linalg.norm(pert, axis=1, keepdims=True)
    ang = pair_angle * rng.random(samples)[:, None] + 1e-4
    v = np.linalg.norm(w, axis=1, keepdims=True) * (np.cos(ang) * w / np.linalg.norm(w, axis=1, keepdims=True)
                                                     + np.sin(ang) * pert)
    keep = sec.contains(v)
    g1 = _gauss_unit(phase, x[keep], w[keep])
    g2 = _gauss_unit(phase, x[keep], v[keep])
    ratio = angle_between(g1, g2) / angle_between(w[keep], v[keep])
    dx = rng.standard_normal(x.shape)
    dx *= pair_dist * rng.random((samples, 1)) / np.linalg.norm(dx, axis=1, keepdims=True)
    y = np.clip(x + dx, np.asarray(X.lo), np.asarray(X.hi))
    dist = np.linalg.norm(y - x, axis=1)
    ok = dist > 1e-9
    gx = _gauss_unit(phase, x[ok], w[ok])
    gy = _gauss_unit(phase, y[ok], w[ok])
    lip = float(np.max(angle_between(gx, gy) / dist[ok])) if np.any(ok) else 0.0
    return GaussAngleReport(float(np.min(ratio)), float(np.max(ratio)), lip)


def sample_domain(phase: PhaseField, m: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return phase.spatial_domain.sample(rng, m), phase.frequency_domain.sample(rng, m)


def euler_defect(phase: PhaseField, x, w) -> np.ndarray:
    """|d^2_ww phi . w| relative to ||d^2_ww phi|| (zero by 1-homogeneity)."""
    H = phase.hess_ww(x, w)
    v = np.einsum("...ij,...j->...i", H, np.asarray(w, float))
    return np.linalg.norm(v, axis=-1) / np.maximum(np.linalg.norm(H, axis=(-2, -1)), 1e-300)


def cone_gauss_angle(theta):
    """Angle between the circular-cone Gauss vectors of two directions at angle theta."""
    return np.arccos((1.0 + np.cos(theta)) / 2.0)

