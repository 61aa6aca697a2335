"""Parabolic rescaling of a phase on a narrow frequency sector.

A function g supported in {xi_{n-1} in [r0, r1], |xi'/xi_{n-1} - omega| <= 1/rho}
is written in the coordinates xi = (eta_{n-1} omega + L' eta' / rho, eta_{n-1}).
After the spatial change of variables x = Upsilon^lam_omega(D_rho (L^-1 y', y_n))
the operator becomes one with phase

    phi~_L(y; eta) = rho^2 phi(Upsilon_omega(D'_{1/rho} L^-1 y', y_n); xi(eta))

at the smaller scale lam / rho^2.  Here D_rho(y'', y_{n-1}, y_n) =
(rho y'', y_{n-1}, rho^2 y_n), D'_{1/rho}(y'', y_{n-1}) = (y'' / rho, y_{n-1} / rho^2)
and Upsilon_omega(y', y_n) = (y'_*, y_n) solves d_{w'} phi(y'_*, y_n; omega, 1) = y''
and phi(y'_*, y_n; omega, 1) = y_{n-1}.  L = diag(L', 1) is symmetric, so the
linear part <y', eta> is preserved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import sympy as sp

from .derivatives import phase_symbols, unit_index
from .errors import DomainError, OutOfRangeError
from .geometry import Box, SectorSpec, bump
from .phase_core import (Amplitude, PhaseField, SymbolicEngine, kflat_defect, phase_from_callable,
                         phase_from_expression, solve_Upsilon, _upsilon_jac)

RHO_MIN = 16.0
NODES_PER_WIDTH = 72      # trapezoid nodes across the support of the sector bump
TAYLOR_NODES = 16


@dataclass(frozen=True, eq=False)
class SectorFrame:
    omega: np.ndarray
    rho: float
    L: np.ndarray
    r0: float = 0.5
    r1: float = 2.0

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omega, float))
        L = np.asarray(self.L, float)
        if self.rho < 2:
            raise DomainError(f"rho must be >= 2, got {self.rho}")
        if np.linalg.norm(om) >= 1:
            raise DomainError("the sector center (omega, 1) needs |omega| < 1")
        m = len(om) + 1
        if L.shape != (m, m) or not np.allclose(L[:, -1], np.eye(m)[-1]) or abs(np.linalg.det(L)) < 1e-12:
            raise DomainError("L must be invertible with L e_{n-1} = e_{n-1}")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "L", L)

    @property
    def n(self) -> int:
        return len(self.omega) + 2

    @property
    def Lp(self) -> np.ndarray:
        return self.L[:-1, :-1]

    @property
    def C_L(self) -> float:
        return float(np.max(np.abs(self.L)))

    def xi_of_eta(self, eta) -> np.ndarray:
        """xi = (eta_{n-1} omega + L' eta' / rho, eta_{n-1})."""
        eta = np.asarray(eta, float)
        el = eta[..., -1:]
        xp = el * self.omega + (eta[..., :-1] @ self.Lp.T) / self.rho
        return np.concatenate([xp, el], axis=-1)

    def eta_of_xi(self, xi) -> np.ndarray:
        xi = np.asarray(xi, float)
        el = xi[..., -1:]
        ep = self.rho * (xi[..., :-1] - el * self.omega) @ np.linalg.inv(self.Lp).T
        return np.concatenate([ep, el], axis=-1)

    def D_rho(self, y) -> np.ndarray:
        y = np.asarray(y, float)
        out = y.copy()
        out[..., :-2] *= self.rho
        out[..., -1] *= self.rho**2
        return out

    def D_prime_inv(self, yp) -> np.ndarray:
        yp = np.asarray(yp, float)
        out = yp.copy()
        out[..., :-1] /= self.rho
        out[..., -1] /= self.rho**2
        return out

    def to_dict(self) -> dict:
        return {"omega": self.omega.tolist(), "rho": self.rho, "L": self.L.tolist(), "C_L": self.C_L,
                "r0": self.r0, "r1": self.r1}


def upsilon_omega(phase: PhaseField, omega, yp, yn) -> np.ndarray:
    """Upsilon_omega at unit scale: returns x' with (d_{w'} phi, phi)(x', y_n; omega, 1) = y'."""
    w = np.concatenate([np.asarray(omega, float), [1.0]])
    return solve_Upsilon(phase, yp, yn, w)


def spatial_map(phase: PhaseField, frame: SectorFrame, y) -> np.ndarray:
    """Unit-scale X = Upsilon_omega(D'_{1/rho} L^-1 y', y_n) for unit-scale rescaled points y."""
    y = np.atleast_2d(np.asarray(y, float))
    yp = y[:, :-1] @ np.linalg.inv(frame.L).T
    xp = upsilon_omega(phase, frame.omega, frame.D_prime_inv(yp), y[:, -1])
    return np.concatenate([xp, y[:, -1:]], axis=1)


def normalizer_hessian(phase: PhaseField, omega) -> np.ndarray:
    """d^2_{eta' eta'} d_{y_n} phi~(0, 0; e_{n-1}) before normalization.

    Equals sum_k c_k d_{x_k} d^2_{w'w'} phi at (Upsilon_omega(0, 0), 0; omega, 1) with
    c = (d Upsilon / d y_n, 1) from the implicit function theorem.
    """
    n, m = phase.n, phase.n - 1
    w = np.concatenate([np.asarray(omega, float), [1.0]])[None, :]
    xp = upsilon_omega(phase, omega, np.zeros((1, m)), np.zeros(1))
    x = np.concatenate([xp, np.zeros((1, 1))], axis=1)
    J = _upsilon_jac(phase, xp, np.zeros((1, 1)), w)[0]
    dF = np.concatenate([[phase.d(x, w, [n - 1], [j])[0] for j in range(m - 1)], [phase.d(x, w, [n - 1])[0]]])
    c = np.concatenate([-np.linalg.solve(J, dF), [1.0]])
    M = sum(c[k] * phase.hess_ww(x, w, [k])[0][:-1, :-1] for k in range(n))
    return 0.5 * (M + M.T)


def symmetric_normalizer(M) -> np.ndarray:
    """L = diag(M^{-1/2}, 1) with the symmetric positive root, so L'^T M L' = I."""
    M = np.atleast_2d(np.asarray(M, float))
    ev, U = np.linalg.eigh(0.5 * (M + M.T))
    if np.any(ev <= 0):
        raise DomainError("the normalizing Hessian is not positive definite")
    m = len(M) + 1
    L = np.eye(m)
    L[:-1, :-1] = (U / np.sqrt(ev)) @ U.T
    return L


def _split_q(phase: PhaseField):
    xs, ws = phase_symbols(phase.n)
    eng = phase.engine
    if not (phase.split and isinstance(eng, SymbolicEngine)):
        return None
    return sp.expand(eng.expr - sum(xs[k] * ws[k] for k in range(phase.n - 1)))


def _closed_form_tilde(phase: PhaseField, frame: SectorFrame):
    """phi~_L for a split phase <x', w> + q(x_n; w): <y', eta> + rho^2 (first-order Taylor remainder of q)."""
    n = phase.n
    xs, ws = phase_symbols(n)
    q = _split_q(phase)
    rho = sp.Float(frame.rho)
    el = ws[n - 2]
    Lp = sp.Matrix(frame.Lp.tolist())
    etap = sp.Matrix(ws[: n - 2])
    shift = Lp * etap / rho
    xi0 = [el * sp.Float(o) for o in frame.omega] + [el]
    xi = [xi0[i] + shift[i] for i in range(n - 2)] + [el]
    sub = lambda pt: {ws[i]: pt[i] for i in range(n - 1)}   # noqa: E731
    qxi = q.subs(sub(xi), simultaneous=True)
    q0 = q.subs(sub(xi0), simultaneous=True)
    lin = sum(sp.diff(q, ws[i]).subs(sub(xi0), simultaneous=True) * shift[i] for i in range(n - 2))
    rem = rho**2 * (qxi - q0 - lin)
    # w_{n-1} > 0 on every sector; a positive stand-in removes |w_{n-1}| left over from sqrt(w_{n-1}^2)
    pos = sp.Symbol("w_pos", positive=True)
    rem = rem.subs(el, pos).subs(pos, el)
    return sum(xs[k] * ws[k] for k in range(n - 1)) + rem


@dataclass(eq=False)
class RescaledData:
    phase_tilde: PhaseField
    amplitude_tilde: object
    frame: SectorFrame
    source: PhaseField = field(repr=False)
    normalization_residual: float = 0.0
    route: str = "closed-form"

    def tilde_value(self, y, eta) -> np.ndarray:
        """phi~_L(y; eta) by the composition formula (unit-scale y), independent of phase_tilde."""
        y = np.atleast_2d(np.asarray(y, float))
        X = spatial_map(self.source, self.frame, y)
        return self.frame.rho**2 * self.source.value(X[:, None, :] if np.ndim(eta) > 1 else X,
                                                     self.frame.xi_of_eta(eta))

    def tilde_value_taylor(self, y, eta, nodes: int = TAYLOR_NODES) -> np.ndarray:
        """<y', eta> + int_0^1 (1 - r) <d^2_{w'w'} phi(X; xi_r) L'eta', L'eta'> dr; one y, many eta."""
        fr = self.frame
        y = np.asarray(y, float)
        X = spatial_map(self.source, fr, y[None])[0]
        eta = np.atleast_2d(np.asarray(eta, float))
        v = eta[:, :-1] @ fr.Lp.T
        r, wr = np.polynomial.legendre.leggauss(nodes)
        r, wr = 0.5 * (r + 1), 0.5 * wr
        acc = np.zeros(len(eta))
        for ri, wi in zip(r, wr):
            xi = np.concatenate([eta[:, -1:] * fr.omega + ri * v / fr.rho, eta[:, -1:]], axis=1)
            H = self.source.hess_ww(X, xi)[:, :-1, :-1]
            acc += wi * (1 - ri) * np.einsum("si,sij,sj->s", v, H, v)
        return eta @ y[:-1] + acc

    def to_dict(self) -> dict:
        return {"frame": self.frame.to_dict(), "lambda_tilde": self.phase_tilde.lam, "route": self.route,
                "normalization_residual": self.normalization_residual}


class PulledBackAmplitude:
    """a~_L(y; eta) = a(Upsilon_omega(D'_{1/rho} L^-1 y', y_n); xi(eta))."""

    def __init__(self, amplitude, source: PhaseField, frame: SectorFrame):
        self.amplitude = amplitude
        self.source = source
        self.frame = frame

    def __call__(self, y, eta):
        if self.amplitude is None:
            return np.ones(np.broadcast_shapes(np.shape(y)[:-1], np.shape(eta)[:-1]))
        X = spatial_map(self.source, self.frame, np.reshape(y, (-1, self.source.n))).reshape(np.shape(y))
        return self.amplitude(X, self.frame.xi_of_eta(eta))


def build_rescaling(phase: PhaseField, a, omega, rho: float, L=None) -> RescaledData:
    """Rescaled phase and amplitude for the 1/rho-sector around (omega, 1).

    ``L`` overrides the symmetric normalizer (used for negative controls).
    Split closed-form phases get a closed-form phi~_L; others use the
    composition formula with finite-difference derivatives.
    """
    omega = np.atleast_1d(np.asarray(omega, float))
    if len(omega) != phase.n - 2:
        raise DomainError(f"omega must have n - 2 = {phase.n - 2} components")
    sec = phase.frequency_domain
    try:
        M = normalizer_hessian(phase, omega)
    except OutOfRangeError as exc:
        raise DomainError(f"Upsilon solve failed at the sector center: {exc}") from exc
    L = symmetric_normalizer(M) if L is None else np.asarray(L, float)
    frame = SectorFrame(omega, float(rho), L, sec.r0, sec.r1)
    lam_t = phase.lam / rho**2
    e = np.zeros(phase.n - 1)
    e[-1] = 1.0
    cone = math.atan(float(np.linalg.norm(np.linalg.inv(frame.Lp), 2)))
    tsec = SectorSpec(tuple(e), min(math.pi, max(cone, 1e-3)), sec.r0, sec.r1)
    if _split_q(phase) is not None:
        expr = _closed_form_tilde(phase, frame)
        tilde = phase_from_expression(expr, phase.n, lam_t, tsec, phase.spatial_domain, name=f"rescaled:{phase.evaluator}")
        route = "closed-form"
    else:
        def fn(y, eta):
            y, eta = np.broadcast_arrays(np.asarray(y, float), np.asarray(eta, float)[..., :1] * 0 + eta)
            yy = y.reshape(-1, phase.n)
            X = spatial_map(phase, frame, yy)
            return (rho**2 * phase.value(X, frame.xi_of_eta(eta.reshape(-1, phase.n - 1)))).reshape(y.shape[:-1])

        tilde = phase_from_callable(fn, phase.n, lam_t, tsec, phase.spatial_domain)
        route = "composition"
    n = phase.n
    Ht = np.array([[tilde.partial(np.zeros(n), e, unit_index(n, n - 1), unit_index(n - 1, i, j))
                     for j in range(n - 2)] for i in range(n - 2)], dtype=float)
    resid = float(np.max(np.abs(Ht - np.eye(n - 2))))
    return RescaledData(tilde, PulledBackAmplitude(a, phase, frame), frame, phase, resid, route)


# ---------------------------------------------------------------------------
# inputs and direct quadrature


def sector_input(frame: SectorFrame, seed: int = 0, modes: int = 3, max_freq: float = 2.0):
    """g(xi) = radial bump * angular bump(rho |xi'/xi_{n-1} - omega|) * random smooth phase, a xi-callable."""
    rng = np.random.default_rng(seed)
    k = rng.uniform(-max_freq, max_freq, (modes, frame.n - 1))
    c = rng.standard_normal(modes) + 1j * rng.standard_normal(modes)
    r0, r1 = frame.r0, frame.r1

    def g(xi):
        xi = np.asarray(xi, float)
        el = xi[..., -1]
        rad = bump((2 * el - r0 - r1) / (r1 - r0))
        ang = bump(frame.rho * np.linalg.norm(xi[..., :-1] / np.where(el > 0, el, 1)[..., None] - frame.omega, axis=-1))
        mod = np.exp(1j * np.tensordot(xi, k.T, axes=1)) @ c / modes
        return rad * ang * (1.0 + 0.5 * mod)

    return g


def _trapezoid(lo, hi, counts):
    axes = [np.linspace(a, b, m) for a, b, m in zip(lo, hi, counts)]
    h = np.prod([(b - a) / (m - 1) for a, b, m in zip(lo, hi, counts)])
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    return grid, h


def xi_nodes(frame: SectorFrame, per_width: int = NODES_PER_WIDTH):
    """Uniform nodes on a box around the xi-support (the integrand vanishes on its boundary)."""
    r0, r1, rho, om = frame.r0, frame.r1, frame.rho, frame.omega
    lo = [min(r0 * o, r1 * o) - r1 / rho for o in om] + [r0]
    hi = [max(r0 * o, r1 * o) + r1 / rho for o in om] + [r1]
    width = 2 * r0 / rho
    counts = [max(per_width, int(math.ceil(per_width * (b - a) / width)) + 1) for a, b in zip(lo[:-1], hi[:-1])]
    counts.append(per_width)
    return _trapezoid(lo, hi, counts)


def eta_nodes(frame: SectorFrame, per_width: int = NODES_PER_WIDTH):
    r0, r1 = frame.r0, frame.r1
    s = r1 * float(np.linalg.norm(np.linalg.inv(frame.Lp), 2))
    lo = [-s] * (frame.n - 2) + [r0]
    hi = [s] * (frame.n - 2) + [r1]
    counts = [max(per_width, int(math.ceil(per_width * s / r0)) + 1)] * (frame.n - 2) + [per_width]
    return _trapezoid(lo, hi, counts)


def direct_operator(phase_fn, points, nodes, weights, amp=None, amp_points=None, amp_nodes=None,
                    chunk: int = 4_000_000) -> np.ndarray:
    """sum_j exp(i phase_fn(x, node_j)) amp(x, w_j) weights_j at each row x of ``points``.

    Product amplitudes (Amplitude instances) are split into a1(x) a2(w) and
    evaluated once per point and once per node.  ``amp_points``/``amp_nodes``
    are the coordinates fed to the amplitude (default: points/nodes).
    """
    keep = np.abs(weights) > 0
    nodes, weights = nodes[keep], weights[keep]
    ap = points if amp_points is None else amp_points
    an = nodes if amp_nodes is None else amp_nodes[keep]
    split = amp is None or isinstance(amp, Amplitude)
    if amp is None:
        fx, fw = np.ones(len(points)), weights
    elif split:
        fx, fw = amp.a1(ap), weights * amp.a2(an)
    out = np.empty(len(points), complex)
    step = max(1, chunk // max(1, len(nodes)))
    for s in range(0, len(points), step):
        sl = slice(s, s + step)
        E = np.exp(1j * phase_fn(points[sl, None, :], nodes[None]))
        if split:
            out[sl] = fx[sl] * (E @ fw)
        else:
            out[sl] = np.sum(E * amp(ap[sl, None, :], an[None]) * weights, axis=1)
    return out


def quadrature_density(frame: SectorFrame, lam_tilde: float, y_box: float, base: int = 32) -> int:
    """Trapezoid nodes per bump width: a floor plus one per radian of phase variation across it."""
    return int(base + math.ceil(lam_tilde * y_box * frame.r1 * 2))


def verify_identity(phase: PhaseField, a, g, rescaled: RescaledData, sample_count: int = 64, seed: int = 0,
                    per_width: int | None = None, y_box: float = 0.25) -> float:
    """max |lhs - rhs| / (|lhs| + |rhs| + eps) over random rescaled points.

    lhs: T^lam g at x = lam Upsilon_omega(D'_{1/rho} L^-1 Y', Y_n), quadrature over xi.
    rhs: T~^{lam/rho^2} g~_L at y = (lam / rho^2) Y, quadrature over eta with
    g~_L = |det L| rho^{-(n-2)} g(xi(eta)) and amplitude a(X; xi(eta)).
    The spatial map uses rescaled.frame and the phase is rescaled.phase_tilde,
    so an inconsistent frame shows up as a large error.  Unit-scale Y is
    uniform in [-y_box, y_box]^n.
    """
    fr = rescaled.frame
    n = phase.n
    rng = np.random.default_rng(seed)
    Y = rng.uniform(-y_box, y_box, (sample_count, n))
    lam = phase.lam
    tilde = rescaled.phase_tilde
    lam_t = tilde.lam
    pw = quadrature_density(fr, lam_t, y_box) if per_width is None else per_width

    X = spatial_map(phase, fr, Y)
    xn, hx = xi_nodes(fr, pw)
    gx = np.asarray(g(xn)) * hx
    lhs = direct_operator(lambda P, W: lam * phase.value(P, W), X, xn, gx, a)

    en, he = eta_nodes(fr, pw)
    ge = abs(np.linalg.det(fr.L)) * fr.rho ** (-(n - 2)) * np.asarray(g(fr.xi_of_eta(en))) * he
    rhs = direct_operator(lambda P, W: lam_t * tilde.value(P, W), Y, en, ge, a,
                          amp_points=X, amp_nodes=fr.xi_of_eta(en))
    if not np.any(gx) and not np.any(ge):
        return 0.0
    err = np.abs(lhs - rhs) / (np.abs(lhs) + np.abs(rhs) + np.finfo(float).eps)
    return float(np.max(err))


def negative_control(phase: PhaseField, a, g, rescaled: RescaledData, factor: float = 2.0, **kw) -> float:
    """verify_identity with the spatial map built from a wrong normalizer (L' scaled by ``factor``)."""
    fr = rescaled.frame
    L = fr.L.copy()
    L[:-1, :-1] *= factor
    wrong = RescaledData(rescaled.phase_tilde, rescaled.amplitude_tilde, SectorFrame(fr.omega, fr.rho, L, fr.r0, fr.r1),
                         rescaled.source, rescaled.normalization_residual, rescaled.route)
    return verify_identity(phase, a, g, wrong, **kw)


# ---------------------------------------------------------------------------
# flatness and L^p scaling


class FlatnessGain(NamedTuple):
    defect_before: float
    defect_after: float
    gain: float
    kflat_after: bool
    K_after: float


def flatness_gain(rescaled: RescaledData, K: float, rho: float | None = None, xbar=None, aperture: float = 0.3,
                  samples: int = 200, seed: int = 0) -> FlatnessGain:
    """Size of the third-order Taylor remainder of h before and after rescaling.

    Both are measured on the sector of the given aperture around e_{n-1}
    (in xi for the source phase, in eta for the rescaled one), so the
    rescaled measurement covers only a 1/rho-fraction of the original
    frequencies.  gain = before / after (1 when both vanish).  The rescaled
    phase is tested for K'-flatness at K' = K rho^(1/4) / 4.
    """
    rho = rescaled.frame.rho if rho is None else rho
    src, tilde = rescaled.source, rescaled.phase_tilde
    n = src.n
    xbar = np.zeros(n) if xbar is None else np.asarray(xbar, float)
    e = np.zeros(n - 1)
    e[-1] = 1.0
    fr = rescaled.frame
    before = kflat_defect(src, xbar, K, samples=samples, seed=seed,
                          sector=SectorSpec(tuple(e), aperture, fr.r0, fr.r1)).defect
    K_after = K * rho**0.25 / 4
    rep = kflat_defect(tilde, xbar, max(K_after, 2.0), samples=samples, seed=seed,
                       sector=SectorSpec(tuple(e), aperture, fr.r0, fr.r1))
    after = rep.defect
    tiny = 1e-13 * max(1.0, before)
    if after <= tiny:
        gain = 1.0 if before <= tiny else math.inf
        after = 0.0 if after <= tiny else after
    else:
        gain = before / after
    return FlatnessGain(float(before), float(after), float(gain), bool(rep.is_kflat and K_after >= 2), float(K_after))


def predicted_lp_exponent(n: int, p: float) -> float:
    return 2 * (n - 1) / p - (n - 2)


@dataclass
class ScanResult:
    p: float
    rho_list: list
    ratios: list
    slope: float
    stderr: float
    predicted: float

    @property
    def deviation(self) -> float:
        return abs(self.slope - self.predicted)

    def to_dict(self) -> dict:
        return {"p": self.p, "rho_list": list(self.rho_list), "ratios": list(self.ratios), "slope": self.slope,
                "stderr": self.stderr, "predicted": self.predicted}


def lp_rescaling_scan(p: float, rho_list, phase: PhaseField, a, g_tilde, R: float, omega=None,
                      spacing: float = 0.35, per_width: int = 40) -> ScanResult:
    """Slope in rho of ||T^lam g_rho||_{L^p(E_rho)} / ||g_rho||_{L^p}.

    g_rho(xi) = g_tilde(eta(xi)) is the fixed profile g_tilde placed on the
    1/rho-sector around (omega, 1); E_rho is the image of the ball B(0, R) of
    the rescaled problem under y -> Upsilon^lam_omega(D_rho (L^-1 y', y_n)).
    T^lam g_rho is evaluated directly by quadrature over xi at the image of a
    uniform y-grid, and the L^p norm over E_rho includes the Jacobian
    rho^n |det L^-1| |det d Upsilon|.
    """
    from .kakeya_experiment import exponent_fit

    n = phase.n
    omega = np.zeros(n - 2) if omega is None else np.atleast_1d(np.asarray(omega, float))
    ax = np.arange(-R, R + spacing / 2, spacing)
    grid = np.stack(np.meshgrid(*[ax] * n, indexing="ij"), axis=-1).reshape(-1, n)
    grid = grid[np.linalg.norm(grid, axis=1) <= R]
    dv = spacing**n
    ratios = []
    for rho in rho_list:
        resc = build_rescaling(phase, a, omega, rho)
        fr = resc.frame
        lam_t = phase.lam / rho**2
        Y = grid / lam_t
        yp = Y[:, :-1] @ np.linalg.inv(fr.L).T
        w = np.concatenate([omega, [1.0]])
        up = solve_Upsilon(phase, fr.D_prime_inv(yp), Y[:, -1], w, full=True)
        X = np.concatenate([up.y, Y[:, -1:]], axis=1)
        jac = np.abs(np.linalg.det(up.jacobian)) * rho**n / abs(np.linalg.det(fr.L))
        xn, hx = xi_nodes(fr, per_width)

        def g_rho(xi):
            return np.asarray(g_tilde(fr.eta_of_xi(xi)))

        gx = g_rho(xn) * hx
        vals = direct_operator(lambda P, W: phase.lam * phase.value(P, W), X, xn, gx, a)
        lhs = (np.sum(np.abs(vals) ** p * jac) * dv) ** (1 / p)
        gnorm = (np.sum(np.abs(g_rho(xn)) ** p) * hx) ** (1 / p)
        ratios.append(float(lhs / gnorm))
    slope, err = exponent_fit(list(rho_list), ratios)
    return ScanResult(float(p), [float(r) for r in rho_list], ratios, float(slope), float(err),
                      predicted_lp_exponent(n, p))


def unit_profile(n: int, r0: float, r1: float, seed: int = 0, modes: int = 3):
    """Fixed profile on {|eta'| <= eta_{n-1}, eta_{n-1} in [r0, r1]} for rescaling scans."""
    rng = np.random.default_rng(seed)
    k = rng.uniform(-2, 2, (modes, n - 1))
    c = rng.standard_normal(modes) + 1j * rng.standard_normal(modes)

    def g(eta):
        eta = np.asarray(eta, float)
        el = eta[..., -1]
        rad = bump((2 * el - r0 - r1) / (r1 - r0))
        ang = bump(np.linalg.norm(eta[..., :-1], axis=-1) / np.where(el > 0, el, 1))
        return rad * ang * (1.0 + 0.5 * (np.exp(1j * np.tensordot(eta, k.T, axes=1)) @ c) / modes)

    return g
