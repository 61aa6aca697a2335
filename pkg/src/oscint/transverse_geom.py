"""Tangency of wave packets to varieties and the narrow/broad split of frequencies.

For a subspace V of R^n (dim m) and a point xbar, the set
L = {u : A(-grad h(u), 1) = 0} collects the frequency directions whose
Gauss normal lies in V; here h is the graph height h_xbar and the rows of A
span the orthogonal complement of V.  A direction eta in L is narrow when
it is nearly orthogonal to V- = {x' : (x', 0) in V}; otherwise the tangent
space of L at eta produces a subspace W transverse to V.

All xbar arguments are unit-scale points.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .derivatives import unit_index
from .errors import DegeneratePhaseError, DomainError
from .geometry import Subspace, angle_between, line_angle, principal_angles
from .partition import Variety
from .phase_core import PhaseField, gauss_map, graph_height_derivative, graph_height_hessian

NARROW_C = 10.0          # narrow L-directions must lie within NARROW_C K^-2 of +-eta
DEDUP_ANGLE = 1e-3
L_RESIDUAL_TOL = 1e-9
PROJECTION_WARN = 0.05


# ---------------------------------------------------------------------------
# tangency


@dataclass(frozen=True)
class TangencyConfig:
    R: float
    delta_m: float
    c_tang: float = 1.0
    C_tang: float = 2.0
    eps: float = 0.1

    def __post_init__(self):
        if self.R < 4:
            raise DomainError(f"R must be >= 4, got {self.R}")
        if not (0 < self.delta_m < self.eps):
            raise DomainError(f"delta_m must lie in (0, {self.eps}), got {self.delta_m}")

    @property
    def distance_bound(self) -> float:
        return self.R ** (0.5 + self.delta_m)

    @property
    def angle_bound(self) -> float:
        return self.c_tang * self.R ** (-0.5 + self.delta_m)


@dataclass
class TangencyResult:
    indices: np.ndarray
    max_distance: np.ndarray
    max_angle: np.ndarray
    projection_failures: float

    def to_dict(self) -> dict:
        return {"indices": self.indices.tolist(), "max_distance": self.max_distance.tolist(),
                "max_angle": self.max_angle.tolist(), "projection_failures": self.projection_failures}


def _embed_tangent(T: Subspace, keep: np.ndarray, n: int) -> Subspace:
    """Tangent space of the cylinder Z x R^(dropped coords) in R^n."""
    B = np.zeros((n, T.dim + n - len(keep)))
    B[keep, :T.dim] = T.basis
    dropped = [i for i in range(n) if i not in set(keep.tolist())]
    for j, i in enumerate(dropped):
        B[i, T.dim + j] = 1.0
    return Subspace(B)


def tangent_packets(omegas, cores, variety: Variety, config: TangencyConfig, phase: PhaseField,
                    coords=None) -> TangencyResult:
    """Packets whose sampled cores stay near Z with Gauss directions nearly tangent to Z.

    ``cores`` has shape (packets, samples, n) in lam-scale coordinates and
    ``omegas`` shape (packets, n - 1).  ``coords`` lists the coordinates Z
    lives in (Z is extended as a cylinder in the others); default all.
    Only samples inside B(0, R) are tested.  The tangent angle is measured at
    the nearest point of Z, which lies within C_tang R^(1/2 + delta_m) of x
    whenever the distance condition holds.
    """
    cores = np.asarray(cores, float)
    omegas = np.atleast_2d(np.asarray(omegas, float))
    P, S, n = cores.shape
    keep = np.arange(n) if coords is None else np.asarray(coords)
    if variety.ambient_dim != len(keep):
        raise DomainError("variety dimension does not match the chosen coordinates")
    inside = np.linalg.norm(cores, axis=-1) <= config.R
    flat = cores.reshape(-1, n)
    y = flat[:, keep]
    z, conv = variety.project(y)
    dist = np.linalg.norm(y - z, axis=-1)
    fail = float(np.mean(~conv[inside.ravel()])) if inside.any() else 0.0
    if fail > PROJECTION_WARN:
        warnings.warn(f"Newton projection failed on {fail:.1%} of core samples; tangency is unreliable",
                      RuntimeWarning, stacklevel=2)
    dist = np.where(conv, dist, variety.distance(y)).reshape(P, S)
    G = gauss_map(phase, flat, np.repeat(omegas, S, axis=0)).reshape(P, S, n)
    ang = np.full((P, S), np.inf)
    for p in range(P):
        for s in range(S):
            if not inside[p, s] or not conv[p * S + s]:
                continue
            T = _embed_tangent(variety.tangent_space(z[p * S + s]), keep, n)
            ang[p, s] = float(T.angle_to_vector(G[p, s]))
    dmax = np.where(inside, dist, 0.0).max(axis=1)
    amax = np.where(inside, ang, 0.0).max(axis=1)
    ok = (dmax <= config.distance_bound) & (amax <= config.angle_bound) & inside.any(axis=1)
    return TangencyResult(np.flatnonzero(ok), dmax, amax, fail)


def kakeya_core_samples(family, samples: int = 33):
    """(omegas, cores) of a Kakeya tube family: cores (x'', x_{n-1}, x_n) at `samples` heights."""
    xn = np.linspace(-family.lam, family.lam, samples)
    c = family.cores(xn[None, :], np.arange(family.count)[:, None])   # (tubes, samples, n - 1)
    pts = np.concatenate([c, np.broadcast_to(xn[None, :, None], c.shape[:-1] + (1,))], axis=-1)
    omegas = np.concatenate([family.thetas, np.ones((family.count, 1))], axis=1)
    return omegas, pts


def tube_core_samples(tubes):
    """(omegas, cores) from curved wave-packet tubes with a common sample count."""
    omegas = np.array([t.omega for t in tubes])
    cores = np.array([np.concatenate([t.core, t.xn[:, None]], axis=1) for t in tubes])
    return omegas, cores


# ---------------------------------------------------------------------------
# the set L


def annihilator(V: Subspace) -> np.ndarray:
    """Rows: orthonormal basis of the complement of V."""
    return V.complement().basis.T


def v_minus(V: Subspace) -> Subspace:
    """{x' in R^(n-1) : (x', 0) in V}; dimension dim V - 1 is required."""
    A = annihilator(V)
    n = V.ambient
    Vm = Subspace(linalg.null_space(A[:, : n - 1])) if len(A) else Subspace(np.eye(n - 1))
    if Vm.dim != V.dim - 1:
        raise DegeneratePhaseError(f"dim V- = {Vm.dim} but dim V - 1 = {V.dim - 1}; V lies in the horizontal plane")
    return Vm


def height_gradient(phase: PhaseField, xbar, u) -> np.ndarray:
    m = phase.n - 1
    u = np.asarray(u, float)
    return np.stack([graph_height_derivative(phase, xbar, u, unit_index(m, i)) for i in range(m)], axis=-1)


def l_residual(phase: PhaseField, xbar, V: Subspace, u) -> np.ndarray:
    """A(-grad h(u), 1) for each direction u."""
    A = annihilator(V)
    g = height_gradient(phase, xbar, u)
    N = np.concatenate([-g, np.ones(g.shape[:-1] + (1,))], axis=-1)
    return N @ A.T


def _seed_directions(phase: PhaseField, count: int, rng: np.random.Generator) -> np.ndarray:
    sec = phase.frequency_domain
    c = np.asarray(sec.center)
    out = []
    while sum(len(o) for o in out) < count:
        z = rng.standard_normal((4 * count, len(c)))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        out.append(z[angle_between(z, c) <= sec.aperture])
    return np.concatenate(out)[:count]


def _in_sector(phase: PhaseField, u) -> np.ndarray:
    sec = phase.frequency_domain
    return angle_between(u, np.asarray(sec.center)) <= sec.aperture + 1e-12


def dedup_directions(u, angle: float = DEDUP_ANGLE) -> np.ndarray:
    kept = []
    for v in np.atleast_2d(u):
        if all(angle_between(v, k) > angle for k in kept):
            kept.append(v)
    return np.array(kept).reshape(-1, np.shape(u)[-1])


def level_set_L(phase: PhaseField, xbar, V: Subspace, mesh_density: int = 6, seed: int = 0,
                maxit: int = 40, tol: float = 1e-12) -> np.ndarray:
    """Unit directions u with A(-grad h(u), 1) = 0, by Newton from random seeds in the frequency sector.

    Seeds: mesh_density^(n-2) directions (at least 32).  When dim V > 2 the
    solutions form a manifold and the returned points sample it.  L is
    radially invariant, so only unit directions are reported.
    """
    n = phase.n
    if V.ambient != n:
        raise DomainError(f"V must live in R^{n}")
    v_minus(V)
    A = annihilator(V)
    Ap = A[:, : n - 1]
    rng = np.random.default_rng(seed)
    u = _seed_directions(phase, max(32, mesh_density ** (n - 2)), rng)
    for _ in range(maxit):
        F = l_residual(phase, xbar, V, u)
        H = graph_height_hessian(phase, xbar, u)
        J = np.concatenate([-np.einsum("ij,sjk->sik", Ap, H), 2 * u[:, None, :]], axis=1)
        r = np.concatenate([F, (np.sum(u * u, axis=1) - 1)[:, None]], axis=1)
        step = np.stack([np.linalg.lstsq(J[s], r[s], rcond=None)[0] for s in range(len(u))])
        step = np.where(np.isfinite(step), step, 0.0)
        # damp large steps so Newton stays on the chart of the sector
        sz = np.linalg.norm(step, axis=1, keepdims=True)
        u = u - step * np.minimum(1.0, 0.5 / np.maximum(sz, 1e-300))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        if np.all(sz <= tol):
            break
    res = np.linalg.norm(l_residual(phase, xbar, V, u), axis=1)
    good = (res <= L_RESIDUAL_TOL) & _in_sector(phase, u)
    return dedup_directions(u[good])


# ---------------------------------------------------------------------------
# narrow / broad


def transversality_angle(V: Subspace, W: Subspace) -> float:
    """Smallest principal angle between V and W."""
    ang = principal_angles(V, W)
    if len(ang) == 0:
        raise DomainError("both subspaces must be nontrivial")
    return float(ang[0])


def build_W(phase: PhaseField, xbar, V: Subspace, eta, A=None) -> Subspace:
    """W = complement of <T_eta L, e_n>, where T_eta L is orthogonal to the normals Hess h(eta) alpha_i.

    ``A`` optionally overrides the annihilating matrix (any full-rank rows
    vanishing on V give the same W).
    """
    n = phase.n
    A = annihilator(V) if A is None else np.atleast_2d(np.asarray(A, float))
    if A.shape[1] != n or np.linalg.matrix_rank(A) != n - V.dim or np.max(np.abs(A @ V.basis)) > 1e-8 * max(1, np.abs(A).max()):
        raise DomainError("A must be a full-rank matrix annihilating V")
    eta = np.asarray(eta, float)
    H = graph_height_hessian(phase, xbar, eta / np.linalg.norm(eta))
    normals = (H @ A[:, : n - 1].T).T
    Vt = Subspace.span(normals.T, rtol=1e-8)
    if Vt.dim != n - V.dim:
        raise DegeneratePhaseError(f"normals span dimension {Vt.dim}, expected {n - V.dim}")
    TL = Vt.complement()
    Vbar = np.zeros((n, TL.dim + 1))
    Vbar[: n - 1, : TL.dim] = TL.basis
    Vbar[n - 1, TL.dim] = 1.0
    W = Subspace(Vbar).complement()
    if W.dim + V.dim != n:
        raise DegeneratePhaseError("dim V + dim W != n")
    return W


@dataclass
class NarrowBroadReport:
    eta: np.ndarray
    classification: str
    V_minus: Subspace
    L_samples: list
    W: Subspace | None
    angle_VW: float | None
    angle_eta_Vminus: float
    K: float
    max_L_deviation: float | None = None
    ok: bool = True
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "eta": self.eta.tolist(),
            "classification": self.classification,
            "V_minus": self.V_minus.basis.tolist(),
            "L_samples": [list(map(float, u)) for u in self.L_samples],
            "W": None if self.W is None else self.W.basis.tolist(),
            "angle_VW": self.angle_VW,
            "angle_eta_Vminus": self.angle_eta_Vminus,
            "K": self.K,
            "max_L_deviation": self.max_L_deviation,
            "ok": self.ok,
            "notes": list(self.notes),
        }


def is_narrow(angle_eta_vminus: float, K: float) -> bool:
    """Strict inequality: the boundary angle pi/2 - K^-2 counts as broad."""
    return angle_eta_vminus > math.pi / 2 - K**-2


def classify(phase: PhaseField, xbar, V: Subspace, eta, K: float, mesh_density: int = 6, seed: int = 0,
             eta_tol: float = 1e-8) -> NarrowBroadReport:
    eta = np.asarray(eta, float)
    eta = eta / np.linalg.norm(eta)
    res = float(np.linalg.norm(l_residual(phase, xbar, V, eta)))
    if res > eta_tol:
        raise DomainError(f"eta is not in L (residual {res:.2e})")
    Vm = v_minus(V)
    ang = float(Vm.angle_to_vector(eta)) if Vm.dim else math.pi / 2
    L = level_set_L(phase, xbar, V, mesh_density, seed)
    if is_narrow(ang, K):
        dev = float(np.max(line_angle(L, eta))) if len(L) else 0.0
        ok = dev <= NARROW_C * K**-2
        return NarrowBroadReport(eta, "narrow", Vm, list(L), None, None, ang, K, dev, ok)
    W = build_W(phase, xbar, V, eta)
    a = transversality_angle(V, W)
    return NarrowBroadReport(eta, "broad", Vm, list(L), W, a, ang, K, None, a >= 0.1 * K**-4)


# ---------------------------------------------------------------------------
# random configurations


def cone_normal(phase: PhaseField, xbar, u) -> np.ndarray:
    """Unnormalized normal (-grad h(u), 1)."""
    g = height_gradient(phase, xbar, u)
    return np.concatenate([-g, np.ones(g.shape[:-1] + (1,))], axis=-1)


def random_configuration(phase: PhaseField, xbar, K: float, rng: np.random.Generator, narrow: bool | None = None):
    """(V, eta): eta uniform in the frequency sector, V = <normal(eta)> + V- with dim V- = m - 1.

    With ``narrow=True`` V- is tilted from the complement of eta by less than
    K^-2; with ``narrow=False`` the tilt exceeds it; None draws V- uniformly.
    """
    n = phase.n
    eta = _seed_directions(phase, 1, rng)[0]
    m = int(rng.integers(2, n))
    d = m - 1
    if narrow is None:
        Vm = rng.standard_normal((n - 1, d))
    else:
        perp = linalg.null_space(eta[None, :])
        Vm = perp @ linalg.orth(rng.standard_normal((n - 2, d)))
        lo, hi = (0.0, 0.9 * K**-2) if narrow else (1.5 * K**-2, math.pi / 2 - 0.05)
        tilt = rng.uniform(lo, hi)
        Vm[:, 0] = math.cos(tilt) * Vm[:, 0] + math.sin(tilt) * eta
    basis = np.zeros((n, m))
    basis[: n - 1, :d] = Vm
    basis[:, d] = cone_normal(phase, xbar, eta)
    return Subspace.span(basis), eta


# ---------------------------------------------------------------------------
# transverse equidistribution, as a scaling experiment


@dataclass
class EquidistributionScan:
    R: float
    rho: list
    ratios: list            # int_{B cap N_{rho^1/2}(Z)} |Tg|^2 / (R^1/2 ||g||^2)
    uniform: list           # the same ratio for a field of constant modulus on B
    slope: float
    uniform_slope: float
    predicted: float        # (n - m) / 2

    def to_dict(self) -> dict:
        return {"R": self.R, "rho": list(self.rho), "ratios": list(self.ratios), "uniform": list(self.uniform),
                "slope": self.slope, "uniform_slope": self.uniform_slope, "predicted": self.predicted}


class _PacketSum:
    """sum_k c_k exp(-i <v_k, w>) exp(-|w - theta_k|^2 / (2 sigma^2))."""

    def __init__(self, thetas, vs, cs, sigma):
        self.thetas, self.vs, self.cs, self.sigma = thetas, vs, cs, sigma

    def __call__(self, w):
        w = np.asarray(w, float)
        out = np.zeros(w.shape[:-1], dtype=complex)
        for th, v, c in zip(self.thetas, self.vs, self.cs):
            r2 = np.sum((w - th) ** 2, axis=-1) / self.sigma**2
            out += c * np.exp(-1j * (w @ v) - 0.5 * r2)
        return out

    @property
    def spatial_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.vs, axis=1))) + 8.0 / self.sigma


def equidistribution_scan(R: float = 256.0, rho_list=(16, 32, 64, 128), lam: float = 4096.0, packets: int = 24,
                          seed: int = 0, spacing: float = 0.5) -> EquidistributionScan:
    """Mass of T^lam g near the plane Z = {x_1 = 0} for g built from packets tangent to Z.

    Model cone in R^3, B = B(xbar, R^1/2) with xbar = (0, 0, R/2) on Z.  The
    packets have frequency width R^-1/2 around (0, t) and positions within
    R^1/2 / 2 of Z, so their tubes run inside N_{R^1/2}(Z).  The ratio is
    compared against (rho / R)^{(n - m)/2}; no bound is asserted.
    """
    from .geometry import SectorSpec
    from .kakeya_experiment import exponent_fit
    from .oscquad import GridRegion, apply_operator, make_mesh
    from .phase_core import build_builtin

    rng = np.random.default_rng(seed)
    phase = build_builtin("model_parabolic_cone", 3, lam, sector=SectorSpec((0.0, 1.0), 0.5, 1.0, 2.0))
    r = math.sqrt(R)
    sigma = 1.0 / r
    thetas = np.stack([np.zeros(packets), rng.uniform(1.3, 1.7, packets)], axis=1)
    vs = np.stack([rng.uniform(-r / 2, r / 2, packets), rng.uniform(-r, r, packets)], axis=1)
    cs = rng.standard_normal(packets) + 1j * rng.standard_normal(packets)
    g = _PacketSum(thetas, vs, cs, sigma)
    xbar = np.array([0.0, 0.0, R / 2])
    res = int(math.ceil(2 * r / spacing))
    grid = GridRegion.box(xbar, (r, r, r), (res,) * 3)
    mesh = make_mesh(phase.frequency_domain, 2 * (grid.farthest() + g.spatial_radius), 2.0, kind="cartesian")
    field_ = apply_operator(phase, None, g, mesh, grid, f_radius=g.spatial_radius)
    pts = grid.points()
    in_ball = np.sum((pts - xbar) ** 2, axis=1) <= R
    dens = np.abs(field_.values) ** 2 * grid.cell_volume
    norm2 = mesh.l2(g(mesh.nodes)) ** 2
    ratios, uniform = [], []
    for rho in rho_list:
        slab = in_ball & (np.abs(pts[:, 0]) <= math.sqrt(rho))
        ratios.append(float(dens[slab].sum() / (r * norm2)))
        uniform.append(float(slab.sum() / in_ball.sum()))
    slope, _ = exponent_fit(rho_list, ratios)
    uslope, _ = exponent_fit(rho_list, uniform)
    return EquidistributionScan(float(R), [float(v) for v in rho_list], ratios, uniform, slope, uslope, 0.5)
