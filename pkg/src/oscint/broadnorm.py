"""k-broad norms over K^2-ball decompositions.

For each ball B of radius K^2 centred at xbar,

    mu(B) = min over V_1..V_A in a candidate list of
            max over sectors tau with angle(G(xbar; tau), V_a) > K^-2 for all a
            of ||T f_tau||_{L^p(B)}^p,

with max over the empty set equal to 0.  The broad norm over U is the p-th
root of the sum of mu over balls meeting U.  The Grassmannian is replaced
by a finite list of candidate subspaces, so the computed value is an upper
bound for the continuous minimum.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .errors import DomainError, ResolutionError
from .exponents import ExponentTable, critical_exponents  # noqa: F401  (re-exported)
from .geometry import SectorSpec, Subspace
from .oscquad import FieldSample, FrequencyMesh, GridRegion, apply_operator
from .phase_core import Amplitude, PhaseField, gauss_map
from .wavepackets import lattice_profile

EXHAUSTIVE_LIMIT = 100_000
GAUSS_CANDIDATE_CAP = 200
RANDOM_CANDIDATES = 100


@dataclass(frozen=True)
class BroadConfig:
    k: int
    A: int
    K: float
    p: float

    def __post_init__(self):
        if self.k < 2:
            raise DomainError("k must be >= 2")
        if self.A < 1:
            raise DomainError("A must be >= 1")
        if self.K < 2:
            raise DomainError("K must be >= 2")
        if self.p < 1:
            raise DomainError("p must be >= 1")

    @property
    def angle_threshold(self) -> float:
        return self.K**-2.0


# ---------------------------------------------------------------------------
# sectors


@dataclass(frozen=True, eq=False)
class SectorFamily:
    """Angular sectors of aperture ~ 1/K with a smooth partition of unity on the annulus."""

    sectors: tuple
    centers: np.ndarray
    K: float
    r0: float
    r1: float
    kind: str = "planar"
    width: float = 0.0

    def __len__(self) -> int:
        return len(self.sectors)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def partition(self, w) -> np.ndarray:
        """chi_tau(w), shape (sectors, m); sums to 1 for every nonzero w."""
        w = np.atleast_2d(np.asarray(w, float))
        if self.kind == "planar":
            ang = np.arctan2(w[:, 1], w[:, 0])
            base = np.arctan2(self.centers[:, 1], self.centers[:, 0])
            d = (ang[None, :] - base[:, None] + math.pi) % (2 * math.pi) - math.pi
            return lattice_profile(d / self.width, 0.25)
        wn = w / np.maximum(np.linalg.norm(w, axis=1, keepdims=True), 1e-300)
        cosang = np.clip(self.centers @ wn.T, -1.0, 1.0)
        ang = np.arccos(cosang)
        b = _plateau_bump(ang / (1.5 / self.K))
        s = b.sum(axis=0)
        return b / np.where(s > 0, s, 1.0)

    def overlap(self, samples: int = 2000, seed: int = 0) -> int:
        """Largest number of sectors whose support meets a sampled direction."""
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((samples, self.dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return int(np.max(np.sum(self.partition(z) > 0, axis=0)))


def _plateau_bump(t):
    from .geometry import plateau

    return plateau(t, 2.0 / 3.0)


def _sphere_net(dim: int, radius: float, seed: int = 0) -> np.ndarray:
    """Greedy radius-net of S^{dim-1} from a dense random sample."""
    rng = np.random.default_rng(seed)
    m = int(min(200_000, 40 * (4.0 / radius) ** (dim - 1)))
    z = rng.standard_normal((m, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    centers = []
    free = np.ones(m, dtype=bool)
    while np.any(free):
        i = int(np.argmax(free))
        centers.append(z[i])
        free &= np.arccos(np.clip(z @ z[i], -1, 1)) > radius
    return np.array(centers)


def sector_family(n: int, K: float, r0: float = 0.5, r1: float = 2.0, seed: int = 0) -> SectorFamily:
    """Sectors covering the annulus r0 <= |w| <= r1 in R^{n-1}, apertures ~ 1/K."""
    d = n - 1
    if d < 2:
        raise DomainError("need n >= 3")
    if d == 2:
        M = int(math.ceil(math.pi * K))
        width = 2 * math.pi / M
        ang = width * np.arange(M)
        centers = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        sectors = tuple(SectorSpec(tuple(c), 0.75 * width, r0, r1) for c in centers)
        return SectorFamily(sectors, centers, float(K), r0, r1, "planar", width)
    centers = _sphere_net(d, 1.0 / K, seed)
    sectors = tuple(SectorSpec(tuple(c), 1.5 / K, r0, r1) for c in centers)
    return SectorFamily(sectors, centers, float(K), r0, r1, "net", 1.0 / K)


def sector_samples(sector: SectorSpec, count: int = 17) -> np.ndarray:
    """Center direction plus a ring of count - 1 directions inside the sector (unit vectors)."""
    q = sector.frame()
    c = q[:, 0]
    a = sector.aperture
    ring = count - 1
    tangents = q[:, 1:]
    out = [c]
    if tangents.shape[1] == 1:
        dists = a * np.arange(1, ring // 2 + 1) / (ring // 2)
        for s in (1.0, -1.0):
            for r in dists:
                out.append(math.cos(r) * c + math.sin(r) * s * tangents[:, 0])
    else:
        dirs = 8
        for j in range(ring):
            phi = 2 * math.pi * (j % dirs) / dirs
            r = a if j < dirs else a / 2
            t = math.cos(phi) * tangents[:, 0] + math.sin(phi) * tangents[:, 1]
            out.append(math.cos(r) * c + math.sin(r) * t)
    return np.array(out[:count])


def sector_fields(phase: PhaseField, amplitude: Amplitude | None, f, family: SectorFamily, mesh: FrequencyMesh,
                  grid: GridRegion, f_radius: float = 0.0) -> list:
    """Fields T f_tau for the smooth sector pieces f_tau = chi_tau f."""
    r_min = max(family.r0, float(np.min(np.linalg.norm(mesh.nodes, axis=1))))
    if mesh.spacing > family.width * r_min / 2:
        raise ResolutionError(f"mesh spacing {mesh.spacing:.3g} does not resolve sectors of width {family.width:.3g}")
    fv = mesh.sample(f)
    chi = family.partition(mesh.nodes)
    pieces = chi * fv[None, :]
    err = np.max(np.abs(pieces.sum(axis=0) - fv)) / max(np.max(np.abs(fv)), 1e-300)
    if err > 1e-8:
        raise DomainError(f"sector pieces do not sum to f (relative error {err:.2e})")
    return apply_operator(phase, amplitude, pieces, mesh, grid, f_radius=f_radius)


def gauss_sector_angle(phase: PhaseField, xbar, sector: SectorSpec, V: Subspace, samples: int = 17) -> float:
    """Smallest angle between V and G(xbar; w) over sampled w in the sector."""
    w = sector_samples(sector, samples) * 0.5 * (sector.r0 + sector.r1)
    G = gauss_map(phase, np.broadcast_to(np.asarray(xbar, float), (len(w), phase.n)), w)
    if V.dim == 0:
        return math.pi / 2
    return float(np.min(V.angle_to_vector(G)))


def sector_gauss_directions(phase: PhaseField, xbar, family: SectorFamily) -> np.ndarray:
    w = family.centers * 0.5 * (family.r0 + family.r1)
    return gauss_map(phase, np.broadcast_to(np.asarray(xbar, float), (len(w), phase.n)), w)


# ---------------------------------------------------------------------------
# candidates and mu


def candidate_subspaces(phase: PhaseField, xbar, family: SectorFamily, k: int, seed: int = 0,
                        cap: int = GAUSS_CANDIDATE_CAP, random: int = RANDOM_CANDIDATES) -> list:
    """(k-1)-spans of sector-centre Gauss vectors (first `cap`) plus random (k-1)-planes."""
    G = sector_gauss_directions(phase, xbar, family)
    out = []
    for combo in itertools.combinations(range(len(G)), k - 1):
        S = Subspace.span(G[list(combo)].T)
        if S.dim == k - 1:
            out.append(S)
        if len(out) >= cap:
            break
    rng = np.random.default_rng(seed)
    for _ in range(random):
        out.append(Subspace.span(rng.standard_normal((phase.n, k - 1))))
    return out


def admissibility(phase: PhaseField, xbar, family: SectorFamily, candidates, threshold: float) -> np.ndarray:
    """adm[c, tau] = angle(G(xbar; tau), V_c) > threshold."""
    adm = np.zeros((len(candidates), len(family)), dtype=bool)
    for t, sec in enumerate(family.sectors):
        w = sector_samples(sec) * 0.5 * (sec.r0 + sec.r1)
        G = gauss_map(phase, np.broadcast_to(np.asarray(xbar, float), (len(w), phase.n)), w)
        for c, V in enumerate(candidates):
            adm[c, t] = float(np.min(V.angle_to_vector(G))) > threshold
    return adm


@dataclass
class MuResult:
    value: float
    exhaustive: bool
    choice: tuple

    def to_dict(self) -> dict:
        return {"value": self.value, "exhaustive": self.exhaustive, "choice": list(self.choice)}


def _worst(norms, allowed):
    return float(np.max(norms[allowed])) if np.any(allowed) else 0.0


def mu_exhaustive(norms, adm, A: int) -> MuResult:
    best = (math.inf, ())
    C = adm.shape[0]
    for combo in itertools.combinations(range(C), min(A, C)):
        val = _worst(norms, np.all(adm[list(combo)], axis=0))
        if val < best[0]:
            best = (val, combo)
            if val == 0.0:
                break
    return MuResult(best[0], True, tuple(best[1]))


def mu_greedy(norms, adm, A: int) -> MuResult:
    """Repeatedly add the candidate that makes the largest remaining sector inadmissible."""
    allowed = np.ones(adm.shape[1], dtype=bool)
    choice = []
    for _ in range(min(A, adm.shape[0])):
        if not np.any(allowed):
            break
        vals = [(_worst(norms, allowed & adm[c]), c) for c in range(adm.shape[0]) if c not in choice]
        val, c = min(vals)
        choice.append(c)
        allowed &= adm[c]
    return MuResult(_worst(norms, allowed), False, tuple(choice))


def mu_from_norms(norms, adm, A: int, method: str = "auto") -> MuResult:
    if A < 1:
        raise DomainError("A must be >= 1")
    norms = np.asarray(norms, float)
    adm = np.asarray(adm, bool)
    if adm.shape[0] == 0:
        raise DomainError("need at least one candidate subspace")
    small = comb(adm.shape[0], min(A, adm.shape[0]), exact=True) <= EXHAUSTIVE_LIMIT
    if method == "exhaustive" or (method == "auto" and small):
        return mu_exhaustive(norms, adm, A)
    return mu_greedy(norms, adm, A)


# ---------------------------------------------------------------------------
# ball decompositions and the broad norm


@dataclass(frozen=True, eq=False)
class BallDecomp:
    centers: np.ndarray
    radius: float

    def __len__(self) -> int:
        return len(self.centers)

    def members(self, pts) -> np.ndarray:
        """(balls, m) membership of points."""
        pts = np.asarray(pts, float)
        d2 = np.sum((pts[None, :, :] - self.centers[:, None, :]) ** 2, axis=-1)
        return d2 <= self.radius**2

    def covers(self, pts) -> bool:
        return bool(np.all(self.members(pts).any(axis=0)))

    def max_overlap(self, pts) -> int:
        return int(self.members(pts).sum(axis=0).max())


def ball_decomposition(R: float, K: float, n: int, center=None) -> BallDecomp:
    """K^2-balls on a cubic lattice of spacing 2 K^2 / sqrt(n), kept when they meet B(center, R)."""
    r = float(K) ** 2
    s = 2 * r / math.sqrt(n)
    m = int(math.ceil((R + r) / s))
    g = s * np.arange(-m, m + 1)
    pts = np.stack(np.meshgrid(*([g] * n), indexing="ij"), axis=-1).reshape(-1, n)
    c = np.zeros(n) if center is None else np.asarray(center, float)
    pts = pts + c
    keep = np.linalg.norm(pts - c, axis=1) < R + r
    return BallDecomp(pts[keep], r)


def ball_norms(fields, ball_center, radius: float, p: float) -> np.ndarray:
    """||T f_tau||_{L^p(B)}^p for every sector field, by the grid midpoint rule."""
    grid = fields[0].grid
    pts = grid.points()
    inside = np.sum((pts - np.asarray(ball_center)) ** 2, axis=1) <= radius**2
    vol = grid.cell_volume
    return np.array([vol * float(np.sum(np.abs(f.values[inside]) ** p)) for f in fields])


@dataclass
class BroadResult:
    value: float
    per_ball: list = field(default_factory=list)
    exhaustive: bool = True

    def to_dict(self) -> dict:
        return {"broad_norm": self.value, "exhaustive": self.exhaustive, "per_ball": self.per_ball}


def broad_norm(fields, decomp: BallDecomp, config: BroadConfig, candidates, phase: PhaseField,
               family: SectorFamily, U=None, method: str = "auto", adm_cache: dict | None = None) -> BroadResult:
    """(sum over balls meeting U of mu)^(1/p); U is a boolean mask over grid points (default: all)."""
    grid = fields[0].grid
    pts = grid.points()
    mask = np.ones(len(pts), dtype=bool) if U is None else np.asarray(U, bool)
    total = 0.0
    rows = []
    exhaustive = True
    for b, c in enumerate(decomp.centers):
        near = np.sum((pts[mask] - c) ** 2, axis=1) <= decomp.radius**2
        if not np.any(near):
            continue
        norms = ball_norms(fields, c, decomp.radius, config.p)
        key = b
        if adm_cache is not None and key in adm_cache:
            adm = adm_cache[key]
        else:
            adm = admissibility(phase, c, family, candidates, config.angle_threshold)
            if adm_cache is not None:
                adm_cache[key] = adm
        mu = mu_from_norms(norms, adm, config.A, method)
        exhaustive &= mu.exhaustive
        total += mu.value
        rows.append({"ball": int(b), "center": [float(v) for v in c], "mu": mu.value, "full": float(norms.sum())})
    return BroadResult(total ** (1.0 / config.p), rows, exhaustive)


def full_norm(fields, decomp: BallDecomp, p: float, U=None) -> float:
    """||sum_tau T f_tau||_{L^p} over the grid points covered by balls meeting U."""
    grid = fields[0].grid
    pts = grid.points()
    mask = np.ones(len(pts), dtype=bool) if U is None else np.asarray(U, bool)
    covered = np.zeros(len(pts), dtype=bool)
    for c in decomp.centers:
        inb = np.sum((pts - c) ** 2, axis=1) <= decomp.radius**2
        if np.any(inb & mask):
            covered |= inb
    total = np.sum([f.values for f in fields], axis=0)
    return float((grid.cell_volume * np.sum(np.abs(total[covered]) ** p)) ** (1.0 / p))
