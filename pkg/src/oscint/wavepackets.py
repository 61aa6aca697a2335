"""Scale-R wave packets, curved tubes and polynomial approximations of their cores.

Frequency space is cut by a lattice partition of unity psi_theta at scale
R^{-1/2}.  Each piece is then cut in physical space by windows eta_v on the
lattice s Z^{n-1}, s = R^{(1+delta)/2}, whose Fourier transform is a smooth
low-pass supported in |xi_a| <= C / s with C < 2 pi; by Poisson summation
the translates sum to exactly one.  The convolution eta^_v * (psi_theta f)
is applied with FFTs on a cartesian frequency grid whose period 2 pi / h is
an integer multiple of s, which keeps the partition exact on the periodic
spatial samples.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ConditioningError, DomainError, ResolutionError
from .geometry import SectorSpec, angle_between, plateau, smooth_step
from .oscquad import FrequencyMesh, split_slice, _direct
from .phase_core import Amplitude, PhaseField, gauss_map, solve_Phi

DELTA_DEFAULT = 0.1
C_TILDE = 0.25          # psi~_theta equals 1 on the C_TILDE R^{-1/2} neighbourhood of supp psi_theta
THETA_OVERLAP = 0.25    # transition half-width of the theta partition, in lattice units
LOWPASS_C = 4.0         # eta^ is supported in |xi_a| <= LOWPASS_C / s
NODES_PER_THETA = 8
PACKET_BUDGET = 100_000_000
BLOCK_BUDGET = 2e7     # complex values held by one theta's transform
DROP_TOL = 1e-9         # relative l1-budget of norms of dropped packets per theta


def lattice_profile(u, overlap: float = THETA_OVERLAP):
    """1D bump with sum_k p(u - k) = 1, equal to 1 on |u| <= 1/2 - overlap, 0 for |u| >= 1/2 + overlap."""
    u = np.asarray(u, dtype=float)
    w = 2.0 * overlap
    return smooth_step((u + 0.5 + overlap) / w) - smooth_step((u - 0.5 + overlap) / w)


def tensor_profile(z, overlap: float = THETA_OVERLAP):
    z = np.asarray(z, dtype=float)
    return np.prod(lattice_profile(z, overlap), axis=-1)


# ---------------------------------------------------------------------------
# index sets


@dataclass(frozen=True)
class PacketIndex:
    theta_center: tuple
    theta_radius: float
    v: tuple
    R: float
    delta: float

    def __post_init__(self):
        r = float(np.linalg.norm(self.theta_center))
        # centers of cells meeting the sector may sit up to one cell outside it
        if not (0.5 - 2 * self.theta_radius <= r <= 2.0 + 2 * self.theta_radius):
            raise DomainError(f"|w_theta| = {r:.4g} is outside [1/2, 2]")
        s = self.spacing
        k = np.asarray(self.v, float) / s
        if np.any(np.abs(k - np.round(k)) > 1e-9 * max(1.0, float(np.max(np.abs(k))))):
            raise DomainError(f"v = {self.v} is not on the lattice of spacing {s:.6g}")

    @property
    def spacing(self) -> float:
        return self.R ** ((1 + self.delta) / 2)

    @property
    def tube_radius(self) -> float:
        return self.R ** (0.5 + self.delta)

    def to_dict(self) -> dict:
        return {"theta_center": list(self.theta_center), "theta_radius": self.theta_radius,
                "v": list(self.v), "R": self.R, "delta": self.delta}


@dataclass(frozen=True, eq=False)
class PacketCover:
    """theta centers times the spatial lattice, restricted to |v| <= v_radius."""

    R: float
    delta: float
    domain: SectorSpec
    centers: np.ndarray
    v_radius: float

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def theta_radius(self) -> float:
        return self.R ** -0.5

    @property
    def spacing(self) -> float:
        return self.R ** ((1 + self.delta) / 2)

    @property
    def theta_count(self) -> int:
        return len(self.centers)

    @property
    def single(self) -> bool:
        return self.R <= 1.0

    def v_lattice(self) -> np.ndarray:
        s = self.spacing
        m = int(math.floor(self.v_radius / s))
        ks = np.array(np.meshgrid(*[np.arange(-m, m + 1)] * self.dim, indexing="ij")).reshape(self.dim, -1).T
        pts = ks * s
        return pts[np.linalg.norm(pts, axis=1) <= self.v_radius + 1e-12]

    def v_count(self) -> int:
        # lattice points in a ball, counted without materializing them when the count is large
        s, d = self.spacing, self.dim
        est = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * (self.v_radius / s + 1) ** d
        return len(self.v_lattice()) if est < 1e6 else int(est)

    def __len__(self) -> int:
        return self.theta_count * self.v_count()

    def __iter__(self):
        vs = self.v_lattice()
        for c in self.centers:
            for v in vs:
                yield self.index(c, v)

    def index(self, center, v) -> PacketIndex:
        return PacketIndex(tuple(float(a) for a in center), self.theta_radius, tuple(float(a) for a in v),
                           self.R, self.delta)

    def psi(self, w, center) -> np.ndarray:
        """psi_theta at the points w."""
        w = np.asarray(w, dtype=float)
        if self.single:
            return np.ones(w.shape[:-1])
        return tensor_profile((w - np.asarray(center)) / self.theta_radius)

    def psi_tilde(self, w, center) -> np.ndarray:
        """Radial cutoff: 1 on the C_TILDE R^{-1/2} neighbourhood of supp psi_theta, 0 beyond 2 R^{-1/2}."""
        w = np.asarray(w, dtype=float)
        if self.single:
            return np.ones(w.shape[:-1])
        r = np.linalg.norm(w - np.asarray(center), axis=-1) / self.theta_radius
        inner = math.sqrt(self.dim) * (0.5 + THETA_OVERLAP) + C_TILDE
        return smooth_step((2.0 - r) / (2.0 - inner))


def packet_cover(R: float, delta: float = DELTA_DEFAULT, domain: SectorSpec | None = None, lam: float | None = None,
                 v_radius: float | None = None, budget: int = PACKET_BUDGET) -> PacketCover:
    """theta-cover of the sector at scale R^{-1/2} and the spatial lattice R^{(1+delta)/2} Z^{n-1}.

    A theta cell is kept when the support of its partition function meets the sector.
    """
    if domain is None:
        raise DomainError("a frequency sector is required")
    if not (0 < delta < 0.5):
        raise DomainError(f"delta must lie in (0, 1/2), got {delta}")
    if R < 1:
        raise DomainError(f"R must be >= 1, got {R}")
    if lam is not None and R > lam * (1 + 1e-12):
        raise DomainError(f"R = {R} exceeds lambda = {lam}")
    if v_radius is None:
        v_radius = 2.0 * (lam if lam is not None else R)
    d = domain.dim
    if R <= 1.0:
        mid = 0.5 * (domain.r0 + domain.r1)
        centers = (mid * np.asarray(domain.center))[None, :]
    else:
        r = R ** -0.5
        reach = 0.5 + THETA_OVERLAP
        # fine lattice points of the (slightly grown) sector
        fine = r / 16
        lo = np.floor((domain.r1 * -1.0) / fine)
        axes = [fine * np.arange(lo, -lo + 1)] * d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        if len(pts) > 4e7:
            raise BudgetError("theta cover would need too many sample points")
        pts = pts[domain.contains(pts, tol=fine * math.sqrt(d))]
        cells = set()
        base = np.floor(pts / r + reach).astype(np.int64)
        span = int(math.ceil(2 * reach))
        for off in np.ndindex(*([span + 1] * d)):
            k = base - np.asarray(off)
            ok = np.all(np.abs(pts / r - k) < reach, axis=1)
            cells.update(map(tuple, np.unique(k[ok], axis=0)))
        centers = np.array(sorted(cells), dtype=float) * r
    cover = PacketCover(float(R), float(delta), domain, centers, float(v_radius))
    if len(cover) > budget:
        raise BudgetError(f"{len(cover)} packets exceed the budget of {budget}")
    return cover


# ---------------------------------------------------------------------------
# decomposition


@dataclass(frozen=True, eq=False)
class Packet:
    """f_{theta,v} stored on a local block of the cartesian frequency lattice."""

    index: PacketIndex
    offset: tuple
    coefficients: np.ndarray
    spacing: float
    axes: tuple = field(repr=False, default=())

    def on_mesh(self, mesh: FrequencyMesh) -> np.ndarray:
        """Values at the mesh nodes (zero outside the local block)."""
        out = np.zeros(mesh.size, dtype=complex)
        local = mesh.index - np.asarray(self.offset)
        shape = np.asarray(self.coefficients.shape)
        ok = np.all((local >= 0) & (local < shape), axis=1)
        out[ok] = self.coefficients[tuple(local[ok].T)]
        return out

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1).reshape(-1, len(self.axes))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coefficients) ** 2) * self.spacing ** len(self.axes)))

    def local_mesh(self, domain: SectorSpec) -> FrequencyMesh:
        d = len(self.axes)
        counts = tuple(len(a) for a in self.axes)
        index = np.stack(np.unravel_index(np.arange(int(np.prod(counts))), counts), axis=1)
        nodes = np.stack([self.axes[a][index[:, a]] for a in range(d)], axis=1)
        h = self.spacing
        return FrequencyMesh(nodes, np.full(len(nodes), h**d), 1.0 / h, h, math.pi / h, 2.0, domain, "cartesian",
                             axes=self.axes, index=index, counts=counts)


def packet_spacing(cover: PacketCover, nodes_per_theta: int = NODES_PER_THETA, min_period: float = 0.0) -> float:
    """Grid spacing h with 2 pi / h an integer multiple of the spatial lattice spacing."""
    s = cover.spacing
    K = max(int(math.ceil(2 * math.pi * nodes_per_theta / (cover.theta_radius * s))),
            int(math.ceil(min_period / s)), 2)
    return 2 * math.pi / (K * s)


def packet_mesh(cover: PacketCover, nodes_per_theta: int = NODES_PER_THETA, min_period: float = 0.0,
                pad: float = 4.0) -> FrequencyMesh:
    """Full cartesian lattice on the sector's bounding box padded by ``pad`` theta radii.

    Nodes outside the sector are kept so that packets (supported up to
    2 R^{-1/2} beyond their centers) live on the mesh; R_max is half the
    spatial period.
    """
    h = packet_spacing(cover, nodes_per_theta, min_period)
    d = cover.dim
    r = cover.theta_radius
    lo = cover.centers.min(axis=0) - pad * r
    hi = cover.centers.max(axis=0) + pad * r
    axes = tuple(h * np.arange(math.floor(lo[a] / h), math.ceil(hi[a] / h) + 1) for a in range(d))
    counts = tuple(len(a) for a in axes)
    if np.prod(np.asarray(counts, float)) > 2e7:
        raise BudgetError(f"packet mesh {counts} exceeds the node budget")
    index = np.stack(np.unravel_index(np.arange(int(np.prod(counts))), counts), axis=1)
    nodes = np.stack([axes[a][index[:, a]] for a in range(d)], axis=1)
    dom = cover.domain
    grown = SectorSpec(dom.center, min(math.pi, dom.aperture + pad * r / dom.r0), max(1e-3, dom.r0 - pad * r),
                       dom.r1 + pad * r)
    return FrequencyMesh(nodes, np.full(len(nodes), h**d), 1.0 / h, h, math.pi / h, 2.0, grown, "cartesian",
                         axes=axes, index=index, counts=counts)


def _check_mesh(cover: PacketCover, mesh: FrequencyMesh) -> int:
    if mesh.kind != "cartesian" or mesh.axes is None:
        raise ResolutionError("packet decomposition needs a cartesian mesh")
    h = mesh.spacing
    if h > cover.theta_radius / NODES_PER_THETA * (1 + 1e-9):
        raise ResolutionError(f"mesh spacing {h:.4g} does not resolve R^-1/2 = {cover.theta_radius:.4g} "
                              f"with {NODES_PER_THETA} nodes")
    K = 2 * math.pi / (h * cover.spacing)
    if abs(K - round(K)) > 1e-8 * K:
        raise ResolutionError("2 pi / spacing must be an integer multiple of the spatial lattice spacing; "
                              "build the mesh with packet_mesh")
    return int(round(K))


def lowpass_profile(t):
    """Smooth even profile equal to 1 on |t| <= 1/2 and 0 for |t| >= 1."""
    return plateau(t, 0.5)


def window_1d(x, v, s: float, period: float, C: float = LOWPASS_C) -> np.ndarray:
    """Periodized eta(x - v) with eta^(xi) = s * lowpass(xi s / C), from its Fourier series."""
    h = 2 * math.pi / period
    mmax = int(math.floor(C / (s * h)))
    m = np.arange(-mmax, mmax + 1)
    coef = s * lowpass_profile(m * h * s / C) / period
    x = np.asarray(x, float)
    return np.real(np.exp(1j * np.multiply.outer(x - v, m * h)) @ coef)


def _axis_operators(axis_vals, vs, s: float, C: float):
    """Matrices M[v][j, l] = (1/K) lowpass((w_j - w_l) s / C) exp(-i v (w_j - w_l)) on one axis.

    Applying them along every axis realizes eta^_v * g on the grid.
    """
    h = axis_vals[1] - axis_vals[0] if len(axis_vals) > 1 else 1.0
    K = 2 * math.pi / (h * s)
    diff = np.subtract.outer(axis_vals, axis_vals)
    base = lowpass_profile(diff * s / C) / K
    return base[None] * np.exp(-1j * vs[:, None, None] * diff[None])


def iter_packets(f, cover: PacketCover, mesh: FrequencyMesh, drop_tol: float = DROP_TOL,
                 C: float = LOWPASS_C):
    """Packets f_{theta,v} = psi~_theta [eta^_v * (psi_theta f)] with sum f_{theta,v} = f.

    The convolution with eta^_v is a discrete convolution on the frequency
    grid; summed over one period of v it collapses to the identity because
    the low-pass vanishes at the nonzero multiples of 2 pi / s.  For each
    theta the weakest packets are dropped while the sum of their norms stays
    below ``drop_tol`` times ||psi_theta f||.
    """
    K = _check_mesh(cover, mesh)
    if not (0 < C < 2 * math.pi):
        raise DomainError("the low-pass width constant must lie in (0, 2 pi)")
    d = cover.dim
    h = mesh.spacing
    s = cover.spacing
    fv = mesh.sample(f)
    F = np.zeros(mesh.counts, dtype=complex)
    F[tuple(mesh.index.T)] = fv
    if not np.any(fv):
        return
    # the psi_theta must sum to one wherever f lives
    live = np.abs(fv) > 1e-13 * np.max(np.abs(fv))
    cover_sum = np.zeros(int(live.sum()))
    for c in cover.centers:
        cover_sum += cover.psi(mesh.nodes[live], c)
    if np.max(np.abs(cover_sum - 1.0)) > 1e-9:
        raise DomainError("f is not supported inside the region covered by the theta partition")

    r = cover.theta_radius
    block_nodes = math.prod(int(math.ceil(4 * r / h)) + 2 for _ in range(d))
    if K**d * block_nodes > BLOCK_BUDGET:
        raise BudgetError(f"per-theta transform needs {K**d * block_nodes} values (cap {BLOCK_BUDGET}); "
                          "use fewer nodes per theta")
    # one period of lattice representatives, centered on the origin
    vs_1d = np.arange(-(K // 2), K - K // 2) * s
    cell = h**d
    for c in cover.centers:
        lo = [max(0, int(math.floor((c[a] - 2 * r - mesh.axes[a][0]) / h))) for a in range(d)]
        hi = [min(mesh.counts[a], int(math.ceil((c[a] + 2 * r - mesh.axes[a][0]) / h)) + 1) for a in range(d)]
        block = tuple(slice(a, b) for a, b in zip(lo, hi))
        axes = tuple(mesh.axes[a][lo[a] : hi[a]] for a in range(d))
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        G = cover.psi(grid, c) * F[block]
        gnorm = math.sqrt(float(np.sum(np.abs(G) ** 2)) * cell)
        if gnorm == 0.0:
            continue
        # out[v_0, .., v_{d-1}, j_0, .., j_{d-1}]
        out = G
        for a in range(d):
            M = _axis_operators(axes[a], vs_1d, s, C)  # (K, n_a, n_a)
            out = np.tensordot(M, out, axes=([2], [a + (out.ndim - d)]))
            # bring the new j_a back to its slot after the v axes
            out = np.moveaxis(out, 1, out.ndim - d + a)
            out = np.moveaxis(out, 0, a)
        out = out * cover.psi_tilde(grid, c)
        flat = out.reshape(K**d, -1)
        norms = np.sqrt(np.sum(np.abs(flat) ** 2, axis=1) * cell)
        order = np.argsort(norms)
        dropped = np.cumsum(norms[order]) <= drop_tol * gnorm
        for q in np.sort(order[~dropped]):
            kk = np.unravel_index(q, (K,) * d)
            v = vs_1d[list(kk)]
            yield Packet(cover.index(c, v), tuple(lo), flat[q].reshape(G.shape), h, axes)


def decompose(f, cover: PacketCover, mesh: FrequencyMesh, drop_tol: float = DROP_TOL,
              C: float = LOWPASS_C) -> list:
    """All packets of f as a list (see iter_packets)."""
    return list(iter_packets(f, cover, mesh, drop_tol, C))


def reconstruct(packets, mesh: FrequencyMesh) -> np.ndarray:
    out = np.zeros(mesh.counts, dtype=complex)
    for p in packets:
        sl = tuple(slice(o, o + m) for o, m in zip(p.offset, p.coefficients.shape))
        out[sl] += p.coefficients
    return out[tuple(mesh.index.T)]


def reconstruction_error(f, packets, mesh: FrequencyMesh) -> float:
    fv = mesh.sample(f)
    nf = mesh.l2(fv)
    return mesh.l2(fv - reconstruct(packets, mesh)) / nf if nf > 0 else 0.0


def orthogonality_ratio(packets, mesh: FrequencyMesh, subset=None) -> float:
    """||sum_S f_{theta,v}||^2 / sum_S ||f_{theta,v}||^2 over the chosen subset."""
    chosen = packets if subset is None else [packets[i] for i in subset]
    if not chosen:
        return 1.0
    num = mesh.l2(reconstruct(chosen, mesh)) ** 2
    den = sum(p.norm() ** 2 for p in chosen)
    return num / den if den > 0 else 1.0


@dataclass
class PacketStatistics:
    count: int
    reconstruction_error: float
    ratio_all: float
    subset_ratios: list

    def to_dict(self) -> dict:
        return {"count": self.count, "reconstruction_error": self.reconstruction_error,
                "ratio_all": self.ratio_all, "subset_ratios": list(self.subset_ratios)}


def packet_statistics(f, cover: PacketCover, mesh: FrequencyMesh, subsets: int = 20, seed: int = 0,
                      drop_tol: float = DROP_TOL, C: float = LOWPASS_C) -> PacketStatistics:
    """Reconstruction error and orthogonality ratios, streamed over the packets.

    Each random subset includes every packet independently with its own
    probability drawn from [0.1, 0.9].
    """
    rng = np.random.default_rng(seed)
    probs = rng.uniform(0.1, 0.9, subsets)
    total = np.zeros(mesh.counts, dtype=complex)
    parts = np.zeros((subsets,) + tuple(mesh.counts), dtype=complex)
    energy = 0.0
    part_energy = np.zeros(subsets)
    count = 0
    for p in iter_packets(f, cover, mesh, drop_tol, C):
        sl = tuple(slice(o, o + m) for o, m in zip(p.offset, p.coefficients.shape))
        total[sl] += p.coefficients
        e = p.norm() ** 2
        energy += e
        pick = rng.random(subsets) < probs
        for i in np.nonzero(pick)[0]:
            parts[(i,) + sl] += p.coefficients
        part_energy[pick] += e
        count += 1
    fv = mesh.sample(f)
    nf = mesh.l2(fv)
    rec = total[tuple(mesh.index.T)]
    err = mesh.l2(fv - rec) / nf if nf > 0 else 0.0
    ratio_all = mesh.l2(rec) ** 2 / energy if energy > 0 else 1.0
    ratios = []
    for i in range(subsets):
        if part_energy[i] > 0:
            ratios.append(mesh.l2(parts[i][tuple(mesh.index.T)]) ** 2 / part_energy[i])
    return PacketStatistics(count, err, ratio_all, ratios)


# ---------------------------------------------------------------------------
# tubes


@dataclass(frozen=True, eq=False)
class TubeGeom:
    """Curved tube around x_n -> (Gamma(x_n), x_n), lam-scale coordinates."""

    index: PacketIndex
    phase: PhaseField = field(repr=False)
    xn: np.ndarray = field(repr=False)
    core: np.ndarray = field(repr=False)
    radius: float
    interval: tuple | None
    residual: float = 0.0
    tangent_error: float = 0.0

    @property
    def empty(self) -> bool:
        return self.interval is None

    @property
    def omega(self) -> np.ndarray:
        return np.asarray(self.index.theta_center)

    def core_at(self, x_n) -> np.ndarray:
        """Gamma(x_n) solved directly (lam-scale)."""
        lam = self.phase.lam
        x_n = np.asarray(x_n, float)
        target = np.broadcast_to(np.asarray(self.index.v) / lam, x_n.shape + (len(self.omega),))
        xp = solve_Phi(self.phase, x_n / lam, self.omega, target)
        return lam * xp

    def distance(self, x) -> np.ndarray:
        """|x' - Gamma(x_n)| (infinite when x_n is outside the interval)."""
        x = np.atleast_2d(np.asarray(x, float))
        out = np.full(len(x), np.inf)
        if self.empty:
            return out
        lo, hi = self.interval
        ok = (x[:, -1] >= lo) & (x[:, -1] <= hi)
        if np.any(ok):
            out[ok] = np.linalg.norm(x[ok, :-1] - self.core_at(x[ok, -1]), axis=-1)
        return out

    def to_row(self) -> dict:
        return {"omega": self.index.theta_center, "v": self.index.v, "interval": self.interval,
                "radius": self.radius}


def core_tangent(phase: PhaseField, xp_unit, t, w) -> np.ndarray:
    """d/dt of the unit-scale core from the implicit function theorem, returned as (gamma', 1)."""
    m = phase.n - 1
    x = np.concatenate([np.atleast_2d(xp_unit), np.atleast_1d(t)[:, None]], axis=1)
    H = phase.hess_xw(x, w)  # [k, j] = d_{x_k} d_{w_j}
    A = np.swapaxes(H[:, :m, :], -1, -2)
    b = H[:, m, :]
    g = -np.linalg.solve(A, b[..., None])[..., 0]
    return np.concatenate([g, np.ones((len(g), 1))], axis=1)


def core_curve(phase: PhaseField, index: PacketIndex, spacing: float | None = None, fd_step: float = 0.5) -> TubeGeom:
    """Core of the tube T_{theta,v}: d_w phi^lam(Gamma(x_n), x_n; w_theta) = v.

    The interval is detected by solving on an x_n grid of spacing R^{1/2}/4
    and keeping the longest run of solutions with x' inside the spatial
    domain.  The tangent is checked against the Gauss map by a central
    difference of the core with step ``fd_step`` (lam-scale).
    """
    lam = phase.lam
    m = phase.n - 1
    X = phase.spatial_domain
    w = np.asarray(index.theta_center, float)
    v = np.asarray(index.v, float)
    h = spacing if spacing is not None else math.sqrt(index.R) / 4
    ts = np.arange(math.ceil(lam * X.lo[-1] / h), math.floor(lam * X.hi[-1] / h) + 1) * h
    xp, conv = solve_Phi(phase, ts / lam, w, np.broadcast_to(v / lam, (len(ts), m)), tol=1e-13, strict=False)
    xp = np.asarray(xp).reshape(len(ts), m)
    inside = np.asarray(conv).reshape(-1) & np.all((xp >= np.asarray(X.lo[:-1])) & (xp <= np.asarray(X.hi[:-1])), axis=1)
    radius = index.R ** (0.5 + index.delta)
    if not np.any(inside):
        return TubeGeom(index, phase, np.array([]), np.zeros((0, m)), radius, None)
    # longest consecutive run
    best, start = (0, 0), None
    for i, ok in enumerate(list(inside) + [False]):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    sl = slice(*best)
    xn, core_u = ts[sl], xp[sl]
    x = np.concatenate([core_u, (xn / lam)[:, None]], axis=1)
    res = float(np.max(np.linalg.norm(phase.grad_w(x, w) - v / lam, axis=1)))
    # tangent from central differences of the lam-scale core
    step = fd_step
    up, _ = solve_Phi(phase, (xn + step) / lam, w, np.broadcast_to(v / lam, (len(xn), m)), tol=1e-13, strict=False)
    dn, _ = solve_Phi(phase, (xn - step) / lam, w, np.broadcast_to(v / lam, (len(xn), m)), tol=1e-13, strict=False)
    tangent = np.concatenate([lam * (np.reshape(up, (-1, m)) - np.reshape(dn, (-1, m))) / (2 * step),
                              np.ones((len(xn), 1))], axis=1)
    G = gauss_map(phase, x, w, scaled=False)
    ang = np.minimum(angle_between(tangent, G), math.pi - angle_between(tangent, G))
    return TubeGeom(index, phase, xn, lam * core_u, radius, (float(xn[0]), float(xn[-1])), res,
                    float(np.max(ang)))


def tube_contains(tube: TubeGeom, x, dilate: float = 1.0):
    d = tube.distance(x)
    out = d < dilate * tube.radius
    return bool(out[0]) if np.ndim(x) == 1 else out


# ---------------------------------------------------------------------------
# polynomial approximation of cores


@dataclass(frozen=True)
class PolyCurve:
    """[Gamma^lam]_eps(t) = lam * sum_k c_k (t / lam)^k with the x_n coordinate appended."""

    degree: int
    coefficients: np.ndarray   # (degree + 1, n - 1), unit-scale Taylor coefficients
    lam: float
    validity: tuple
    position_error: float = float("nan")   # max |Gamma - [Gamma]| / (lam^{-1/2} |t|)
    angle_error: float = float("nan")      # max tangent angle / lam^{-1/2}

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        s = t / self.lam
        pw = s[..., None] ** np.arange(self.degree + 1)
        xp = self.lam * pw @ self.coefficients
        return np.concatenate([xp, t[..., None]], axis=-1)

    def derivative(self, t, order: int = 1) -> np.ndarray:
        t = np.asarray(t, float)
        s = t / self.lam
        k = np.arange(self.degree + 1)
        fall = np.ones(self.degree + 1)
        for j in range(order):
            fall = fall * np.clip(k - j, 0, None)
        expo = np.clip(k - order, 0, None)
        xp = self.lam ** (1 - order) * (s[..., None] ** expo * fall) @ self.coefficients
        last = np.full(t.shape + (1,), 1.0 if order == 1 else 0.0)
        return np.concatenate([xp, last], axis=-1)

    def derivative_bounds(self, samples: int = 513, interval=None) -> tuple:
        lo, hi = interval if interval is not None else self.validity
        t = np.linspace(lo, hi, samples)
        d1 = float(np.max(np.linalg.norm(self.derivative(t, 1), axis=-1)))
        d2 = float(np.max(np.linalg.norm(self.derivative(t, 2), axis=-1)))
        return d1, d2


def taylor_coefficients(curve, degree: int, h: float) -> np.ndarray:
    """Taylor coefficients at 0 of a vector curve from a Chebyshev fit on [-h, h]."""
    m = degree + 8
    u = np.cos(np.pi * (np.arange(m) + 0.5) / m)
    vals = curve(h * u)
    V = np.polynomial.chebyshev.chebvander(u, degree + 5)
    cheb, *_ = np.linalg.lstsq(V, vals, rcond=None)
    # cheb2poly trims trailing zeros, so pad back to a common length
    cols = [np.polynomial.chebyshev.cheb2poly(cheb[:, j]) for j in range(vals.shape[1])]
    power = np.zeros((degree + 6, vals.shape[1]))
    for j, c in enumerate(cols):
        power[: len(c), j] = c
    return power[: degree + 1] / (h ** np.arange(degree + 1))[:, None]


def taylor_core(tube: TubeGeom, eps: float, h: float = 0.25, rtol: float = 1e-6, samples: int = 257) -> PolyCurve:
    """Degree ceil(1/(2 eps)) Taylor polynomial of the core at x_n = 0.

    Coefficients are fitted at two widths h and h/2; disagreement beyond
    ``rtol`` is reported as ill-conditioned.
    """
    if not (0 < eps < 1):
        raise DomainError("eps must lie in (0, 1)")
    if tube.empty:
        raise DomainError("empty tube")
    phase = tube.phase
    lam = phase.lam
    m = phase.n - 1
    N = int(math.ceil(1 / (2 * eps)))
    lo, hi = tube.interval
    h = min(h, -lo / lam, hi / lam)
    if h <= 0:
        raise DomainError("the core interval does not contain x_n = 0")
    w = tube.omega
    target = np.asarray(tube.index.v) / lam

    def curve(t):
        return np.reshape(solve_Phi(phase, t, w, np.broadcast_to(target, (len(t), m)), tol=1e-14), (-1, m))

    c1 = taylor_coefficients(curve, N, h)
    c2 = taylor_coefficients(curve, N, h / 2)
    scale = max(1.0, float(np.max(np.abs(c1[0]))))
    gap = float(np.max(np.abs(c1 - c2) * (h ** np.arange(N + 1))[:, None]))
    if gap > rtol * scale:
        raise ConditioningError(f"Taylor coefficients disagree by {gap:.3g} between widths {h} and {h / 2}")
    reach = min(lam ** (1 - eps), -lo, hi)
    poly = PolyCurve(N, c2, float(lam), (-reach, reach))
    t = np.linspace(-reach, reach, samples)
    t = t[t != 0]
    exact = lam * curve(t / lam)
    approx = poly(t)[:, :m]
    pos = float(np.max(np.linalg.norm(exact - approx, axis=1) / (lam**-0.5 * np.abs(t))))
    tang = core_tangent(phase, exact / lam, t / lam, w)
    ang = angle_between(tang, poly.derivative(t, 1))
    return PolyCurve(N, c2, float(lam), (-reach, reach), pos, float(np.max(ang)) / lam**-0.5)


# ---------------------------------------------------------------------------
# concentration


@dataclass
class DecayProfile:
    inside_max: float
    ring_max: dict
    monotone: bool
    slices: int

    def ratio(self, dilate: int = 8) -> float:
        return self.ring_max[dilate] / self.inside_max if self.inside_max > 0 else 0.0

    def to_dict(self) -> dict:
        return {"inside_max": self.inside_max, "ring_max": {str(k): v for k, v in self.ring_max.items()},
                "monotone": self.monotone, "slices": self.slices}


RINGS = (2, 4, 8)


def decay_profile(phase: PhaseField, amplitude: Amplitude | None, packet: Packet, tube: TubeGeom,
                  xn_samples=None, spacing: float | None = None, reach: float | None = None) -> DecayProfile:
    """Max of |T^lam f_{theta,v}| inside the tube and on the rings (k/2, k] radii, k in (2, 4, 8).

    Slices are taken at the given x_n (default: 9 points of the tube
    interval inside [-R, R]); each slice covers the dilate-8 disc around
    the core.
    """
    if tube.empty:
        raise DomainError("empty tube")
    d = phase.n - 1
    rad = tube.radius
    if xn_samples is None:
        R = tube.index.R
        lo, hi = max(tube.interval[0], -R), min(tube.interval[1], R)
        xn_samples = np.linspace(lo, hi, 9)
    if spacing is None:
        spacing = 0.25 / tube.index.theta_radius
    reach = reach if reach is not None else RINGS[-1] * rad
    mesh = packet.local_mesh(phase.frequency_domain)
    c0 = packet.coefficients.reshape(1, -1) * mesh.weights[None, :]
    if amplitude is not None:
        c0 = c0 * amplitude.a2(mesh.nodes)[None, :]
    inside = 0.0
    rings = {k: 0.0 for k in RINGS}
    nax = int(math.ceil(reach / spacing))
    offs = np.arange(-nax, nax + 1) * spacing
    for t in np.atleast_1d(xn_samples):
        center = tube.core_at(np.array([t]))[0]
        axes = [center[a] + offs for a in range(d)]
        if phase.split:
            vals = split_slice(phase, c0, mesh, axes, float(t))[0]
        else:
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
            pts = np.column_stack([pts, np.full(len(pts), t)])
            vals = _direct(phase, None, c0, mesh, pts)[0].reshape((len(offs),) * d)
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        if amplitude is not None:
            full = np.concatenate([grid, np.full(grid.shape[:-1] + (1,), t)], axis=-1)
            vals = vals * amplitude.a1(full / phase.lam)
        dist = np.linalg.norm(grid - center, axis=-1)
        mag = np.abs(vals)
        inside = max(inside, float(np.max(mag[dist < rad], initial=0.0)))
        for k in RINGS:
            sel = (dist > k / 2 * rad) & (dist <= k * rad)
            rings[k] = max(rings[k], float(np.max(mag[sel], initial=0.0)))
    seq = [inside] + [rings[k] for k in RINGS]
    monotone = all(a >= b for a, b in zip(seq, seq[1:]))
    return DecayProfile(inside, rings, monotone, len(np.atleast_1d(xn_samples)))


def export_packets_csv(path, packets, tubes=None) -> None:
    """One row per packet: theta index, w_theta, v, norm, tube interval and core file path (if any)."""
    tubes = tubes or {}
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["theta", "omega", "v", "norm", "interval_lo", "interval_hi"])
        seen = {}
        for p in packets:
            key = p.index.theta_center
            tid = seen.setdefault(key, len(seen))
            tube = tubes.get((p.index.theta_center, p.index.v))
            lo, hi = tube.interval if tube is not None and not tube.empty else ("", "")
            wr.writerow([tid, " ".join(f"{a:.10g}" for a in key), " ".join(f"{a:.10g}" for a in p.index.v),
                         f"{p.norm():.10g}", lo, hi])
