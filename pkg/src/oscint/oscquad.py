"""Oscillatory quadrature for T^lam f(x) = int e^{i phi^lam(x; w)} a^lam(x; w) f(w) dw.

Frequency meshes come in two kinds.  ``polar`` meshes use Gauss-Legendre
rules in radius and polar angle (periodic trapezoid in azimuth), so the
weights integrate the sector measure to machine precision.  ``cartesian``
meshes are uniform grids clipped to the sector; combined with a smooth
amplitude they give spectrally accurate trapezoid sums and turn every
fixed-time slice of a split phase into separable Fourier sums.

Node spacing follows a Nyquist guard in cycles: spacing <= 2 pi / (oversample * R_max),
where R_max bounds |d_w phi^lam(x; w)| over the evaluation points.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, DomainError, ResolutionError
from .geometry import SectorSpec
from .phase_core import Amplitude, PhaseField

MAX_NODES = 20_000_000
CHUNK = 4_000_000


# ---------------------------------------------------------------------------
# frequency meshes


@dataclass(frozen=True, eq=False)
class FrequencyMesh:
    nodes: np.ndarray
    weights: np.ndarray
    density: float
    spacing: float
    R_max: float
    oversample: float
    domain: SectorSpec
    kind: str = "polar"
    axes: tuple | None = field(default=None, repr=False)
    index: np.ndarray | None = field(default=None, repr=False)
    counts: tuple = ()

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def integrate(self, values) -> complex:
        return np.sum(self.weights * values, axis=-1)

    def l2(self, values) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(values) ** 2)))

    def sample(self, f):
        """Values of a callable f(w) on the nodes (arrays pass through)."""
        if callable(f):
            return np.asarray(f(self.nodes), dtype=complex)
        arr = np.asarray(f, dtype=complex)
        if arr.shape[-1] != self.size:
            raise DomainError(f"function has {arr.shape[-1]} samples but the mesh has {self.size} nodes")
        return arr


def _gl(a: float, b: float, m: int):
    t, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (b - a) * t + 0.5 * (a + b), 0.5 * (b - a) * w


def _gl_count(length: float, h: float) -> int:
    # the largest gap of an m-point Gauss-Legendre rule is about pi L / (2 m)
    return max(2, int(math.ceil(0.5 * math.pi * length / h)))


def _sphere_rule(k: int, h: float, radius: float):
    """Quadrature on S^k (points, weights) with arc spacing about h at the given radius."""
    if k == 0:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if k == 1:
        m = max(3, int(math.ceil(2 * math.pi * radius / h)))
        th = 2 * math.pi * np.arange(m) / m
        return np.column_stack([np.cos(th), np.sin(th)]), np.full(m, 2 * math.pi / m)
    m = _gl_count(math.pi * radius, h)
    psi, pw = _gl(0.0, math.pi, m)
    sub, sw = _sphere_rule(k - 1, h, radius)
    pts, wts = [], []
    for p, wp in zip(psi, pw):
        pts.append(np.column_stack([np.full(len(sub), math.cos(p)), math.sin(p) * sub]))
        wts.append(wp * math.sin(p) ** (k - 1) * sw)
    return np.concatenate(pts), np.concatenate(wts)


def _polar_mesh(domain: SectorSpec, h: float):
    d = domain.dim
    nr = _gl_count(domain.r1 - domain.r0, h)
    r, rw = _gl(domain.r0, domain.r1, nr)
    rw = rw * r ** (d - 1)
    if d == 1:
        signs = [1.0, -1.0] if domain.aperture >= math.pi / 2 else [1.0]
        dirs = np.array([[s * domain.center[0]] for s in signs])
        dw = np.ones(len(dirs))
        counts = (nr, len(dirs))
        gap = h
    elif d == 2:
        c = domain.center
        th0 = math.atan2(c[1], c[0])
        if domain.is_full:
            m = max(3, int(math.ceil(2 * math.pi * domain.r1 / h)))
            th = th0 + 2 * math.pi * np.arange(m) / m
            dw = np.full(m, 2 * math.pi / m)
        else:
            m = _gl_count(2 * domain.aperture * domain.r1, h)
            th, dw = _gl(th0 - domain.aperture, th0 + domain.aperture, m)
        dirs = np.column_stack([np.cos(th), np.sin(th)])
        counts = (nr, m)
        gap = domain.r1 * (2 * math.pi / m if domain.is_full else math.pi * domain.aperture / m)
    else:
        a = domain.aperture
        m = _gl_count(a * domain.r1, h)
        psi, pw = _gl(0.0, a, m)
        sub, sw = _sphere_rule(d - 2, h, domain.r1 * min(1.0, math.sin(a)) if a < math.pi / 2 else domain.r1)
        q = domain.frame()
        dirs, dw = [], []
        for p, wp in zip(psi, pw):
            dirs.append(math.cos(p) * q[:, 0] + math.sin(p) * (sub @ q[:, 1:].T))
            dw.append(wp * math.sin(p) ** (d - 2) * sw)
        dirs, dw = np.concatenate(dirs), np.concatenate(dw)
        counts = (nr, m, len(sub))
        gap = h
    total = len(r) * len(dirs)
    if total > MAX_NODES:
        raise BudgetError(f"mesh would have {total} nodes (cap {MAX_NODES})")
    nodes = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    weights = (rw[:, None] * dw[None, :]).reshape(-1)
    rgap = float(np.max(np.diff(r))) if nr > 1 else domain.r1 - domain.r0
    return nodes, weights, max(rgap, gap), counts


def _sector_bbox(domain: SectorSpec, pad: float):
    rng = np.random.default_rng(7)
    pts = domain.sample(rng, 20000)
    q = domain.frame()
    # include boundary extremes along the frame directions
    extra = [np.asarray(domain.center) * domain.r1, np.asarray(domain.center) * domain.r0]
    a = domain.aperture
    for j in range(1, domain.dim):
        for s in (1, -1):
            for r in (domain.r0, domain.r1):
                ang = min(a, math.pi / 2)
                extra.append(r * (math.cos(ang) * q[:, 0] + s * math.sin(ang) * q[:, j]))
    pts = np.concatenate([pts, np.array(extra)])
    lo = pts.min(axis=0) - pad
    hi = pts.max(axis=0) + pad
    if domain.is_full:
        lo = np.full(domain.dim, -domain.r1 - pad)
        hi = -lo
    return lo, hi


def _cartesian_mesh(domain: SectorSpec, h: float):
    d = domain.dim
    lo, hi = _sector_bbox(domain, h)
    counts = np.ceil((hi - lo) / h).astype(int) + 1
    if np.prod(counts.astype(float)) > 4 * MAX_NODES:
        raise BudgetError(f"cartesian mesh box {tuple(counts)} exceeds the node budget")
    # align the lattice with the origin so meshes of different extents share nodes
    axes = tuple(h * np.arange(math.floor(lo[a] / h), math.floor(lo[a] / h) + counts[a]) for a in range(d))
    keep_idx = []
    for block in np.array_split(np.arange(len(axes[0])), max(1, len(axes[0]) // 64)):
        sub = np.meshgrid(axes[0][block], *axes[1:], indexing="ij")
        pts = np.stack([s.ravel() for s in sub], axis=1)
        inside = domain.contains(pts, tol=0.0)
        ids = np.stack(np.unravel_index(np.nonzero(inside)[0], (len(block),) + tuple(len(a) for a in axes[1:])), axis=1)
        ids[:, 0] += block[0]
        keep_idx.append(ids)
    index = np.concatenate(keep_idx)
    if len(index) > MAX_NODES:
        raise BudgetError(f"mesh would have {len(index)} nodes (cap {MAX_NODES})")
    nodes = np.stack([axes[a][index[:, a]] for a in range(d)], axis=1)
    weights = np.full(len(nodes), h**d)
    return nodes, weights, axes, index


def make_mesh(domain: SectorSpec, R_max: float, oversample: float = 4.0, kind: str = "polar") -> FrequencyMesh:
    """Frequency mesh with spacing <= 2 pi / (oversample * R_max)."""
    if R_max < 1:
        raise DomainError("R_max must be >= 1")
    if oversample < 2:
        raise DomainError("oversample must be >= 2")
    h = 2 * math.pi / (oversample * R_max)
    if kind == "polar":
        nodes, weights, gap, counts = _polar_mesh(domain, h)
        return FrequencyMesh(nodes, weights, 1.0 / gap, gap, float(R_max), float(oversample), domain, "polar",
                             counts=counts)
    if kind == "cartesian":
        nodes, weights, axes, index = _cartesian_mesh(domain, h)
        return FrequencyMesh(nodes, weights, 1.0 / h, h, float(R_max), float(oversample), domain, "cartesian",
                             axes=axes, index=index, counts=tuple(len(a) for a in axes))
    raise DomainError(f"unknown mesh kind {kind!r}")


# ---------------------------------------------------------------------------
# spatial grids and sampled fields


@dataclass(frozen=True)
class GridRegion:
    """Midpoint grid on a box or a ball (cells whose midpoints lie inside)."""

    kind: str
    center: tuple
    extent: tuple        # halfwidths for a box, (radius,) for a ball
    resolution: tuple    # points per axis

    def __post_init__(self):
        if self.kind not in ("box", "ball"):
            raise DomainError(f"grid kind must be box or ball, got {self.kind!r}")
        res = tuple(int(r) for r in self.resolution)
        if len(res) == 1 and len(self.center) > 1:
            res = res * len(self.center)
        if any(r < 2 for r in res):
            raise DomainError("resolution must be at least 2 per axis")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        ext = tuple(float(e) for e in self.extent)
        if self.kind == "box" and len(ext) == 1:
            ext = ext * len(self.center)
        object.__setattr__(self, "extent", ext)

    @classmethod
    def ball(cls, dim: int, radius: float, spacing: float, center=None) -> "GridRegion":
        res = max(2, int(math.ceil(2 * radius / spacing)))
        return cls("ball", tuple(np.zeros(dim) if center is None else center), (radius,), (res,) * dim)

    @classmethod
    def box(cls, center, halfwidths, resolution) -> "GridRegion":
        return cls("box", tuple(center), tuple(np.atleast_1d(halfwidths)), tuple(np.atleast_1d(resolution)))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def halfwidths(self) -> np.ndarray:
        return np.asarray(self.extent if self.kind == "box" else self.extent * self.dim)

    @property
    def spacing(self) -> np.ndarray:
        return 2 * self.halfwidths / np.asarray(self.resolution)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list:
        c, hw, sp_ = np.asarray(self.center), self.halfwidths, self.spacing
        return [c[a] - hw[a] + (np.arange(self.resolution[a]) + 0.5) * sp_[a] for a in range(self.dim)]

    def mask(self) -> np.ndarray:
        if self.kind == "box":
            return np.ones(self.resolution, dtype=bool)
        grids = np.meshgrid(*[ax - c for ax, c in zip(self.axes(), self.center)], indexing="ij")
        return sum(g * g for g in grids) <= self.extent[0] ** 2

    def points(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes(), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        return pts[self.mask().ravel()]

    @property
    def count(self) -> int:
        return int(self.mask().sum())

    def farthest(self) -> float:
        c = np.linalg.norm(self.center)
        return float(c + (self.extent[0] if self.kind == "ball" else np.linalg.norm(self.halfwidths)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": list(self.center), "extent": list(self.extent),
                "resolution": list(self.resolution)}

    @classmethod
    def from_dict(cls, d: dict) -> "GridRegion":
        return cls(d["kind"], tuple(d["center"]), tuple(d["extent"]), tuple(d["resolution"]))


@dataclass(frozen=True, eq=False)
class FieldSample:
    grid: GridRegion
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        if len(v) != self.grid.count:
            raise DomainError(f"field has {len(v)} values for {self.grid.count} grid points")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", v)


def lp_norm(fs: FieldSample, p: float) -> float:
    """Midpoint-rule L^p norm of a sampled field; p = inf gives the max modulus."""
    a = np.abs(fs.values)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    if p < 1:
        raise DomainError("p must be >= 1")
    return float((np.sum(a**p) * fs.grid.cell_volume) ** (1.0 / p))


def save_field(path, fs: FieldSample) -> None:
    """Binary export: uint64 header length, JSON header, complex128 values in row-major grid order."""
    header = json.dumps({"dims": list(fs.grid.resolution), "dtype": "complex128", "count": int(fs.values.size),
                         "grid": fs.grid.to_dict()}).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(fs.values, dtype="<c16").tobytes())


def load_field(path) -> FieldSample:
    with open(path, "rb") as fh:
        (k,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(k))
        vals = np.frombuffer(fh.read(), dtype="<c16")
    return FieldSample(GridRegion.from_dict(header["grid"]), vals.copy())


def save_field_csv(path, fs: FieldSample) -> None:
    pts = fs.grid.points()
    cols = [f"x{i + 1}" for i in range(fs.grid.dim)] + ["re", "im"]
    data = np.column_stack([pts, fs.values.real, fs.values.imag])
    np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


# ---------------------------------------------------------------------------
# test data


@dataclass(frozen=True)
class Modulated:
    """f(w) = envelope(w) * sum_k c_k exp(-i <v_k, w>); the field of f sits near the points v_k."""

    vs: np.ndarray
    cs: np.ndarray
    center: np.ndarray | None = None
    width: float | None = None

    def __call__(self, w):
        w = np.asarray(w, float)
        val = np.exp(-1j * (w @ np.asarray(self.vs).T)) @ np.asarray(self.cs)
        if self.center is not None:
            r = np.linalg.norm(w - np.asarray(self.center), axis=-1) / self.width
            val = val * np.exp(-0.5 * r * r)
        return val

    @property
    def spatial_radius(self) -> float:
        base = float(np.max(np.linalg.norm(self.vs, axis=1))) if len(self.vs) else 0.0
        return base + (8.0 / self.width if self.width else 0.0)


def random_modulated(rng: np.random.Generator, dim: int, modes: int = 3, vmax: float = 4.0) -> Modulated:
    v = rng.standard_normal((modes, dim))
    v *= vmax * rng.random((modes, 1)) ** (1.0 / dim) / np.linalg.norm(v, axis=1, keepdims=True)
    c = rng.standard_normal(modes) + 1j * rng.standard_normal(modes)
    return Modulated(v, c)


def gaussian_bump(center, width: float) -> Modulated:
    center = np.asarray(center, float)
    return Modulated(np.zeros((1, len(center))), np.array([1.0 + 0j]), center, float(width))


# ---------------------------------------------------------------------------
# operator application


def required_R(phase: PhaseField, points, nodes, samples: int = 256) -> float:
    """Max of |d_w phi^lam(x; w)| over the given lam-scale points and (a subsample of) the nodes."""
    pts = np.atleast_2d(np.asarray(points, float))
    nodes = np.asarray(nodes, float)
    if len(nodes) > samples:
        idx = np.linspace(0, len(nodes) - 1, samples).astype(int)
        nodes = nodes[idx]
    best = 0.0
    for chunk in np.array_split(pts, max(1, len(pts) * len(nodes) // 200_000)):
        g = phase.grad_w(chunk[:, None, :] / phase.lam, nodes[None, :, :]) * phase.lam
        best = max(best, float(np.max(np.linalg.norm(g, axis=-1))))
    return best


def _extreme_points(grid: GridRegion) -> np.ndarray:
    c = np.asarray(grid.center)
    n = grid.dim
    hw = grid.halfwidths
    corners = np.array(np.meshgrid(*[[-1.0, 0.0, 1.0]] * n, indexing="ij")).reshape(n, -1).T
    pts = corners * hw
    if grid.kind == "ball":
        nrm = np.linalg.norm(pts, axis=1)
        pts = np.where(nrm[:, None] > 0, pts / np.where(nrm > 0, nrm, 1)[:, None] * grid.extent[0], 0.0)
    return c + pts


def nyquist_check(phase: PhaseField, mesh: FrequencyMesh, grid: GridRegion, f_radius: float = 0.0) -> float:
    need = required_R(phase, _extreme_points(grid), mesh.nodes) + f_radius
    if need > mesh.R_max * (1 + 1e-9):
        raise ResolutionError(
            f"mesh resolves |d_w phi| up to {mesh.R_max:.4g} but the grid needs {need:.4g}; refine the mesh"
        )
    return need


def _coefficients(phase, amplitude, fvals, mesh):
    fvals = np.atleast_2d(mesh.sample(fvals))
    a2 = amplitude.a2(mesh.nodes) if amplitude is not None else 1.0
    return fvals * (mesh.weights * a2)[None, :]


def _direct(phase, amplitude, c0, mesh, pts):
    """Direct summation sum_j c_j a1(x/lam) exp(i phi^lam(x; w_j)), chunked over points."""
    lam = phase.lam
    out = np.empty((c0.shape[0], len(pts)), dtype=complex)
    step = max(1, CHUNK // max(1, mesh.size))
    for s in range(0, len(pts), step):
        x = pts[s : s + step]
        ph = lam * phase.value(x[:, None, :] / lam, mesh.nodes[None, :, :])
        E = np.exp(1j * ph)
        out[:, s : s + step] = (E @ c0.T).T
    if amplitude is not None:
        out *= amplitude.a1(pts / lam)[None, :]
    return out


def _contract_order(nx, nw):
    return sorted(range(len(nx)), key=lambda a: nx[a] / max(nw[a], 1))


def split_slice(phase: PhaseField, c0, mesh: FrequencyMesh, xp_axes, t: float):
    """Field of a split phase on the tensor grid xp_axes at height t (lam-scale), without the a1 factor.

    Uses phi^lam(x; w) = <x', w> + phi^lam((0, t); w) and separable Fourier sums over a cartesian mesh.
    Returns an array of shape (F, len(ax_0), ..., len(ax_{d-1})).
    """
    d = mesh.dim
    lam = phase.lam
    origin = np.zeros(d + 1)
    origin[-1] = t / lam
    ph = lam * phase.value(origin, mesh.nodes)
    c = c0 * np.exp(1j * ph)[None, :]
    F = c.shape[0]
    C = np.zeros((F,) + tuple(len(a) for a in mesh.axes), dtype=complex)
    C[(slice(None),) + tuple(mesh.index.T)] = c
    nx = [len(a) for a in xp_axes]
    for a in _contract_order(nx, [len(ax) for ax in mesh.axes]):
        E = np.exp(1j * np.outer(xp_axes[a], mesh.axes[a]))
        C = np.moveaxis(np.tensordot(C, E, axes=([1 + a], [1])), -1, 1 + a)
    return C


def apply_operator(phase: PhaseField, amplitude: Amplitude | None, f, mesh: FrequencyMesh, grid: GridRegion,
                   f_radius: float = 0.0, method: str = "auto") -> FieldSample | list:
    """Sample T^lam f on the grid (lam-scale coordinates).

    ``f`` is a callable or an array of node values; an array with a leading
    batch axis returns a list of fields.  The split fast path is used for
    split phases on cartesian meshes; otherwise direct summation.
    """
    nyquist_check(phase, mesh, grid, f_radius)
    c0 = _coefficients(phase, amplitude, f, mesh)
    batched = not callable(f) and np.ndim(f) == 2
    use_split = method == "split" or (method == "auto" and phase.split and mesh.kind == "cartesian")
    if use_split:
        if not (phase.split and mesh.kind == "cartesian"):
            raise DomainError("split evaluation needs a split phase and a cartesian mesh")
        axes = grid.axes()
        mask = grid.mask()
        vals = np.empty((c0.shape[0],) + tuple(grid.resolution), dtype=complex)
        for i, t in enumerate(axes[-1]):
            vals[..., i] = split_slice(phase, c0, mesh, axes[:-1], t)
        if amplitude is not None:
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
            vals *= amplitude.a1(pts / phase.lam)[None]
        out = vals.reshape(c0.shape[0], -1)[:, mask.ravel()]
    else:
        out = _direct(phase, amplitude, c0, mesh, grid.points())
    fields = [FieldSample(grid, v) for v in out]
    return fields if batched else fields[0]


# ---------------------------------------------------------------------------
# L2 estimates


@dataclass
class FixedTimeResult:
    lhs: float
    rhs: float
    ratio: float
    boundary_fraction: float
    warning: str | None = None


def plancherel_constant(d: int) -> float:
    return (2 * math.pi) ** (d / 2)


def fixed_time_l2(phase: PhaseField, amplitude: Amplitude | None, f, mesh: FrequencyMesh, x_n: float,
                  grid_slice: GridRegion, f_radius: float = 0.0) -> FixedTimeResult:
    """Slice norm ||T^lam f(., x_n)||_{L^2} against ||f||_2, normalized by (2 pi)^{(n-1)/2}."""
    d = phase.n - 1
    if grid_slice.dim != d or grid_slice.kind != "box":
        raise DomainError("grid_slice must be an (n-1)-dimensional box grid")
    full = GridRegion("box", grid_slice.center + (x_n,), tuple(grid_slice.halfwidths) + (1.0,),
                      grid_slice.resolution + (2,))
    nyquist_check(phase, mesh, full, f_radius)
    c0 = _coefficients(phase, amplitude, f, mesh)
    axes = grid_slice.axes()
    if phase.split and mesh.kind == "cartesian":
        vals = split_slice(phase, c0, mesh, axes, x_n)[0]
    else:
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        pts = np.column_stack([pts, np.full(len(pts), x_n)])
        vals = _direct(phase, None, c0, mesh, pts)[0].reshape(grid_slice.resolution)
    if amplitude is not None:
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        full_pts = np.concatenate([pts, np.full(pts.shape[:-1] + (1,), x_n)], axis=-1)
        vals = vals * amplitude.a1(full_pts / phase.lam)
    dens = np.abs(vals) ** 2
    total = float(dens.sum())
    lhs = math.sqrt(total * grid_slice.cell_volume)
    rhs = mesh.l2(mesh.sample(f))
    edge = np.zeros_like(dens, dtype=bool)
    for a in range(d):
        k = max(1, grid_slice.resolution[a] // 20)
        sl = [slice(None)] * d
        sl[a] = slice(0, k)
        edge[tuple(sl)] = True
        sl[a] = slice(-k, None)
        edge[tuple(sl)] = True
    frac = float(dens[edge].sum() / total) if total > 0 else 0.0
    warn = f"boundary mass fraction {frac:.3g} exceeds 1%; widen the slice" if frac > 0.01 else None
    ratio = lhs / (plancherel_constant(d) * rhs) if rhs > 0 else 0.0
    return FixedTimeResult(lhs, rhs, ratio, frac, warn)


@dataclass
class HormanderConfig:
    oversample: float = 3.0
    spacing_factor: float = 0.9     # spacing along axis k = factor * pi / (spread of d_{x_k} phi)
    max_spacing_fraction: float = 0.125
    capture_tol: float = 1e-3       # slice energy allowed outside the evaluation window
    max_margin_doublings: int = 4


@dataclass
class HormanderResult:
    R: list
    ratios: np.ndarray              # (len(f_list), len(R))
    slopes: list
    spread: float                   # max ratio / min ratio over all R and f
    capture: list                   # worst certified Plancherel capture per R
    spacing: list

    def to_dict(self) -> dict:
        return {"R": list(self.R), "ratios": self.ratios.tolist(), "slopes": list(self.slopes),
                "spread": self.spread, "capture": list(self.capture),
                "spacing": [list(map(float, s)) for s in self.spacing]}


def axis_spreads(phase: PhaseField, nodes, xs=None) -> np.ndarray:
    """Per-axis extent of the cloud {d_x phi(x; w)}, maximized over the sample points xs.

    |T f|^2 has its spectrum in the difference set of this cloud, so a
    lattice with spacing below pi / spread_k along axis k sums it exactly.
    """
    nodes = np.asarray(nodes, float)
    if len(nodes) > 2000:
        nodes = nodes[np.linspace(0, len(nodes) - 1, 2000).astype(int)]
    xs = np.zeros((1, phase.n)) if xs is None else np.atleast_2d(xs)
    out = np.zeros(phase.n)
    for x in xs:
        g = phase.grad_x(x, nodes)
        out = np.maximum(out, g.max(axis=0) - g.min(axis=0))
    return out


def _lattice(lo, hi, s):
    """Midpoints k*s + s/2 of the global lattice lying in [lo, hi]."""
    k0 = math.ceil(lo / s - 0.5)
    k1 = math.floor(hi / s - 0.5)
    return (np.arange(k0, k1 + 1) + 0.5) * s


def _energy(C, spacing):
    return np.sum(np.abs(C.reshape(C.shape[0], -1)) ** 2, axis=1) * float(np.prod(spacing))


def kernel_radius(phase: PhaseField, amplitude: Amplitude | None, fs, spacing, tol: float,
                  start: float = 32.0) -> float:
    """Half-width r of the box [-r, r]^{n-1} holding all but ``tol`` of the x_n = 0 slice energy."""
    d = phase.n - 1
    sup = amplitude.frequency_support if amplitude is not None else phase.frequency_domain
    reach = start
    for _ in range(6):
        mesh = make_mesh(sup, 4 * reach, 2.0, kind="cartesian")
        c0 = _coefficients(phase, amplitude, np.stack([mesh.sample(f) for f in fs]), mesh)
        plan = np.sum(np.abs(c0) ** 2 / mesh.weights[None, :], axis=1) * (2 * math.pi) ** d
        ax = [_lattice(-2 * reach, 2 * reach, spacing[a]) for a in range(d)]
        dens = np.abs(split_slice(phase, c0, mesh, ax, 0.0)) ** 2 * float(np.prod(spacing[:d]))
        cheb = np.max(np.abs(np.stack(np.meshgrid(*ax, indexing="ij"))), axis=0)
        order = np.argsort(cheb.ravel())
        r_sorted = cheb.ravel()[order]
        r_need = 0.0
        for k in range(len(fs)):
            if plan[k] <= 0:
                continue
            cum = np.cumsum(dens[k].ravel()[order])
            idx = np.searchsorted(cum, (1 - tol) * plan[k])
            r_need = max(r_need, float(r_sorted[min(idx, len(r_sorted) - 1)]) if idx < len(cum) else np.inf)
        if r_need < reach:
            return r_need + float(np.max(spacing[:d]))
        reach *= 2
    raise ResolutionError("slice energy does not concentrate; the test function is too spread out")


def ball_l2_split(phase: PhaseField, amplitude: Amplitude | None, fs: list, R: float,
                  config: HormanderConfig | None = None, f_radius: float = 0.0):
    """||T^lam f||_{L^2(B(0,R))} for split phases, slice by slice over tube-following windows.

    Each slice is evaluated on a window around the tube positions
    x' = -d_w phi^lam((0, t); w) enlarged by the measured kernel radius.  The
    window is certified at a few heights: the unclipped window must carry the
    Plancherel mass up to capture_tol, otherwise the margin doubles.
    Returns (norms per f, ||f||_2 per f, worst capture, spacing per axis).
    """
    cfg = config or HormanderConfig()
    n, d, lam = phase.n, phase.n - 1, phase.lam
    sup = amplitude.frequency_support if amplitude is not None else phase.frequency_domain
    probe = make_mesh(sup, 8.0, 2.0, kind="polar").nodes
    heights = [np.zeros(n), np.r_[np.zeros(d), R / lam], np.r_[np.zeros(d), -R / lam]]
    spread = axis_spreads(phase, probe, heights)
    s = np.minimum(cfg.spacing_factor * math.pi / np.maximum(spread, 1e-12), cfg.max_spacing_fraction * R)
    margin = kernel_radius(phase, amplitude, fs, s, cfg.capture_tol)
    ball_pts = _extreme_points(GridRegion.ball(n, R, R))
    need = required_R(phase, ball_pts, probe) * 1.02 + 2 * margin + f_radius
    mesh = make_mesh(sup, need, cfg.oversample, kind="cartesian")
    fvals = np.stack([mesh.sample(f) for f in fs])
    c0 = _coefficients(phase, amplitude, fvals, mesh)
    fnorm = np.sqrt(np.sum(mesh.weights * np.abs(fvals) ** 2, axis=1))
    sub = mesh.nodes[np.linspace(0, mesh.size - 1, min(mesh.size, 2000)).astype(int)]

    def window(t, margin, clip):
        x0 = np.zeros(n)
        x0[-1] = t / lam
        p = -lam * phase.grad_w(x0, sub)
        lo, hi = p.min(axis=0) - margin, p.max(axis=0) + margin
        if clip is not None:
            lo, hi = np.maximum(lo, -clip), np.minimum(hi, clip)
        return [_lattice(lo[a], hi[a], s[a]) for a in range(d)]

    plan = np.sum(np.abs(c0) ** 2 / mesh.weights[None, :], axis=1) * (2 * math.pi) ** d
    ok = plan > 0
    worst = 1.0
    for _ in range(cfg.max_margin_doublings + 1):
        worst = 1.0
        for t in (0.0, 0.5 * R, -0.5 * R, R):
            ax = window(t, margin, None)
            got = _energy(split_slice(phase, c0, mesh, ax, t), s[:d])
            if np.any(ok):
                worst = min(worst, float(np.min(got[ok] / plan[ok])))
        if worst >= 1.0 - 2 * cfg.capture_tol:
            break
        margin *= 2.0
    mass = np.zeros(len(fs))
    for t in _lattice(-R, R, s[-1]):
        rho = math.sqrt(max(R * R - t * t, 0.0))
        ax = window(t, margin, rho)
        if any(len(a) == 0 for a in ax):
            continue
        C = split_slice(phase, c0, mesh, ax, t)
        grids = np.meshgrid(*ax, indexing="ij")
        inside = sum(g * g for g in grids) + t * t <= R * R
        dens = np.abs(C) ** 2
        if amplitude is not None:
            pts = np.stack(list(grids) + [np.full(grids[0].shape, t)], axis=-1)
            dens = dens * amplitude.a1(pts / lam)[None] ** 2
        mass += np.sum(dens[:, inside], axis=1) * float(np.prod(s))
    return np.sqrt(mass), fnorm, worst, s


def hormander_scan(phase: PhaseField, amplitude: Amplitude | None, fs, R_list, config: HormanderConfig | None = None,
                   f_radius: float | None = None) -> HormanderResult:
    """ratio(R) = ||T^lam f||_{L^2(B_R)} / ((2 pi)^{(n-1)/2} R^{1/2} ||f||_2) for each f and R."""
    if not phase.split:
        raise DomainError("hormander_scan evaluates split phases only")
    fs = list(fs) if isinstance(fs, (list, tuple)) else [fs]
    if any(R > phase.lam for R in R_list):
        raise DomainError("all R must satisfy R <= lambda")
    if f_radius is None:
        f_radius = max(getattr(f, "spatial_radius", 0.0) for f in fs)
    d = phase.n - 1
    ratios = np.zeros((len(fs), len(R_list)))
    caps, spacings = [], []
    for j, R in enumerate(R_list):
        norms, fnorm, cap, s = ball_l2_split(phase, amplitude, fs, float(R), config, f_radius)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratios[:, j] = np.where(fnorm > 0, norms / (plancherel_constant(d) * math.sqrt(R) * fnorm), 0.0)
        caps.append(cap)
        spacings.append(s)
    logR = np.log(np.asarray(R_list, float))
    slopes = []
    for row in ratios:
        slopes.append(float(np.polyfit(logR, np.log(row), 1)[0]) if np.all(row > 0) else 0.0)
    pos = ratios[ratios > 0]
    spread = float(pos.max() / pos.min()) if pos.size else 1.0
    return HormanderResult(list(R_list), ratios, slopes, spread, caps, spacings)
