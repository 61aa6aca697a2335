"""Polynomials, transverse complete intersections and polynomial partitioning.

Point clouds with positive weights stand in for integrable functions: the
ham sandwich step looks for one polynomial that nearly bisects the mass of
every current cell at once, by lifting points to monomial features and
searching for a balancing hyperplane in feature space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg, ndimage, optimize, stats
from scipy.special import comb

from .derivatives import multi_indices
from .errors import DomainError, PartitionQualityError
from .geometry import Subspace

WALL_TOL = 1e-9
BISECT_TARGET = 0.05     # accept a bisector when every cell splits within 45/55
BISECT_FAIL = 0.25       # worse than this after all restarts is a failure
RESTARTS = 64


# ---------------------------------------------------------------------------
# polynomials


@lru_cache(maxsize=None)
def monomial_exponents(n: int, degree: int, constant: bool = True) -> np.ndarray:
    """Exponents of all monomials of total degree <= degree, graded."""
    rows = []
    for d in range(0 if constant else 1, degree + 1):
        rows.extend(multi_indices(n, d))
    out = np.array(rows, dtype=np.int64).reshape(-1, n)
    out.setflags(write=False)
    return out


def monomial_count(n: int, degree: int) -> int:
    return int(comb(n + degree, n, exact=True))


@dataclass(frozen=True, eq=False)
class Poly:
    """sum_a c_a y^a with y = (x - center) / scale."""

    exps: np.ndarray
    coefs: np.ndarray
    center: np.ndarray | None = None
    scale: float = 1.0

    def __post_init__(self):
        e = np.asarray(self.exps, dtype=np.int64)
        c = np.asarray(self.coefs, dtype=float)
        if e.ndim != 2 or len(e) != len(c):
            raise DomainError("exponents and coefficients do not match")
        object.__setattr__(self, "exps", e)
        object.__setattr__(self, "coefs", c)
        if self.center is not None:
            object.__setattr__(self, "center", np.asarray(self.center, float))

    @classmethod
    def from_terms(cls, terms: dict, n: int) -> "Poly":
        """Build from {exponent tuple: coefficient}."""
        exps = np.array(list(terms.keys()), dtype=np.int64).reshape(-1, n)
        return cls(exps, np.array(list(terms.values()), dtype=float))

    @property
    def n(self) -> int:
        return self.exps.shape[1]

    @property
    def degree(self) -> int:
        nz = self.coefs != 0
        return int(self.exps[nz].sum(axis=1).max()) if np.any(nz) else 0

    @property
    def coefficient_scale(self) -> float:
        return float(np.max(np.abs(self.coefs))) if len(self.coefs) else 0.0

    def _y(self, x):
        x = np.asarray(x, float)
        if self.center is not None:
            x = x - self.center
        return x / self.scale

    def _powers(self, y):
        top = int(self.exps.max()) if self.exps.size else 0
        return y[..., :, None] ** np.arange(top + 1)

    def monomials(self, x) -> np.ndarray:
        y = self._y(x)
        pw = self._powers(y)
        out = np.ones(y.shape[:-1] + (len(self.exps),))
        for k in range(self.n):
            out = out * pw[..., k, :][..., self.exps[:, k]]
        return out

    def __call__(self, x) -> np.ndarray:
        return self.monomials(x) @ self.coefs

    def grad(self, x) -> np.ndarray:
        y = self._y(x)
        pw = self._powers(y)
        out = np.zeros(y.shape)
        for k in range(self.n):
            term = np.ones(y.shape[:-1] + (len(self.exps),))
            for j in range(self.n):
                e = self.exps[:, j] - (1 if j == k else 0)
                term = term * pw[..., j, :][..., np.clip(e, 0, None)]
            out[..., k] = term @ (self.coefs * self.exps[:, k])
        return out / self.scale

    def to_dict(self) -> dict:
        return {
            "terms": {",".join(str(int(a)) for a in e): float(c) for e, c in zip(self.exps, self.coefs) if c != 0},
            "n": self.n,
            "center": None if self.center is None else self.center.tolist(),
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Poly":
        n = int(d["n"])
        terms = {tuple(int(a) for a in k.split(",")): float(v) for k, v in d["terms"].items()}
        if not terms:
            terms = {(0,) * n: 0.0}
        p = cls.from_terms(terms, n)
        return cls(p.exps, p.coefs, d.get("center"), float(d.get("scale", 1.0)))


def linear_poly(normal, offset: float = 0.0) -> Poly:
    """<normal, x> - offset."""
    normal = np.asarray(normal, float)
    n = len(normal)
    terms = {tuple(np.eye(n, dtype=int)[k]): float(normal[k]) for k in range(n)}
    terms[(0,) * n] = -float(offset)
    return Poly.from_terms(terms, n)


# ---------------------------------------------------------------------------
# varieties


@dataclass(frozen=True, eq=False)
class Variety:
    """Common zero set of P_1..P_k in R^N, of dimension N - k when transverse."""

    polys: tuple
    ambient_dim: int

    def __post_init__(self):
        object.__setattr__(self, "polys", tuple(self.polys))
        if any(p.n != self.ambient_dim for p in self.polys):
            raise DomainError("polynomial arity differs from the ambient dimension")

    @property
    def dim(self) -> int:
        return self.ambient_dim - len(self.polys)

    @property
    def degree_bar(self) -> int:
        return max((p.degree for p in self.polys), default=0)

    def residual(self, x) -> np.ndarray:
        return np.stack([p(x) for p in self.polys], axis=-1)

    def jacobian(self, x) -> np.ndarray:
        return np.stack([p.grad(x) for p in self.polys], axis=-2)

    def newton_step(self, x):
        """Least-norm correction J^T (J J^T)^{-1} P."""
        J = self.jacobian(x)
        P = self.residual(x)
        G = J @ np.swapaxes(J, -1, -2)
        sol = np.linalg.solve(G + 1e-300 * np.eye(G.shape[-1]), P[..., None])[..., 0]
        return np.einsum("...kN,...k->...N", J, sol)

    def project(self, x, iters: int = 30, tol: float = 1e-12):
        """Newton projection onto Z; returns (points, converged mask)."""
        z = np.array(x, dtype=float, copy=True)
        scale = max(1.0, float(np.max(np.abs(z)))) if z.size else 1.0
        for _ in range(iters):
            with np.errstate(all="ignore"):
                step = self.newton_step(z)
            bad = ~np.all(np.isfinite(step), axis=-1)
            step[bad] = 0.0
            z = z - step
            if np.all(np.linalg.norm(step, axis=-1) <= tol * scale):
                break
        res = np.linalg.norm(self.residual(z), axis=-1)
        gscale = np.linalg.norm(self.jacobian(z), axis=(-2, -1))
        conv = np.isfinite(res) & (res <= 1e-9 * np.maximum(gscale, 1.0) * scale)
        return z, conv

    def distance(self, x) -> np.ndarray:
        """Distance to the Newton projection; the first-order estimate where projection fails."""
        x = np.asarray(x, float)
        z, conv = self.project(x)
        d = np.linalg.norm(x - z, axis=-1)
        if not np.all(conv):
            P = np.abs(self.residual(x))
            g = np.linalg.norm(self.jacobian(x), axis=-1)
            est = np.max(P / np.where(g > 0, g, np.inf), axis=-1)
            d = np.where(conv, d, est)
        return d

    def tangent_space(self, z) -> Subspace:
        J = np.atleast_2d(self.jacobian(np.asarray(z, float)))
        return Subspace(linalg.null_space(J))

    def wedge_norm(self, z) -> np.ndarray:
        """|grad P_1 ^ ... ^ grad P_k| = sqrt(det J J^T)."""
        J = self.jacobian(z)
        return np.sqrt(np.abs(np.linalg.det(J @ np.swapaxes(J, -1, -2))))

    def check_transverse(self, samples: int = 64, radius: float = 1.0, seed: int = 0, rtol: float = 1e-8):
        """(min wedge norm relative to prod |grad P_j|, zero points found, ok)."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-radius, radius, (samples, self.ambient_dim))
        z, conv = self.project(x)
        z = z[conv]
        if len(z) == 0:
            return 0.0, z, False
        J = self.jacobian(z)
        scale = np.prod(np.linalg.norm(J, axis=-1), axis=-1)
        rel = self.wedge_norm(z) / np.where(scale > 0, scale, 1.0)
        worst = float(np.min(rel))
        return worst, z, worst >= rtol

    def to_dict(self) -> dict:
        return {"ambient_dim": self.ambient_dim, "dim": self.dim, "polys": [p.to_dict() for p in self.polys]}

    @classmethod
    def from_dict(cls, d: dict) -> "Variety":
        return cls(tuple(Poly.from_dict(p) for p in d["polys"]), int(d["ambient_dim"]))


def kakeya_variety(n: int, lam: float) -> Variety:
    """Z(P_1..P_k), P_j = lam y_{2j} - y_{2j-1} y_last, in the coordinates (x_1..x_{n-2}, x_n)."""
    if n < 4:
        raise DomainError("the compression variety needs n >= 4")
    N = n - 1
    polys = []
    for j in range(1, (n - 2) // 2 + 1):
        a, b = 2 * j - 2, 2 * j - 1   # 0-based slots of x_{2j-1}, x_{2j}
        e_b = [0] * N
        e_b[b] = 1
        e_ab = [0] * N
        e_ab[a] = 1
        e_ab[N - 1] = 1
        polys.append(Poly.from_terms({tuple(e_b): float(lam), tuple(e_ab): -1.0}, N))
    return Variety(tuple(polys), N)


def kakeya_dimension(n: int) -> int:
    return (n - 1) - (n - 2) // 2


def drop_middle(x) -> np.ndarray:
    """(x_1..x_n) -> (x_1..x_{n-2}, x_n), the coordinates of the compression variety."""
    x = np.asarray(x, float)
    return np.concatenate([x[..., :-2], x[..., -1:]], axis=-1)


# ---------------------------------------------------------------------------
# Monte Carlo neighbourhood volumes


def ball_volume(dim: int, radius: float) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * radius**dim


def uniform_ball(rng: np.random.Generator, m: int, dim: int, radius: float) -> np.ndarray:
    z = rng.standard_normal((m, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * (radius * rng.random(m) ** (1.0 / dim))[:, None]


def wilson_interval(hits: int, total: int, level: float = 0.95) -> tuple:
    z = stats.norm.ppf(0.5 + level / 2)
    p = hits / total
    den = 1 + z * z / total
    mid = (p + z * z / (2 * total)) / den
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


@dataclass
class VolumeEstimate:
    volume: float
    ci95: tuple
    hits: int
    samples: int

    def to_dict(self) -> dict:
        return {"volume": self.volume, "ci95": list(self.ci95), "hits": self.hits, "samples": self.samples}


def neighborhood_volume_mc(variety: Variety, width: float, ball_radius: float, samples: int = 100_000,
                           seed: int = 0, chunk: int = 50_000) -> VolumeEstimate:
    """|N_w(Z) cap B(0, rho)| by uniform sampling and Newton projection onto Z."""
    if samples < 10_000:
        raise DomainError("use at least 10^4 samples")
    N = variety.ambient_dim
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        x = uniform_ball(rng, m, N, ball_radius)
        # cheap first-order screen, then projection for the candidates
        P = np.abs(variety.residual(x))
        g = np.linalg.norm(variety.jacobian(x), axis=-1)
        est = np.max(P / np.where(g > 0, g, np.inf), axis=-1)
        cand = est <= 4.0 * width
        if np.any(cand):
            d = variety.distance(x[cand])
            hits += int(np.sum(d <= width))
        done += m
    vol = ball_volume(N, ball_radius)
    lo, hi = wilson_interval(hits, samples)
    return VolumeEstimate(vol * hits / samples, (vol * lo, vol * hi), hits, samples)


# ---------------------------------------------------------------------------
# polynomial partitioning


@dataclass(frozen=True, eq=False)
class WeightCloud:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.points, float))
        w = np.asarray(self.weights, float).reshape(-1)
        if len(p) != len(w):
            raise DomainError("points and weights differ in length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(w))):
            raise DomainError("cloud contains non-finite values")
        if np.any(w <= 0) or w.sum() <= 0:
            raise DomainError("weights must be positive")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "WeightCloud":
        p = np.atleast_2d(np.asarray(points, float))
        return cls(p, np.ones(len(p)))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total(self) -> float:
        return float(self.weights.sum())


@dataclass
class PartitionResult:
    bisectors: list
    cells: dict          # sign tuple -> (indices, mass)
    wall: np.ndarray
    wall_mass: float
    degree_total: int
    D: int
    total: float
    imbalances: list = field(default_factory=list)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.cells.values()])

    def quality(self) -> float:
        """max over cells of max(mass / ideal, ideal / mass), with ideal = total / D^n (inf for empty cells)."""
        return equidistribution_quality(self.masses(), self.total, self.D, self.dim)

    @property
    def dim(self) -> int:
        return self.bisectors[0].n if self.bisectors else 0

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "degree_total": self.degree_total,
            "total": self.total,
            "wall_mass": self.wall_mass,
            "imbalances": list(self.imbalances),
            "bisectors": [b.to_dict() for b in self.bisectors],
            "cells": [{"sign": list(k), "mass": m, "count": int(len(ix))} for k, (ix, m) in sorted(self.cells.items())],
        }


def equidistribution_quality(masses, total: float, D: int, n: int) -> float:
    ideal = total / D**n
    masses = np.asarray(masses, float)
    if len(masses) < D**n or np.any(masses <= 0):
        return math.inf
    return float(max(np.max(masses) / ideal, ideal / np.min(masses)))


def sign_vectors(bisectors, points, wall_tol: float = WALL_TOL):
    """(signs (m, s) in {-1, +1}, wall mask)."""
    pts = np.atleast_2d(points)
    signs = np.ones((len(pts), len(bisectors)), dtype=np.int8)
    wall = np.zeros(len(pts), dtype=bool)
    for j, b in enumerate(bisectors):
        v = b(pts)
        signs[:, j] = np.where(v >= 0, 1, -1)
        wall |= np.abs(v) <= wall_tol * max(b.coefficient_scale, 1e-300)
    return signs, wall


def _group(signs, wall, weights):
    cells = {}
    keys = [tuple(int(s) for s in row) for row in signs]
    for i, k in enumerate(keys):
        if wall[i]:
            continue
        cells.setdefault(k, []).append(i)
    return {k: (np.array(ix), float(weights[ix].sum())) for k, ix in cells.items()}


def cell_masses(result: PartitionResult, cloud: WeightCloud) -> list:
    """Recompute (sign vector, mass) for every cell from the stored bisectors."""
    signs, wall = sign_vectors(result.bisectors, cloud.points)
    cells = _group(signs, wall, cloud.weights)
    return sorted((k, m) for k, (_, m) in cells.items())


def veronese_degree(n: int, cells: int) -> int:
    """Smallest degree whose monomial count exceeds the number of cells."""
    d = 1
    while monomial_count(n, d) <= cells:
        d += 1
    return d


def _normalization(points):
    lo, hi = points.min(axis=0), points.max(axis=0)
    center = 0.5 * (lo + hi)
    scale = float(max(np.max(hi - lo) / 2, 1e-12))
    return center, scale


def _balance(q, cell_ids, weights, masses):
    sgn = np.where(q >= 0, 1.0, -1.0)
    s = np.bincount(cell_ids, weights=weights * sgn, minlength=len(masses))
    return np.abs(s) / masses


def _surrogate(params, feats, cell_ids, weights, masses, tau):
    """Per-cell smoothed signed masses and their Jacobian in (a0, b), with b used through b / |b|.

    ``tau`` holds one temperature per cell.
    """
    a0, b = params[0], params[1:]
    nb = max(np.linalg.norm(b), 1e-300)
    u = b / nb
    tp = tau[cell_ids]
    t = np.tanh((a0 + feats @ u) / tp)
    s = np.bincount(cell_ids, weights=weights * t, minlength=len(masses)) / masses
    dq = weights * (1.0 - t * t) / (tp * masses[cell_ids])
    Ju = np.zeros((len(masses), feats.shape[1]))
    np.add.at(Ju, cell_ids, dq[:, None] * feats)
    Jb = (Ju - (Ju @ u)[:, None] * u[None, :]) / nb
    J0 = np.bincount(cell_ids, weights=dq, minlength=len(masses))
    return s, np.column_stack([J0, Jb])


def _cell_temperatures(params, feats, cell_ids, ncell, kappa):
    """kappa times the mean absolute deviation of q inside each cell."""
    u = params[1:] / max(np.linalg.norm(params[1:]), 1e-300)
    q = feats @ u
    cnt = np.bincount(cell_ids, minlength=ncell)
    mean = np.bincount(cell_ids, weights=q, minlength=ncell) / np.maximum(cnt, 1)
    mad = np.bincount(cell_ids, weights=np.abs(q - mean[cell_ids]), minlength=ncell) / np.maximum(cnt, 1)
    return kappa * np.maximum(mad, 1e-12 * max(float(np.max(mad)), 1e-300))


def _refine_offset(q, cell_ids, weights, masses):
    """Best constant shift of q (one-parameter search over data quantiles)."""
    cands = np.unique(np.quantile(q, np.linspace(0.3, 0.7, 81)))
    best = (np.max(_balance(q, cell_ids, weights, masses)), 0.0)
    for c in cands:
        mid = -c
        val = np.max(_balance(q + mid, cell_ids, weights, masses))
        if val < best[0]:
            best = (val, mid)
    return best


def find_bisector(points, weights, cell_ids, degree: int, rng: np.random.Generator, restarts: int = RESTARTS,
                  target: float = BISECT_TARGET):
    """Polynomial of the given degree that nearly bisects every cell; returns (Poly, worst imbalance)."""
    n = points.shape[1]
    center, scale = _normalization(points)
    exps = monomial_exponents(n, degree, constant=False)
    base = Poly(exps, np.zeros(len(exps)), center, scale)
    raw = base.monomials(points)
    mu, sd = raw.mean(axis=0), raw.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    feats = (raw - mu) / sd
    masses = np.bincount(cell_ids, weights=weights)
    best = (math.inf, None)
    for _ in range(restarts):
        x = np.concatenate([[0.0], rng.standard_normal(len(exps))])
        for kappa in (0.3, 0.1, 0.03, 0.01):
            tau = _cell_temperatures(x, feats, cell_ids, len(masses), kappa)
            res = optimize.least_squares(lambda p: _surrogate(p, feats, cell_ids, weights, masses, tau)[0], x,
                                         jac=lambda p: _surrogate(p, feats, cell_ids, weights, masses, tau)[1],
                                         method="trf", max_nfev=200)
            x = res.x
        u = x[1:] / max(np.linalg.norm(x[1:]), 1e-300)
        q = x[0] + feats @ u
        worst, shift = _refine_offset(q, cell_ids, weights, masses)
        if worst < best[0]:
            best = (worst, (x[0] + shift, u))
        if best[0] <= target:
            break
    worst, (a0, u) = best
    # undo the feature standardization: q = a0 + sum u_k (m_k - mu_k) / sd_k
    coefs = np.concatenate([[a0 - float(np.sum(u * mu / sd))], u / sd])
    all_exps = np.vstack([np.zeros((1, n), dtype=np.int64), exps])
    return Poly(all_exps, coefs, center, scale), float(worst)


def ham_sandwich_partition(cloud: WeightCloud, D: int, seed: int = 0, restarts: int = RESTARTS,
                           wall_tol: float = WALL_TOL) -> PartitionResult:
    """n log2(D) rounds; round j adds one polynomial nearly bisecting the mass of every current cell."""
    n = cloud.dim
    if D < 2 or D & (D - 1):
        raise DomainError("D must be a power of two >= 2")
    if len(cloud.points) < D**n:
        raise DomainError(f"need at least D^n = {D ** n} points")
    rng = np.random.default_rng(seed)
    rounds = n * int(round(math.log2(D)))
    pts, w = cloud.points, cloud.weights
    bisectors, imbalances = [], []
    signs = np.zeros((len(pts), 0), dtype=np.int8)
    wall = np.zeros(len(pts), dtype=bool)
    failure = None
    for _ in range(rounds):
        live = ~wall
        keys, cell_ids = np.unique(signs[live], axis=0, return_inverse=True)
        cell_ids = cell_ids.reshape(-1)
        deg = veronese_degree(n, len(keys))
        poly, worst = find_bisector(pts[live], w[live], cell_ids, deg, rng, restarts)
        bisectors.append(poly)
        imbalances.append(worst)
        signs, wall = sign_vectors(bisectors, pts, wall_tol)
        if worst > BISECT_FAIL and failure is None:
            failure = worst
    cells = _group(signs, wall, w)
    result = PartitionResult(bisectors, cells, np.nonzero(wall)[0], float(w[wall].sum()),
                             int(sum(b.degree for b in bisectors)), D, cloud.total, imbalances)
    if failure is not None:
        raise PartitionQualityError(f"a bisection round ended with imbalance {failure:.3f}", best=result)
    return result


def grid_line_oracle(cloud: WeightCloud, D: int, angles: int = 180) -> dict:
    """Best (D-1)+(D-1) rotated quantile-line grid in the plane; exhaustive over rotation angles."""
    if cloud.dim != 2:
        raise DomainError("the grid-line oracle is planar")
    best = {"quality": math.inf}
    qs = np.linspace(0, 1, D + 1)[1:-1]
    for a in np.linspace(0, math.pi / 2, angles, endpoint=False):
        rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        y = cloud.points @ rot
        cx = np.quantile(y[:, 0], qs)
        cy = np.quantile(y[:, 1], qs)
        ix = np.searchsorted(cx, y[:, 0])
        iy = np.searchsorted(cy, y[:, 1])
        masses = np.bincount(ix * D + iy, weights=cloud.weights, minlength=D * D)
        q = equidistribution_quality(masses, cloud.total, D, 2)
        if q < best["quality"]:
            best = {"quality": q, "angle": float(a), "masses": masses}
    return best


def component_counts(result: PartitionResult, lo, hi, resolution: int = 256) -> dict:
    """Connected components of each sign cell on a fine planar grid (flood fill)."""
    if result.dim != 2:
        raise DomainError("component counting is implemented in the plane")
    axes = [np.linspace(lo[k], hi[k], resolution) for k in range(2)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
    signs, _ = sign_vectors(result.bisectors, pts)
    code = np.zeros(len(pts), dtype=np.int64)
    for j in range(signs.shape[1]):
        code = code * 2 + (signs[:, j] > 0)
    code = code.reshape(resolution, resolution)
    out = {}
    for c in np.unique(code):
        _, k = ndimage.label(code == c)
        key = tuple(1 if (int(c) >> (signs.shape[1] - 1 - j)) & 1 else -1 for j in range(signs.shape[1]))
        out[key] = int(k)
    return out


# ---------------------------------------------------------------------------
# tube / variety transversality


@dataclass(frozen=True)
class LineCurve:
    """t -> point + t * direction (degree-1 curve)."""

    point: tuple
    direction: tuple
    degree: int = 1

    def __call__(self, t):
        t = np.asarray(t, float)
        return np.asarray(self.point) + t[..., None] * np.asarray(self.direction)

    def derivative(self, t, order: int = 1):
        t = np.asarray(t, float)
        if order == 1:
            return np.broadcast_to(np.asarray(self.direction, float), t.shape + (len(self.point),)).copy()
        return np.zeros(t.shape + (len(self.point),))


@dataclass
class CoverResult:
    count: int
    bound: float
    within_bound: bool
    filtered: int
    sampled: int
    centers: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {"count": self.count, "bound": self.bound, "within_bound": self.within_bound,
                "filtered": self.filtered, "sampled": self.sampled}


def greedy_cover(points, radius: float) -> np.ndarray:
    """Centers of a greedy cover of the points by balls of the given radius."""
    pts = np.asarray(points, float)
    remaining = np.ones(len(pts), dtype=bool)
    centers = []
    while np.any(remaining):
        i = int(np.argmax(remaining))
        c = pts[i]
        centers.append(c)
        remaining &= np.linalg.norm(pts - c, axis=1) > radius
    return np.array(centers).reshape(-1, pts.shape[1] if pts.ndim == 2 else 0)


def tube_variety_transverse_cover(curve, variety: Variety, alpha: float, r: float, t_range, samples_per_step: int = 64,
                                  step: float | None = None, C: float = 10.0, seed: int = 0,
                                  ball_budget: int = 100_000) -> CoverResult:
    """Cover the part of Z near the tube where Z makes angle > alpha with the curve by (r / alpha)-balls.

    Points are sampled in r-balls along the curve, projected onto Z, kept
    when still within r of the sampled curve point, and filtered by the
    angle between the curve tangent and T_z Z.
    """
    rng = np.random.default_rng(seed)
    N = variety.ambient_dim
    lo, hi = t_range
    step = step if step is not None else r / 2
    ts = np.arange(lo, hi + step / 2, step)
    if len(ts) * samples_per_step > 5_000_000:
        raise DomainError("sampling budget exceeded; shorten the range or enlarge the step")
    base = curve(ts)
    tang = curve.derivative(ts, 1)
    t_idx = np.repeat(np.arange(len(ts)), samples_per_step)
    x = base[t_idx] + uniform_ball(rng, len(t_idx), N, r)
    z, conv = variety.project(x)
    near = conv & (np.linalg.norm(z - base[t_idx], axis=1) <= r)
    z, t_idx = z[near], t_idx[near]
    sampled = len(z)
    if sampled == 0:
        return CoverResult(0, 0.0, True, 0, 0, np.zeros((0, N)))
    keep = np.zeros(sampled, dtype=bool)
    for i in range(sampled):
        T = variety.tangent_space(z[i])
        keep[i] = float(T.angle_to_vector(tang[t_idx[i]])) > alpha
    filt = z[keep]
    centers = greedy_cover(filt, r / alpha) if len(filt) else np.zeros((0, N))
    if len(centers) > ball_budget:
        raise DomainError("ball budget exceeded")
    deg_curve = getattr(curve, "degree", 1)
    bound = C * float(max(variety.degree_bar, 1) * max(deg_curve, 1)) ** N
    return CoverResult(len(centers), bound, len(centers) <= bound, int(len(filt)), sampled, centers)
