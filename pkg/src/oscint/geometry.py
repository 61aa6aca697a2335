"""Boxes, frequency sectors, subspaces and bump profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .errors import DomainError


def sphere_area(k: int) -> float:
    """Surface measure of the unit sphere S^k in R^{k+1}."""
    return 2.0 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def bump(t):
    """Compactly supported bump exp(1 - 1/(1 - t^2)) on (-1, 1), equal to 1 at 0."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, and step(t) + step(1 - t) = 1."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    s = 1.0 - t
    b = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return a / (a + b)


def plateau(t, flat: float = 0.5):
    """Even bump equal to 1 on |t| <= flat and vanishing for |t| >= 1."""
    t = np.abs(np.asarray(t, dtype=float))
    return smooth_step((1.0 - t) / (1.0 - flat))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] in R^d."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or any(a >= b for a, b in zip(lo, hi)):
            raise DomainError(f"invalid box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, dim: int, half: float, center=None) -> "Box":
        c = np.zeros(dim) if center is None else np.asarray(center, float)
        return cls(tuple(c - half), tuple(c + half))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    @property
    def halfwidths(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.hi) - np.asarray(self.lo))

    def contains(self, x, tol: float = 0.0):
        x = np.asarray(x, dtype=float)
        return np.all((x >= np.asarray(self.lo) - tol) & (x <= np.asarray(self.hi) + tol), axis=-1)

    def contains_box(self, other: "Box") -> bool:
        return all(a <= b for a, b in zip(self.lo, other.lo)) and all(
            a >= b for a, b in zip(self.hi, other.hi)
        )

    def boundary_distance(self, other: "Box") -> float:
        """Distance from ``other`` (assumed inside) to the complement of this box."""
        gaps = [b - a for a, b in zip(self.lo, other.lo)] + [a - b for a, b in zip(self.hi, other.hi)]
        return max(0.0, min(gaps))

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return lo + (hi - lo) * rng.random((m, self.dim))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_dict(cls, d: dict) -> "Box":
        return cls(tuple(d["lo"]), tuple(d["hi"]))


@dataclass(frozen=True)
class SectorSpec:
    """Frequency sector {r0 <= |w| <= r1, angle(w, center) <= aperture} in R^d.

    An aperture of pi gives the full annulus.
    """

    center: tuple
    aperture: float
    r0: float
    r1: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        nrm = np.linalg.norm(c)
        if c.ndim != 1 or nrm == 0:
            raise DomainError("sector center must be a nonzero vector")
        if not (0 < self.aperture <= math.pi + 1e-15):
            raise DomainError(f"aperture must lie in (0, pi], got {self.aperture}")
        if not (0 < self.r0 < self.r1):
            raise DomainError(f"radial interval must satisfy 0 < r0 < r1, got {self.r0}, {self.r1}")
        object.__setattr__(self, "center", tuple(float(v) for v in c / nrm))
        object.__setattr__(self, "aperture", float(min(self.aperture, math.pi)))
        object.__setattr__(self, "r0", float(self.r0))
        object.__setattr__(self, "r1", float(self.r1))

    @classmethod
    def annulus(cls, dim: int, r0: float = 0.5, r1: float = 2.0) -> "SectorSpec":
        e = np.zeros(dim)
        e[-1] = 1.0
        return cls(tuple(e), math.pi, r0, r1)

    @classmethod
    def around(cls, direction, aperture: float, r0: float, r1: float) -> "SectorSpec":
        return cls(tuple(np.asarray(direction, float)), aperture, r0, r1)

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def is_full(self) -> bool:
        return self.aperture >= math.pi

    def angle_to_center(self, w):
        w = np.asarray(w, dtype=float)
        r = np.linalg.norm(w, axis=-1)
        c = np.einsum("...i,i->...", w, np.asarray(self.center)) / np.where(r > 0, r, 1.0)
        return np.arccos(np.clip(c, -1.0, 1.0))

    def contains(self, w, tol: float = 1e-12):
        w = np.asarray(w, dtype=float)
        r = np.linalg.norm(w, axis=-1)
        ok = (r >= self.r0 - tol) & (r <= self.r1 + tol)
        if not self.is_full:
            ok &= self.angle_to_center(w) <= self.aperture + tol
        return ok

    def frame(self) -> np.ndarray:
        """Orthonormal matrix whose first column is the center direction."""
        c = np.asarray(self.center)
        q, _ = np.linalg.qr(np.column_stack([c, np.eye(self.dim)]))
        q = q[:, : self.dim]
        if q[:, 0] @ c < 0:
            q = -q
        return q

    def cap_measure(self) -> float:
        d = self.dim
        if d == 1:
            return 2.0 if self.aperture >= math.pi / 2 else 1.0
        if d == 2:
            return 2.0 * self.aperture
        val, _ = integrate.quad(lambda s: math.sin(s) ** (d - 2), 0.0, self.aperture, epsabs=1e-14, epsrel=1e-13)
        return sphere_area(d - 2) * val

    def measure(self) -> float:
        d = self.dim
        return self.cap_measure() * (self.r1**d - self.r0**d) / d

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        """Uniform samples from the sector."""
        d = self.dim
        u = rng.random(m)
        r = (self.r0**d + u * (self.r1**d - self.r0**d)) ** (1.0 / d)
        if d == 1:
            sign = np.ones(m) if self.aperture < math.pi / 2 else rng.choice([-1.0, 1.0], size=m)
            return (sign * r * self.center[0])[:, None]
        psi = self._sample_polar(rng, m)
        q = self.frame()
        z = rng.standard_normal((m, d - 1))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        dirs = np.cos(psi)[:, None] * q[:, 0] + np.sin(psi)[:, None] * (z @ q[:, 1:].T)
        return r[:, None] * dirs

    def _sample_polar(self, rng, m):
        d = self.dim
        a = self.aperture
        if d == 2:
            return a * rng.random(m)
        if d == 3:
            # density sin(psi): invert 1 - cos(psi)
            return np.arccos(1.0 - rng.random(m) * (1.0 - math.cos(a)))
        grid = np.linspace(0.0, a, 4097)
        dens = np.sin(grid) ** (d - 2)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
        cdf /= cdf[-1]
        return np.interp(rng.random(m), cdf, grid)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "aperture": self.aperture, "r0": self.r0, "r1": self.r1}

    @classmethod
    def from_dict(cls, d: dict) -> "SectorSpec":
        return cls(tuple(d["center"]), float(d["aperture"]), float(d["r0"]), float(d["r1"]))


@dataclass(frozen=True)
class Subspace:
    """Linear subspace stored by an orthonormal basis (columns)."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def span(cls, vectors, ambient: int | None = None, rtol: float = 1e-10) -> "Subspace":
        v = np.asarray(vectors, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.size == 0:
            return cls(np.zeros((ambient or 0, 0)))
        q = linalg.orth(v, rcond=rtol)
        return cls(q)

    @classmethod
    def from_rows(cls, rows, rtol: float = 1e-10) -> "Subspace":
        return cls.span(np.asarray(rows, float).T, rtol=rtol)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient(self) -> int:
        return self.basis.shape[0]

    def complement(self) -> "Subspace":
        if self.dim == 0:
            return Subspace(np.eye(self.ambient))
        return Subspace(linalg.null_space(self.basis.T))

    def project(self, v):
        v = np.asarray(v, float)
        return (v @ self.basis) @ self.basis.T

    def angle_to_vector(self, v) -> np.ndarray:
        """Angle between each vector and the subspace, in [0, pi/2]."""
        v = np.asarray(v, float)
        inside = v @ self.basis
        across = v - inside @ self.basis.T
        return np.arctan2(np.linalg.norm(across, axis=-1), np.linalg.norm(inside, axis=-1))

    def same_span(self, other: "Subspace", tol: float = 1e-8) -> bool:
        if self.dim != other.dim:
            return False
        return bool(np.linalg.norm(self.basis - other.project(self.basis.T).T) <= tol * max(1, self.dim))

    def is_orthonormal(self, tol: float = 1e-10) -> bool:
        return bool(np.allclose(self.basis.T @ self.basis, np.eye(self.dim), atol=tol))


def principal_angles(a: Subspace, b: Subspace) -> np.ndarray:
    """Principal angles between two subspaces, ascending.

    Cosines give the large angles and sines the small ones (below pi/4), so
    nearly aligned subspaces are resolved to rounding level.
    """
    if a.dim == 0 or b.dim == 0:
        return np.array([])
    if a.dim < b.dim:
        a, b = b, a
    k = b.dim
    cos = np.sort(np.clip(np.linalg.svd(a.basis.T @ b.basis, compute_uv=False), 0.0, 1.0))[::-1][:k]
    resid = b.basis - a.basis @ (a.basis.T @ b.basis)
    sin = np.sort(np.clip(np.linalg.svd(resid, compute_uv=False), 0.0, 1.0))[:k]
    big = np.arccos(cos)
    small = np.arcsin(sin)
    return np.sort(np.where(cos > math.sqrt(0.5), small, big))


def angle_between(u, v) -> np.ndarray:
    """Angle between vectors, accurate near 0 and pi (no arccos of a rounded cosine)."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    a = u / np.linalg.norm(u, axis=-1, keepdims=True)
    b = v / np.linalg.norm(v, axis=-1, keepdims=True)
    return 2.0 * np.arcsin(np.clip(0.5 * np.linalg.norm(a - b, axis=-1), 0.0, 1.0))


def line_angle(u, v) -> np.ndarray:
    """Angle between the lines spanned by u and v, in [0, pi/2]."""
    a = angle_between(u, v)
    return np.minimum(a, np.pi - a)
