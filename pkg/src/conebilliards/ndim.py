"""Lift of the planar construction to a convex hypersurface cone in R^n.

The section profile x1 = f1(x2) comes from the built polar curve; the
lifted graph F1(x2,...,x^{n-1}) = sqrt(f1(x2)^2 - (x3)^2 - ...) has a
negative-definite Hessian on the open unit disk, and the embedded planar
trajectory satisfies the billiard tangential equalities on the lift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .curve import PolarCurve
from .errors import ConvexityFailure, DomainError
from .spiral import SpiralTrajectory
from . import spiral

INV_TOL = 1e-15           # bisection tolerance for inverting x2(xi)
# Second-difference rounding noise is ~4 eps/h^2: 1e-5 would floor at 9e-6,
# 1e-4 keeps the cross-check honestly below 1e-6.
FD_STEP = 1e-4


class LiftedSection:
    """Graph form of the section curve plus its R^n lift.

    f1 is obtained by inverting x2(xi) = rho(xi) sin(xi) on (-pi/2, pi/2)
    (strictly increasing there) and coincides with sqrt(1 - x2^2) wherever
    rho == 1, in particular on x2 in (-1, 0] and [1/3, 1) once k1 >= 9.
    """

    def __init__(self, curve: PolarCurve, n: int):
        if n < 3:
            raise DomainError("ambient dimension must be >= 3")
        if spiral.xi(curve.k1) > math.asin(1.0 / 3.0) + 1e-15:
            raise DomainError(
                f"k1 = {curve.k1} too small: the profile must match the circle for x2 >= 1/3"
            )
        self.curve = curve
        self.n = int(n)

    # -- planar profile ---------------------------------------------------------
    def _xi_from_x2(self, x2):
        """Invert x2 = rho(xi) sin(xi) by bisection (vectorized)."""
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        if np.any(np.abs(x2) >= 1.0):
            raise DomainError("x2 must lie in (-1, 1)")
        lo = np.full_like(x2, -math.pi / 2.0 + 1e-12)
        hi = np.full_like(x2, math.pi / 2.0 - 1e-12)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            val = self.curve.polar(mid)[0] * np.sin(mid)
            high = val > x2
            hi = np.where(high, mid, hi)
            lo = np.where(high, lo, mid)
        return 0.5 * (lo + hi)

    def f1(self, x2):
        """(f1, f1', f1'') at x2, by the chain rule through xi."""
        scalar = np.ndim(x2) == 0
        xi_v = self._xi_from_x2(x2)
        f, fp, fpp = self._f1_at_xi(xi_v)
        if scalar:
            return float(f[0]), float(fp[0]), float(fpp[0])
        return f, fp, fpp

    def _f1_at_xi(self, xi_v):
        r, r1, r2 = self.curve.polar(xi_v)
        c, s = np.cos(xi_v), np.sin(xi_v)
        x1d = r1 * c - r * s
        x2d = r1 * s + r * c          # > 0 on (-pi/2, pi/2)
        x1dd = r2 * c - 2.0 * r1 * s - r * c
        x2dd = r2 * s + 2.0 * r1 * c - r * s
        f = r * c
        fp = x1d / x2d
        fpp = (x1dd * x2d - x1d * x2dd) / x2d**3
        return f, fp, fpp

    def f1_at_vertex(self, k: int):
        """Profile data at the section point of vertex k (xi known exactly)."""
        xi_v = np.atleast_1d(spiral.xi(k)).astype(float)
        f, fp, fpp = self._f1_at_xi(xi_v)
        return float(f[0]), float(fp[0]), float(fpp[0])

    # -- the lifted graph ---------------------------------------------------------
    def _split(self, y):
        y = np.asarray(y, dtype=float)
        if y.size != self.n - 2:
            raise DomainError(f"expected {self.n - 2} transverse coordinates")
        if float(np.dot(y, y)) >= 1.0:
            raise DomainError("point outside the open unit disk D^{n-2}")
        return y[0], y[1:]

    def F1(self, y) -> float:
        """sqrt(f1(x2)^2 - sum_{i>=3} (x^i)^2)."""
        x2, rest = self._split(y)
        f, _, _ = self.f1(x2)
        rad = f * f - float(np.dot(rest, rest))
        if rad <= 0.0:
            raise DomainError("negative radicand: point outside the lifted section")
        return math.sqrt(rad)

    def F1_batch(self, Y: np.ndarray) -> np.ndarray:
        """F1 for a batch of points, shape (N, n-2)."""
        Y = np.asarray(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[1] != self.n - 2:
            raise DomainError(f"expected shape (N, {self.n - 2})")
        if np.any(np.einsum("ij,ij->i", Y, Y) >= 1.0):
            raise DomainError("a point lies outside the open unit disk")
        f, _, _ = self.f1(Y[:, 0])
        rad = f * f - np.einsum("ij,ij->i", Y[:, 1:], Y[:, 1:])
        if np.any(rad <= 0.0):
            raise DomainError("negative radicand: point outside the lifted section")
        return np.sqrt(rad)

    def hessian(self, y) -> np.ndarray:
        """Closed-form Hessian of F1 at y = (x2, x3, ..., x^{n-1})."""
        return self.hessian_batch(np.asarray(y, dtype=float)[None, :])[0]

    def hessian_batch(self, Y: np.ndarray) -> np.ndarray:
        """Hessians for a batch of points, shape (N, n-2) -> (N, n-2, n-2)."""
        Y = np.asarray(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[1] != self.n - 2:
            raise DomainError(f"expected shape (N, {self.n - 2})")
        if np.any(np.einsum("ij,ij->i", Y, Y) >= 1.0):
            raise DomainError("a point lies outside the open unit disk")
        x2 = Y[:, 0]
        rest = Y[:, 1:]
        f, fp, fpp = self.f1(x2)
        rad = f * f - np.einsum("ij,ij->i", rest, rest)
        if np.any(rad <= 0.0):
            raise DomainError("negative radicand: point outside the lifted section")
        F = np.sqrt(rad)
        F3 = F**3
        m = self.n - 2
        H = np.empty((Y.shape[0], m, m))
        H[:, 0, 0] = (f * fpp + fp * fp) / F - (f * f * fp * fp) / F3
        for j in range(1, m):
            H[:, 0, j] = H[:, j, 0] = f * fp * rest[:, j - 1] / F3
        for i in range(1, m):
            for j in range(1, m):
                if i == j:
                    H[:, i, j] = -1.0 / F - rest[:, i - 1] ** 2 / F3
                else:
                    H[:, i, j] = -rest[:, i - 1] * rest[:, j - 1] / F3
        return H

    def hessian_fd(self, y, h: float = FD_STEP) -> np.ndarray:
        """Central-difference Hessian, the cross-check oracle."""
        y = np.asarray(y, dtype=float)
        m = y.size
        eye = np.eye(m)
        pts = [y]
        for i in range(m):
            pts += [y + h * eye[i], y - h * eye[i]]
        for i in range(m):
            for j in range(i + 1, m):
                pts += [y + h * (eye[i] + eye[j]), y + h * (eye[i] - eye[j]),
                        y - h * (eye[i] - eye[j]), y - h * (eye[i] + eye[j])]
        vals = self.F1_batch(np.stack(pts))
        H = np.empty((m, m))
        f0 = vals[0]
        idx = 1
        for i in range(m):
            H[i, i] = (vals[idx] - 2.0 * f0 + vals[idx + 1]) / h**2
            idx += 2
        for i in range(m):
            for j in range(i + 1, m):
                a, b, c, d = vals[idx:idx + 4]
                H[i, j] = H[j, i] = (a - b - c + d) / (4.0 * h * h)
                idx += 4
        return H


@dataclass
class NegdefReport:
    n: int
    grid_size: int
    max_eigenvalue: float
    margin: float
    failures: List[dict] = field(default_factory=list)
    scalar_max: float = 0.0        # max of f1 f1'' + f1'^2 on (-1, 1)
    window_f1p_range: tuple = ()   # observed f1' range on (0, 1/3)
    window_f1_range: tuple = ()    # observed f1 range on (0, 1/3)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "grid_size": self.grid_size,
            "max_eigenvalue": self.max_eigenvalue,
            "margin": self.margin,
            "failures": self.failures,
            "scalar_max": self.scalar_max,
            "window_f1p_range": list(self.window_f1p_range),
            "window_f1_range": list(self.window_f1_range),
        }


def _disk_grid(m: int, target: int, margin: float) -> np.ndarray:
    """Regular lattice on the unit ball of dimension m with at least
    ``target`` points, boundary margin cut."""
    per_axis = max(3, int(round(target ** (1.0 / m))))
    while True:
        axes = [np.linspace(-1.0 + margin, 1.0 - margin, per_axis)] * m
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
        pts = pts[np.einsum("ij,ij->i", pts, pts) < (1.0 - margin) ** 2]
        if pts.shape[0] >= target or per_axis > 4096:
            return pts
        per_axis = int(per_axis * 1.3) + 1


def negdef_check(
    section: LiftedSection,
    grid_target: int = 10_000,
    margin: float = 1e-3,
    strict: bool = True,
) -> NegdefReport:
    """Hessian eigenvalue sweep plus the scalar margin f1 f1'' + f1'^2 < 0.

    Raises ConvexityFailure (with the offending location) on any
    non-negative eigenvalue when strict.
    """
    m = section.n - 2
    pts = _disk_grid(m, grid_target, margin)
    failures = []
    H_all = section.hessian_batch(pts)
    eigs = np.linalg.eigvalsh(H_all)
    worst_idx = int(np.argmax(eigs[:, -1]))
    worst = float(eigs[worst_idx, -1])
    bad = np.nonzero(eigs[:, -1] >= 0.0)[0]
    for i in bad[:32]:
        failures.append({"point": pts[i].tolist(), "max_eig": float(eigs[i, -1])})

    # scalar route: f1 f1'' + f1'^2 on (-1, 1), plus the window bounds
    xs = np.linspace(-1.0 + margin, 1.0 - margin, 4001)
    f, fp, fpp = section.f1(xs)
    scalar = f * fpp + fp * fp
    win = (xs > 1e-6) & (xs < 1.0 / 3.0)
    report = NegdefReport(
        n=section.n,
        grid_size=int(pts.shape[0]),
        max_eigenvalue=worst,
        margin=-worst,
        failures=failures,
        scalar_max=float(scalar.max()),
        window_f1p_range=(float(fp[win].min()), float(fp[win].max())),
        window_f1_range=(float(f[win].min()), float(f[win].max())),
    )
    if strict and (failures or worst >= 0.0):
        raise ConvexityFailure(
            f"Hessian not negative definite: max eigenvalue {worst}",
            location=failures[0] if failures else None,
        )
    return report


@dataclass
class EmbedReport:
    n: int
    start_k: int
    count: int
    max_tangential_residual: float
    max_perpendicular_residual: float


def embed3(y: np.ndarray, n: int) -> np.ndarray:
    """(y1, y2, y3) -> (y1, y2, 0, ..., 0, y3)."""
    out = np.zeros(n)
    out[0], out[1], out[-1] = y[0], y[1], y[2]
    return out


def embedded_reflection_check(
    section: LiftedSection,
    trajectory: SpiralTrajectory,
    count: int = 1000,
    start_k: Optional[int] = None,
) -> EmbedReport:
    """Tangential equalities of the embedded trajectory on the lift.

    At each vertex: <v~_k, e~_j> = 0 for 3 <= j <= n-1 (embedding zeros)
    and <v~_k, e~_1>, <v~_k, e~_2> match across the reflection.
    """
    n = section.n
    k_start = start_k if start_k is not None else max(section.curve.k1 + 1, trajectory.k0)
    if k_start <= section.curve.k1:
        raise DomainError("start index must exceed k1")
    ks = np.arange(k_start, k_start + count)
    v_in = trajectory.direction(ks - 1)      # (count, 3): planar components...
    v_out = trajectory.direction(ks)
    xi_v = spiral.xi(ks).astype(float)
    f, fp, _ = section._f1_at_xi(xi_v)
    x2 = np.sin(xi_v)                         # rho(xi_k) = 1 at vertices
    # <v~, e~_1> = v1 f + v2 x2 + v3; <v~, e~_2> = v1 fp + v2; embedding puts
    # zeros in slots 3..n-1, so those inner products vanish identically.
    def dots(v):
        return (v[:, 0] * f + v[:, 1] * x2 + v[:, 2],
                v[:, 0] * fp + v[:, 1])
    in1, in2 = dots(v_in)
    out1, out2 = dots(v_out)
    max_tan = float(max(np.abs(in1 - out1).max(), np.abs(in2 - out2).max()))
    # transverse slots of the embedded directions against the unit e~_j
    max_perp = 0.0
    for k in ks[:: max(1, count // 32)]:
        ve = embed3(trajectory.direction(int(k)), n)
        for j in range(2, n - 1):
            max_perp = max(max_perp, abs(float(ve[j])))
    return EmbedReport(
        n=n, start_k=k_start, count=count,
        max_tangential_residual=max_tan,
        max_perpendicular_residual=max_perp,
    )
