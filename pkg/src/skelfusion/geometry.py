"""Rigid-body math shared by every other module.

Conventions: meters, radians, row-major 3x3 rotation matrices.  A
``RigidTransform`` maps a point ``p`` to ``R @ p + t``.  Vectors are plain
``numpy`` arrays of shape ``(3,)``; point sets are ``(N, 3)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ORTHONORMAL_TOL = 1e-9


class GeometryError(ValueError):
    """Raised for degenerate geometric input (rank loss, collinearity, ...)."""


def as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise GeometryError(f"non-finite vector {a!r}")
    return a


def is_rotation(r: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    return bool(
        np.allclose(r.T @ r, np.eye(3), atol=tol, rtol=0.0)
        and abs(np.linalg.det(r) - 1.0) <= tol
    )


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = as_vec3(self.translation).copy()
        if not is_rotation(r):
            raise GeometryError("rotation is not orthonormal with det +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> RigidTransform:
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, m) -> RigidTransform:
        m = np.asarray(m, dtype=float)
        if m.shape == (16,):
            m = m.reshape(4, 4)
        if m.shape != (4, 4):
            raise GeometryError(f"expected a 4x4 matrix, got shape {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise GeometryError("last row of a rigid 4x4 matrix must be (0, 0, 0, 1)")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, p) -> np.ndarray:
        """Map a point ``(3,)`` or a point set ``(N, 3)``."""
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.T + self.translation

    def rotate(self, v) -> np.ndarray:
        """Rotate direction vectors (no translation)."""
        return np.asarray(v, dtype=float) @ self.rotation.T

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def __repr__(self) -> str:
        return (
            f"RigidTransform(rotation={self.rotation.tolist()}, "
            f"translation={self.translation.tolist()})"
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return ``a ∘ b``: apply ``b`` first, then ``a``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -(rt @ t.translation))


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation to ``m`` in the Frobenius sense.

    Raises GeometryError when ``m`` is rank deficient, because the projection
    is not unique there and a reflection could otherwise slip through.
    """
    u, s, vt = np.linalg.svd(m)
    if s[-1] <= 1e-12 * max(s[0], 1.0):
        raise GeometryError(f"cannot project rank-deficient matrix to SO(3) (singular values {s})")
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def average_rotations(rs: Sequence[np.ndarray]) -> np.ndarray:
    """Chordal L2 mean of a non-empty list of rotation matrices."""
    if len(rs) == 0:
        raise GeometryError("cannot average an empty list of rotations")
    flat = np.array([np.asarray(r, dtype=float).reshape(9) for r in rs])
    # Sum in a canonical (lexicographic) order so any permutation of the
    # input gives a bit-identical result.
    acc = np.zeros(9)
    for row in flat[np.lexsort(flat.T[::-1])]:
        acc = acc + row
    mean = acc.reshape(3, 3) / len(rs)
    u, s, vt = np.linalg.svd(mean)
    # Antipodal inputs cancel to a rank-deficient mean; no unique answer.
    if s[-1] <= 1e-9:
        raise GeometryError(f"degenerate rotation mean (singular values {s})")
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def average_translations(ts: Sequence) -> np.ndarray:
    if len(ts) == 0:
        raise GeometryError("cannot average an empty list of translations")
    flat = np.array([as_vec3(t) for t in ts])
    acc = np.zeros(3)
    for row in flat[np.lexsort(flat.T[::-1])]:
        acc = acc + row
    return acc / len(ts)


def align_least_squares(src, dst) -> RigidTransform:
    """Rigid transform minimising sum ||R @ src_k + t - dst_k||^2 (Kabsch).

    ``src`` and ``dst`` are matching ``(N, 3)`` arrays, N >= 3 and not all
    collinear.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise GeometryError(f"mismatched point sets {src.shape} vs {dst.shape}")
    if len(src) < 3:
        raise GeometryError(f"need at least 3 point pairs, got {len(src)}")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    a = src - mu_s
    b = dst - mu_d
    h = a.T @ b
    u, s, vt = np.linalg.svd(h)
    scale = max(np.linalg.norm(a, axis=1).max(), np.linalg.norm(b, axis=1).max(), 1e-300)
    # Rank <= 1 cross-covariance means the rotation about the line is free.
    if s[1] <= 1e-10 * scale * scale * len(src):
        raise GeometryError("degenerate (collinear or coincident) point configuration")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, mu_d - r @ mu_s)


def align_pairs(pairs: Iterable[tuple]) -> RigidTransform:
    """``align_least_squares`` over an iterable of ``(src, dst)`` vector pairs."""
    pairs = list(pairs)
    if not pairs:
        raise GeometryError("no point pairs")
    src = np.array([as_vec3(p) for p, _ in pairs])
    dst = np.array([as_vec3(q) for _, q in pairs])
    return align_least_squares(src, dst)


def orthonormalize(x, y, z=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gram-Schmidt in the order x, y; z is rebuilt as x × y.

    The input z is accepted for symmetry with callers holding a full triad
    but never read.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = math.sqrt(x @ x)
    if not math.isfinite(nx) or nx <= 1e-12:
        raise GeometryError("x axis is zero")
    ex = x / nx
    y_perp = y - (y @ ex) * ex
    y_perp = y_perp - (y_perp @ ex) * ex  # second pass restores orthogonality for near-parallel input
    ny = math.sqrt(y_perp @ y_perp)
    if not math.isfinite(ny) or ny <= 1e-12 * max(math.sqrt(y @ y), 1.0):
        raise GeometryError("x and y axes are parallel")
    ey = y_perp / ny
    # explicit cross product; np.cross dominates the cost for single vectors
    ez = np.array([ex[1] * ey[2] - ex[2] * ey[1], ex[2] * ey[0] - ex[0] * ey[2], ex[0] * ey[1] - ex[1] * ey[0]])
    return ex, ey, ez


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotvec_to_matrix(v) -> np.ndarray:
    """Rodrigues formula for a rotation vector (axis * angle)."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v)
    if theta < 1e-15:
        return np.eye(3)
    k = v / theta
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)


def rotation_angle(r: np.ndarray) -> float:
    """Angle in radians of a rotation matrix."""
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def transform_error(estimate: RigidTransform, truth: RigidTransform) -> tuple[float, float]:
    """(rotation error in degrees, translation error in meters)."""
    dr = estimate.rotation @ truth.rotation.T
    return np.degrees(rotation_angle(dr)), float(np.linalg.norm(estimate.translation - truth.translation))


def random_rotation(rng: np.random.Generator, max_angle: float | None = None) -> np.ndarray:
    """Uniform rotation, or uniform axis with angle uniform in [0, max_angle]."""
    if max_angle is None:
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return rotvec_to_matrix(axis * rng.uniform(0.0, max_angle))
