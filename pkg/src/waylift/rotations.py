"""Euler angle / rotation matrix conversions and small SO(3) helpers.

Convention used throughout the package: intrinsic Z-X-Y. An angle triple
``(a, b, c)`` means a rotation about the body Z axis by ``a``, then about the
new X axis by ``b``, then about the new Y axis by ``c``; as matrices
``R = Rz(a) @ Rx(b) @ Ry(c)``. Serialized files tag this as ``"ZXY"``.

Gimbal lock (middle angle at +/-pi/2) is resolved deterministically: the
third angle is set to 0 and its contribution folded into the first.

All functions broadcast over leading axes: angle inputs of shape (..., 3)
produce matrices of shape (..., 3, 3) and vice versa.
"""

from __future__ import annotations

import numpy as np

EULER_CONVENTION = "ZXY"

# |R[2,1]| at or above this counts as gimbal lock.
_LOCK_THRESHOLD = 1.0 - 1e-12


def _e2m(angles: np.ndarray) -> np.ndarray:
    """euler_to_matrix without input validation (internal hot path)."""
    z, x, y = angles[..., 0], angles[..., 1], angles[..., 2]
    cz, sz = np.cos(z), np.sin(z)
    cx, sx = np.cos(x), np.sin(x)
    cy, sy = np.cos(y), np.sin(y)
    out = np.empty(angles.shape[:-1] + (3, 3), dtype=float)
    out[..., 0, 0] = cz * cy - sz * sx * sy
    out[..., 0, 1] = -sz * cx
    out[..., 0, 2] = cz * sy + sz * sx * cy
    out[..., 1, 0] = sz * cy + cz * sx * sy
    out[..., 1, 1] = cz * cx
    out[..., 1, 2] = sz * sy - cz * sx * cy
    out[..., 2, 0] = -cx * sy
    out[..., 2, 1] = sx
    out[..., 2, 2] = cx * cy
    return out


def _m2e(R: np.ndarray) -> np.ndarray:
    """matrix_to_euler without input validation (internal hot path)."""
    sx = np.clip(R[..., 2, 1], -1.0, 1.0)
    x = np.arcsin(sx)
    z_reg = np.arctan2(-R[..., 0, 1], R[..., 1, 1])
    y_reg = np.arctan2(-R[..., 2, 0], R[..., 2, 2])
    # At lock only z +/- y is observable; fold everything into z, zero y.
    z_lock = np.arctan2(R[..., 1, 0], R[..., 0, 0])
    locked = np.abs(sx) >= _LOCK_THRESHOLD
    z = np.where(locked, z_lock, z_reg)
    y = np.where(locked, 0.0, y_reg)
    return np.stack([z, x, y], axis=-1)


def euler_to_matrix(angles: np.ndarray) -> np.ndarray:
    """Convert Z-X-Y intrinsic Euler angles (..., 3) to rotation matrices.

    Raises:
        ValueError: if any angle is non-finite.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {angles.shape}")
    if not np.all(np.isfinite(angles)):
        raise ValueError("euler angles must be finite")
    return _e2m(angles)


def matrix_to_euler(matrices: np.ndarray) -> np.ndarray:
    """Recover Z-X-Y intrinsic Euler angles (..., 3) from rotation matrices.

    The returned angles always satisfy
    ``euler_to_matrix(matrix_to_euler(R)) == R`` to high precision; the
    angles themselves may alias the ones that produced ``R``.

    Raises:
        ValueError: if the input is not orthonormal with determinant +1
            within 1e-6.
    """
    R = np.asarray(matrices, dtype=float)
    if R.shape[-2:] != (3, 3):
        raise ValueError(f"expected trailing shape (3, 3), got {R.shape}")
    _check_rotation(R)
    return _m2e(R)


def _check_rotation(R: np.ndarray) -> None:
    gram = np.einsum("...ij,...ik->...jk", R, R)
    err = np.abs(gram - np.eye(3)).max()
    if not np.isfinite(err) or err > 1e-6:
        raise ValueError(f"input is not orthonormal (max |R^T R - I| = {err:.3g})")
    det = np.linalg.det(R)
    if np.abs(det - 1.0).max() > 1e-6:
        raise ValueError("input has determinant != +1 (reflection or degenerate)")


def so3_exp(vec: np.ndarray) -> np.ndarray:
    """Rodrigues map: rotation vectors (..., 3) to rotation matrices."""
    vec = np.asarray(vec, dtype=float)
    theta = np.linalg.norm(vec, axis=-1, keepdims=True)
    small = theta < 1e-12
    axis = np.where(small, 0.0, vec / np.where(small, 1.0, theta))
    th = theta[..., 0]
    K = _skew(axis)
    K2 = K @ K
    s = np.sin(th)[..., None, None]
    c1 = (1.0 - np.cos(th))[..., None, None]
    return np.eye(3) + s * K + c1 * K2


def so3_log(R: np.ndarray) -> np.ndarray:
    """Inverse Rodrigues map: rotation matrices to rotation vectors (..., 3)."""
    R = np.asarray(R, dtype=float)
    trace = R[..., 0, 0] + R[..., 1, 1] + R[..., 2, 2]
    cos_th = np.clip(0.5 * (trace - 1.0), -1.0, 1.0)
    theta = np.arccos(cos_th)
    w = np.stack(
        [
            R[..., 2, 1] - R[..., 1, 2],
            R[..., 0, 2] - R[..., 2, 0],
            R[..., 1, 0] - R[..., 0, 1],
        ],
        axis=-1,
    )
    sin_th = np.sin(theta)
    # Three regimes: small angle (w/2), generic (w * theta / 2 sin),
    # near pi (axis from the diagonal).
    generic = theta[..., None] > 1e-7
    near_pi = theta[..., None] > np.pi - 1e-5
    scale = np.where(
        generic,
        theta[..., None] / np.where(np.abs(sin_th[..., None]) < 1e-300, 1.0, 2.0 * sin_th[..., None]),
        0.5,
    )
    out = w * scale
    if np.any(near_pi):
        out = np.where(near_pi, _log_near_pi(R, theta), out)
    return out


def _log_near_pi(R: np.ndarray, theta: np.ndarray) -> np.ndarray:
    # axis^2 from the diagonal of R = I + (1-cos)*(aa^T - I) at theta ~ pi;
    # signs recovered from the symmetric off-diagonal parts, anchored on the
    # largest axis component (ties broken by index, deterministic).
    flat_R = R.reshape(-1, 3, 3)
    flat_th = np.asarray(theta, dtype=float).reshape(-1)
    out = np.zeros((flat_R.shape[0], 3))
    for i in range(flat_R.shape[0]):
        M = flat_R[i]
        axis_sq = np.clip((np.diag(M) + 1.0) / 2.0, 0.0, None)
        a = int(np.argmax(axis_sq))
        axis = np.sqrt(axis_sq)
        for o in range(3):
            if o == a:
                continue
            if M[a, o] + M[o, a] < 0:
                axis[o] = -axis[o]
        n = np.linalg.norm(axis)
        if n > 1e-12:
            axis = axis / n
        out[i] = axis * flat_th[i]
    return out.reshape(R.shape[:-2] + (3,))


def rotation_angle(R: np.ndarray) -> np.ndarray:
    """Geodesic angle of rotation matrices, in [0, pi]."""
    R = np.asarray(R, dtype=float)
    trace = R[..., 0, 0] + R[..., 1, 1] + R[..., 2, 2]
    return np.arccos(np.clip(0.5 * (trace - 1.0), -1.0, 1.0))


def _skew(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3), dtype=float)
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out
