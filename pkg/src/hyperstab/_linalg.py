"""Banded helpers for the spectral-element matrices."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import SingularOperatorError


def to_banded(A: np.ndarray, bw: int) -> np.ndarray:
    """Dense (m, m) -> LAPACK general band storage with bw sub/super diagonals."""
    m = A.shape[0]
    ab = np.zeros((2 * bw + 1, m))
    for k in range(-bw, bw + 1):
        d = np.diagonal(A, k)
        if k >= 0:
            ab[bw - k, k:] = d
        else:
            ab[bw - k, : m + k] = d
    return ab


def solve_scaled(A: np.ndarray, rhs: np.ndarray, bw: int, colscale: np.ndarray | None = None) -> np.ndarray:
    """Solve A x = rhs with column scaling x = c y and row equilibration.

    Matrices built on sinh-weighted grids span hundreds of orders of
    magnitude; scaling keeps partial pivoting meaningful.
    """
    m = A.shape[0]
    c = np.ones(m) if colscale is None else np.where(np.abs(colscale) > 0, np.abs(colscale), 1.0)
    As = A * c[None, :]
    r = np.abs(As).sum(axis=1)
    r = np.where(r > 0, 1.0 / r, 1.0)
    As = As * r[:, None]
    try:
        y = solve_banded((bw, bw), to_banded(As, bw), rhs * r, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularOperatorError("banded solve failed", reason=str(exc)) from exc
    if not np.all(np.isfinite(y)):
        raise SingularOperatorError("banded solve produced non-finite values")
    return c * y


def solve_band_scaled(ab: np.ndarray, rhs: np.ndarray, bw: int, colscale: np.ndarray | None = None) -> np.ndarray:
    """Same as ``solve_scaled`` for a matrix already in band storage."""
    m = ab.shape[1]
    c = np.ones(m) if colscale is None else np.where(np.abs(colscale) > 0, np.abs(colscale), 1.0)
    s = ab * c[None, :]
    r = np.zeros(m)
    for k in range(-bw, bw + 1):
        row = s[bw - k]
        if k >= 0:
            r[: m - k] += np.abs(row[k:])
        else:
            r[-k:] += np.abs(row[: m + k])
    r = np.where(r > 0, 1.0 / r, 1.0)
    for k in range(-bw, bw + 1):
        if k >= 0:
            s[bw - k, k:] *= r[: m - k]
        else:
            s[bw - k, : m + k] *= r[-k:]
    try:
        y = solve_banded((bw, bw), s, rhs * r, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularOperatorError("banded solve failed", reason=str(exc)) from exc
    if not np.all(np.isfinite(y)):
        raise SingularOperatorError("banded solve produced non-finite values")
    return c * y
