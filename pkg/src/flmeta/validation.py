"""Input validation helpers shared by the estimators and the simulator."""

import numpy as np

from .exceptions import ShapeError


def check_matrix(X, name="X", min_rows=1):
    """Coerce X to a 2-D float64 array with finite entries.

    Returns a C-contiguous copy only when coercion is needed; an already
    conforming array passes through untouched.
    """
    A = np.asarray(X)
    if A.ndim != 2:
        raise ShapeError(f"{name}: expected a 2-D array, got ndim={A.ndim}")
    if A.shape[0] < min_rows:
        raise ShapeError(f"{name}: needs at least {min_rows} rows, got {A.shape[0]}")
    if A.dtype != np.float64:
        A = A.astype(np.float64)
    if not np.all(np.isfinite(A)):
        raise ShapeError(f"{name}: contains NaN or Inf")
    return np.ascontiguousarray(A)


def check_labels(y, n_rows, name="y"):
    """Coerce y to a 1-D int64 label vector of length n_rows, entries >= 0."""
    a = np.asarray(y)
    if a.ndim != 1:
        raise ShapeError(f"{name}: expected a 1-D array, got ndim={a.ndim}")
    if a.shape[0] != n_rows:
        raise ShapeError(f"{name}: length {a.shape[0]} does not match {n_rows} rows")
    if not np.issubdtype(a.dtype, np.integer):
        if not np.all(a == np.floor(a)):
            raise ShapeError(f"{name}: labels must be integers")
        a = a.astype(np.int64)
    else:
        a = a.astype(np.int64)
    if a.size and a.min() < 0:
        raise ShapeError(f"{name}: labels must be non-negative")
    return a


def check_maps(maps, name="maps"):
    """Validate a stack of activation maps: 4-D (n, c, h, w), finite floats."""
    a = np.asarray(maps)
    if a.ndim != 4:
        raise ShapeError(f"{name}: expected (n, c, h, w), got ndim={a.ndim}")
    if not np.issubdtype(a.dtype, np.floating):
        raise ShapeError(f"{name}: expected a float dtype, got {a.dtype}")
    if not np.all(np.isfinite(a)):
        raise ShapeError(f"{name}: contains NaN or Inf")
    return a
