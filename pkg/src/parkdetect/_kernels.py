"""Compiled inner loop for flat-kernel mean-shift."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _grid_window_sums(X, order, cell_start, cell_count, nx, ny, x0, y0, cell, centers, lam):
    m = centers.shape[0]
    sums = np.zeros((m, 2))
    sig = np.zeros((m, 4))
    lam2 = lam * lam
    for k in range(m):
        cx = centers[k, 0]
        cy = centers[k, 1]
        gx = int(np.floor((cx - x0) / cell))
        gy = int(np.floor((cy - y0) / cell))
        for ix in range(max(gx - 1, 0), min(gx + 2, nx)):
            for iy in range(max(gy - 1, 0), min(gy + 2, ny)):
                c = ix * ny + iy
                for q in range(cell_start[c], cell_start[c] + cell_count[c]):
                    p = order[q]
                    dx = X[p, 0] - cx
                    dy = X[p, 1] - cy
                    if dx * dx + dy * dy <= lam2:
                        sums[k, 0] += X[p, 0]
                        sums[k, 1] += X[p, 1]
                        pf = float(p)
                        sig[k, 0] += 1.0
                        sig[k, 1] += pf
                        sig[k, 2] += pf * pf
                        sig[k, 3] += pf * pf * pf
    return sums, sig


class GridIndex:
    """Uniform grid over the points with cell side equal to the window radius,
    so every window lies inside the 3x3 block around its centre's cell."""

    def __init__(self, X: np.ndarray, lam: float):
        self.X = np.ascontiguousarray(X, dtype=float)
        self.lam = float(lam)
        self.x0, self.y0 = (float(v) for v in self.X.min(axis=0))
        span = self.X.max(axis=0) - self.X.min(axis=0)
        self.nx = int(span[0] // lam) + 1
        self.ny = int(span[1] // lam) + 1
        gx = np.minimum(((self.X[:, 0] - self.x0) // lam).astype(np.int64), self.nx - 1)
        gy = np.minimum(((self.X[:, 1] - self.y0) // lam).astype(np.int64), self.ny - 1)
        cell = gx * self.ny + gy
        self.order = np.argsort(cell, kind="stable")
        self.count = np.bincount(cell, minlength=self.nx * self.ny)
        self.start = np.concatenate([[0], np.cumsum(self.count)[:-1]]).astype(np.int64)

    def window_means(self, centers: np.ndarray):
        """In-window means, counts and membership signatures for ``centers``.

        The signature row holds the count and the first three power sums of
        member indices.  These are integers, exact in float64 at segment
        sizes, so equal rows flag windows that (barring a power-sum
        coincidence) hold the same point set.
        """
        centers = np.ascontiguousarray(centers, dtype=float).reshape(-1, 2)
        sums, sig = _grid_window_sums(
            self.X, self.order, self.start, self.count, self.nx, self.ny,
            self.x0, self.y0, self.lam, centers, self.lam,
        )
        counts = sig[:, 0]
        with np.errstate(invalid="ignore", divide="ignore"):
            means = sums / counts[:, None]
        return means, counts.astype(np.int64), sig
