"""Atomic probability measures per cell and their calculus.

A cell measure is a finite convex combination of Dirac masses: weights
``w_i > 0`` at positions ``xi_i >= 0``. The cumulative distribution view,
the oscillation drift Q, the Lebesgue-Stieltjes operator M, and the
moment-preserving compression all operate on this representation. The
``MeasureField`` stores one measure per grid cell as flat arrays (weights,
positions, owning cell) so whole-field updates vectorize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import pressure
from .errors import ValidationError


def q_drift_values(pbar, peff_values, params):
    """Oscillation drift Q = (pbar - Peff(xi)) / (lambda + 2 mu)."""
    return (pbar - peff_values) / params.viscosity_total


@dataclass
class AtomicMeasure:
    """Weighted Dirac atoms (w_i, xi_i); weights sum to 1 once normalized."""

    w: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        self.w = np.atleast_1d(np.asarray(self.w, dtype=float))
        self.xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        if self.w.shape != self.xi.shape or self.w.ndim != 1 or self.w.size == 0:
            raise ValidationError("atoms need matching 1D weight/position arrays")
        if np.any(self.w <= 0.0):
            raise ValidationError("atom weights must be positive")
        if np.any(self.xi < 0.0):
            raise ValidationError("atom positions must be non-negative")

    @property
    def n_atoms(self):
        return self.w.size

    def total_weight(self):
        """Compensated (exact) sum of the weights; the canonical total."""
        return math.fsum(self.w)

    def renormalize(self):
        """Rescale weights so that total_weight() == 1.0 exactly.

        The largest atom is set to 1 - fsum(others); compensated summation
        of the result then rounds to exactly 1.0 (the defect is below half
        an ulp of 1), so the canonical total is bit-exact.
        """
        s = np.sum(self.w)
        if s <= 0.0 or not np.isfinite(s):
            raise ValidationError("cannot renormalize a degenerate measure")
        w = self.w / s
        j = int(np.argmax(w))
        others = w.copy()
        others[j] = 0.0
        w[j] = 1.0 - math.fsum(others)
        out = AtomicMeasure(w, self.xi.copy())
        if out.total_weight() != 1.0:
            raise ValidationError("renormalization failed to reach unit mass")
        return out

    def sorted(self):
        order = np.argsort(self.xi, kind="stable")
        return AtomicMeasure(self.w[order], self.xi[order])

    def copy(self):
        return AtomicMeasure(self.w.copy(), self.xi.copy())


@dataclass(frozen=True)
class CDFGrid:
    """Right-continuous CDF sampled at increasing knots."""

    xi: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.xi) <= 0.0):
            raise ValidationError("CDF knots must be strictly increasing")
        if np.any(np.diff(self.f) < -1e-15):
            raise ValidationError("CDF values must be non-decreasing")


def moment(m, g):
    """sum_i w_i g(xi_i) for a vectorized evaluator g."""
    return float(np.sum(m.w * g(m.xi)))


def first_moment(m):
    return float(np.sum(m.w * m.xi))


def pressure_moment(m, law):
    """Measure average of the artificial pressure, <nu, Peff>."""
    return float(np.sum(m.w * pressure.evaluate(law, m.xi, "Peff")))


def q_drift(m, law, params, xi):
    """Drift Q(xi) = (<nu, Peff> - Peff(xi)) / (lambda + 2 mu).

    The measure average of Q vanishes by construction.
    """
    pbar = pressure_moment(m, law)
    out = q_drift_values(pbar, pressure.evaluate(law, xi, "Peff"), params)
    return out if np.ndim(xi) else float(out)


def cdf(m, xi_grid):
    """Sample f(xi) = sum of weights at positions <= xi on the given knots.

    The final plateau is pinned to the canonical total weight so that a
    renormalized measure reaches f = 1 exactly.
    """
    xi_grid = np.asarray(xi_grid, dtype=float)
    ms = m.sorted()
    cum = np.cumsum(ms.w)
    cum[-1] = max(cum[-2] if cum.size > 1 else 0.0, ms.total_weight())
    idx = np.searchsorted(ms.xi, xi_grid, side="right")
    f = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    return CDFGrid(xi_grid, f)


def stieltjes_M(m, law, params, xi):
    """M(xi) = integral of Q over [0, xi] against the CDF: a partial
    weighted sum including atoms located exactly at xi.

    M(xi) -> 0 as xi grows past the support since <nu, Q> = 0.
    """
    ms = m.sorted()
    pbar = pressure_moment(m, law)
    q = q_drift_values(pbar, pressure.evaluate(law, ms.xi, "Peff"), params)
    cum = np.cumsum(ms.w * q)
    xi_arr = np.asarray(xi, dtype=float)
    idx = np.searchsorted(ms.xi, xi_arr, side="right")
    out = np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    return out if np.ndim(xi) else float(out)


def _merge_runs(w, xi, eps):
    """Merge runs of sorted atoms whose consecutive gaps are <= eps.

    Preserves total weight exactly and the first moment up to rounding.
    """
    if w.size <= 1:
        return w, xi
    breaks = np.nonzero(np.diff(xi) > eps)[0] + 1
    starts = np.concatenate(([0], breaks))
    w_new = np.add.reduceat(w, starts)
    xi_new = np.add.reduceat(w * xi, starts) / w_new
    return w_new, xi_new


def compress(m, merge_eps=None, max_atoms=64):
    """Sort atoms, merge eps-close neighbors, then reduce to ``max_atoms``
    by repeatedly merging the adjacent pair whose fusion least perturbs the
    (first, second) moment pair.

    Every merge conserves total weight and the first moment exactly (the
    merged position is the weighted mean); only the second moment moves.
    Weights are renormalized to sum exactly 1 at the end.
    """
    if max_atoms is not None and max_atoms < 1:
        raise ValidationError("max_atoms must be at least 1")
    ms = m.sorted()
    if merge_eps is None:
        width = float(ms.xi[-1] - ms.xi[0])
        merge_eps = 1e-6 * width
    w, xi = _merge_runs(ms.w, ms.xi, merge_eps)
    if max_atoms is not None:
        while w.size > max_atoms:
            # merging (i, i+1) changes the second moment by w_i w_j d^2 / (w_i + w_j)
            d = np.diff(xi)
            cost = w[:-1] * w[1:] * d * d / (w[:-1] + w[1:])
            i = int(np.argmin(cost))
            wm = w[i] + w[i + 1]
            xm = (w[i] * xi[i] + w[i + 1] * xi[i + 1]) / wm
            w = np.concatenate((w[:i], [wm], w[i + 2 :]))
            xi = np.concatenate((xi[:i], [xm], xi[i + 2 :]))
    return AtomicMeasure(w, xi).renormalize()


def _halve_pass(w, xi, cell, counts, max_atoms):
    """One vectorized pass merging disjoint adjacent pairs in over-budget cells.

    Expects atoms sorted by (cell, xi). Pairs are (0,1), (2,3), ... within
    each cell; each merged atom takes the pair's weight and weighted-mean
    position.
    """
    n = w.size
    idx = np.arange(n)
    cell_start = np.empty(n, dtype=bool)
    cell_start[0] = True
    cell_start[1:] = np.diff(cell) != 0
    start_idx = np.maximum.accumulate(np.where(cell_start, idx, 0))
    local = idx - start_idx
    over = counts[cell] > max_atoms
    first_of_pair = over & (local % 2 == 0)
    first_of_pair[:-1] &= (cell[:-1] == np.roll(cell, -1)[:-1])
    first_of_pair[-1] = False
    second = np.zeros(n, dtype=bool)
    second[1:] = first_of_pair[:-1]
    single = ~(first_of_pair | second)
    i = np.nonzero(first_of_pair)[0]
    wm = w[i] + w[i + 1]
    xm = (w[i] * xi[i] + w[i + 1] * xi[i + 1]) / wm
    w_out = np.concatenate((w[single], wm))
    xi_out = np.concatenate((xi[single], xm))
    cell_out = np.concatenate((cell[single], cell[i]))
    order = np.lexsort((xi_out, cell_out))
    return w_out[order], xi_out[order], cell_out[order]


class MeasureField:
    """One atomic measure per grid cell, stored as flat arrays.

    ``cell`` assigns each atom to its owning cell; atoms of one cell need
    not be contiguous. Reductions over cells use fixed-order bincounts, so
    repeated evaluations are deterministic.
    """

    def __init__(self, n_cells, w, xi, cell):
        self.n_cells = int(n_cells)
        self.w = np.asarray(w, dtype=float)
        self.xi = np.asarray(xi, dtype=float)
        self.cell = np.asarray(cell, dtype=np.int64)
        if not (self.w.shape == self.xi.shape == self.cell.shape) or self.w.ndim != 1:
            raise ValidationError("measure field arrays must be matching 1D")
        if self.w.size and (self.cell.min() < 0 or self.cell.max() >= self.n_cells):
            raise ValidationError("atom cell indices out of range")

    # -- constructors -------------------------------------------------

    @classmethod
    def from_cells(cls, measures):
        n = len(measures)
        w = np.concatenate([m.w for m in measures])
        xi = np.concatenate([m.xi for m in measures])
        cell = np.concatenate([np.full(m.n_atoms, i, dtype=np.int64) for i, m in enumerate(measures)])
        return cls(n, w, xi, cell)

    @classmethod
    def single_dirac(cls, rho):
        """Dirac delta at the local density in every cell."""
        rho = np.asarray(rho, dtype=float)
        n = rho.size
        return cls(n, np.ones(n), rho.copy(), np.arange(n, dtype=np.int64))

    @classmethod
    def uniform(cls, m, n_cells):
        """The same atomic measure replicated in every cell."""
        k = m.n_atoms
        return cls(
            n_cells,
            np.tile(m.w, n_cells),
            np.tile(m.xi, n_cells),
            np.repeat(np.arange(n_cells, dtype=np.int64), k),
        )

    # -- views and reductions ------------------------------------------

    def cell_measure(self, i):
        sel = self.cell == i
        if not np.any(sel):
            raise ValidationError(f"cell {i} holds no atoms")
        return AtomicMeasure(self.w[sel], self.xi[sel])

    def cell_measures(self):
        return [self.cell_measure(i) for i in range(self.n_cells)]

    def atom_counts(self):
        return np.bincount(self.cell, minlength=self.n_cells)

    def weight_sums(self):
        return np.bincount(self.cell, weights=self.w, minlength=self.n_cells)

    def field_moment(self, g):
        """Per-cell sum of w * g(xi) as a centered field."""
        return np.bincount(self.cell, weights=self.w * g(self.xi), minlength=self.n_cells)

    def first_moments(self):
        return np.bincount(self.cell, weights=self.w * self.xi, minlength=self.n_cells)

    def pressure_moments(self, law):
        vals = pressure.evaluate(law, self.xi, "Peff")
        return np.bincount(self.cell, weights=self.w * vals, minlength=self.n_cells)

    def normalize(self):
        """Divide each cell's weights by its sum; returns the defects |sum - 1|."""
        sums = self.weight_sums()
        if np.any(sums <= 0.0) or not np.all(np.isfinite(sums)):
            raise ValidationError("cannot normalize: a cell lost all weight")
        defects = np.abs(sums - 1.0)
        self.w = self.w / sums[self.cell]
        return defects

    def dedup(self):
        """Merge atoms with identical (cell, xi); weights add exactly."""
        order = np.lexsort((self.xi, self.cell))
        w, xi, cell = self.w[order], self.xi[order], self.cell[order]
        if w.size == 0:
            return self
        new_group = np.empty(w.size, dtype=bool)
        new_group[0] = True
        new_group[1:] = (np.diff(cell) != 0) | (np.diff(xi) != 0.0)
        starts = np.nonzero(new_group)[0]
        self.w = np.add.reduceat(w, starts)
        self.xi = xi[starts]
        self.cell = cell[starts]
        return self

    def compress_cells(self, merge_eps, max_atoms):
        """Field-wide eps-merge, then batched pairwise reduction of cells
        over the atom budget.

        The reduction merges disjoint adjacent (in xi) pairs of each
        over-budget cell in vectorized passes; every merge conserves the
        cell's weight and first moment exactly, like the scalar compress,
        trading the per-pair optimal order for whole-field vectorization.
        """
        order = np.lexsort((self.xi, self.cell))
        w, xi, cell = self.w[order], self.xi[order], self.cell[order]
        if w.size == 0:
            return self
        gap_ok = np.empty(w.size, dtype=bool)
        gap_ok[0] = True
        gap_ok[1:] = (np.diff(cell) != 0) | (np.diff(xi) > merge_eps)
        starts = np.nonzero(gap_ok)[0]
        w_new = np.add.reduceat(w, starts)
        xi_new = np.add.reduceat(w * xi, starts) / w_new
        cell_new = cell[starts]
        if max_atoms is not None:
            while True:
                counts = np.bincount(cell_new, minlength=self.n_cells)
                if not np.any(counts > max_atoms):
                    break
                w_new, xi_new, cell_new = _halve_pass(w_new, xi_new, cell_new, counts, max_atoms)
        self.w, self.xi, self.cell = w_new, xi_new, cell_new
        return self

    def support_width(self):
        if self.xi.size == 0:
            return 0.0
        return float(self.xi.max() - self.xi.min())

    def copy(self):
        return MeasureField(self.n_cells, self.w.copy(), self.xi.copy(), self.cell.copy())
