"""Staggered 1D grid, discrete operators, integrals and the box mollifier.

Layout (MAC-style): density and order parameter live at the ``n_cells``
cell centers, velocity at the ``n_cells + 1`` faces. No-slip pins the two
boundary faces to zero; the order parameter uses zero-flux (Neumann)
boundaries via ghost mirroring.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class Grid1D:
    n_cells: int
    length: float

    def __post_init__(self):
        if self.n_cells < 4:
            raise ValidationError("grid needs at least 4 cells")
        if not self.length > 0.0:
            raise ValidationError("grid length must be positive")

    @property
    def dx(self):
        return self.length / self.n_cells

    def centers(self):
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def faces(self):
        return np.arange(self.n_cells + 1) * self.dx


@dataclass
class FluidState:
    """Grid fields (rho at centers, u at faces, c at centers) at one time."""

    rho: np.ndarray
    u: np.ndarray
    c: np.ndarray
    t: float = 0.0

    def validate(self, grid):
        n = grid.n_cells
        if self.rho.shape != (n,) or self.c.shape != (n,) or self.u.shape != (n + 1,):
            raise ValidationError("field shapes do not match the grid")
        if np.any(self.rho < 0.0):
            raise ValidationError("density must be non-negative")
        if self.u[0] != 0.0 or self.u[-1] != 0.0:
            raise ValidationError("no-slip requires u = 0 at both boundary faces")
        return self

    def copy(self):
        return FluidState(self.rho.copy(), self.u.copy(), self.c.copy(), self.t)


def _require_center(grid, f):
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n_cells,):
        raise ValidationError(f"expected a centered field of size {grid.n_cells}")
    return f


def _require_face(grid, f):
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n_cells + 1,):
        raise ValidationError(f"expected a face field of size {grid.n_cells + 1}")
    return f


def grad_center_to_face(grid, phi):
    """Second-order gradient of a centered field, sampled at faces.

    Boundary faces return 0, i.e. the zero-flux ghost-mirror convention.
    """
    phi = _require_center(grid, phi)
    out = np.zeros(grid.n_cells + 1)
    out[1:-1] = np.diff(phi) / grid.dx
    return out


def div_face_to_center(grid, v):
    v = _require_face(grid, v)
    return np.diff(v) / grid.dx


def laplace_neumann(grid, phi):
    """div(grad(.)) with zero-flux boundary faces; exact stencil compatibility."""
    return div_face_to_center(grid, grad_center_to_face(grid, phi))


def laplace_dirichlet(grid, v):
    """Second difference of a face field whose boundary values are pinned to 0.

    At the boundary faces the antisymmetric ghost (v[-1] = -v[1] about a zero
    wall value) makes the second difference vanish, so those entries are 0.
    """
    v = _require_face(grid, v)
    out = np.zeros_like(v)
    out[1:-1] = (v[:-2] - 2.0 * v[1:-1] + v[2:]) / grid.dx ** 2
    return out


_OPERATORS = {
    "grad_center_to_face": grad_center_to_face,
    "div_face_to_center": div_face_to_center,
    "laplace_neumann": laplace_neumann,
    "laplace_dirichlet": laplace_dirichlet,
}


def apply_operator(grid, f, which):
    try:
        op = _OPERATORS[which]
    except KeyError:
        raise ValidationError(f"unknown operator {which!r}") from None
    return op(grid, f)


def integrate(grid, f):
    """Midpoint rule over cells: sum(f) * dx."""
    f = _require_center(grid, f)
    return float(np.sum(f) * grid.dx)


def integrate_faces(grid, f):
    """Trapezoid-weighted face sum; exact SBP partner of ``integrate``."""
    f = _require_face(grid, f)
    return float((np.sum(f[1:-1]) + 0.5 * (f[0] + f[-1])) * grid.dx)


def face_average(grid, phi):
    """Arithmetic two-point average of a centered field onto faces.

    Boundary faces copy the adjacent cell value.
    """
    phi = _require_center(grid, phi)
    out = np.empty(grid.n_cells + 1)
    out[1:-1] = 0.5 * (phi[:-1] + phi[1:])
    out[0] = phi[0]
    out[-1] = phi[-1]
    return out


def center_average(grid, v):
    """Arithmetic two-point average of a face field onto centers."""
    v = _require_face(grid, v)
    return 0.5 * (v[:-1] + v[1:])


def mollify(grid, f, window_h):
    """Box-kernel local average with the window clipped at the boundaries.

    The window must be at least one cell wide; ``window_h = dx`` is the
    identity. Linear in the field and exact on constants.
    """
    f = _require_center(grid, f)
    if window_h < grid.dx * (1.0 - 1e-12):
        raise ValidationError("mollifier window must be at least one cell wide")
    # half-width in whole cells; window 2k+1 cells, clipped at the ends
    k = int(np.floor(0.5 * window_h / grid.dx + 1e-12))
    if k == 0:
        return f.copy()
    n = grid.n_cells
    csum = np.concatenate(([0.0], np.cumsum(f)))
    lo = np.maximum(np.arange(n) - k, 0)
    hi = np.minimum(np.arange(n) + k, n - 1)
    return (csum[hi + 1] - csum[lo]) / (hi + 1 - lo)
