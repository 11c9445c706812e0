"""Discrete divergence-form operators L = d/dx (d(x) d/dx) on a 1D mesh.

The second-order finite-volume stencil is

    (L u)_j = [d_{j+1/2} (u_{j+1} - u_j) - d_{j-1/2} (u_j - u_{j-1})] / h^2

with face coefficients d_{j+1/2} = (d_j + d_{j+1}) / 2.  Boundary closures:

  * Neumann: ghost-node reflection, so the wall row of -L becomes
    2 d_{1/2} (u_0 - u_1) / h^2 (row sums vanish, constants in the kernel);
  * Robin (db u/dnu + b u = 0): same ghost convention plus 2 b d_{1/2} / h
    on the wall diagonal, with b sampled only at the two endpoints;
  * Dirichlet: boundary unknowns eliminated (u = 0 there); solves return
    fields re-embedded with explicit zeros.

The matrix of -L is symmetric for Dirichlet and symmetrizable for
Neumann/Robin under the nodal inner product with half-weights at the
endpoints; it is positive semidefinite (definite unless pure Neumann or
Robin with b = 0 on both ends).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import SingularSystemError, ValidationError
from .grid import DIRICHLET, ROBIN, BoundarySpec, ScalarField


class EllipticOperator:
    """Tridiagonal representation of -L under a boundary closure.

    Attributes
    ----------
    mesh, bc : the discretized geometry and closure
    d_face   : diffusion coefficient at the n-1 cell faces
    sl       : slice of "active" nodes (all nodes, or the interior for Dirichlet)
    m        : number of active nodes
    lower, diag, upper : the three diagonals of -L on active nodes
    weights  : inner-product weights that symmetrize -L (half at Neumann/Robin walls)
    """

    def __init__(self, d: ScalarField, bc: BoundarySpec):
        dv = d.values
        if dv.min() <= 0:
            raise ValidationError("diffusion coefficient must be strictly positive")
        mesh = d.mesh
        n = mesh.n
        h = mesh.h
        h2 = h * h
        d_face = 0.5 * (dv[:-1] + dv[1:])

        self.mesh = mesh
        self.bc = bc
        self.d_face = d_face

        if bc.kind == DIRICHLET:
            m = n - 2
            self.sl = mesh.interior
            diag = (d_face[:-1] + d_face[1:]) / h2
            lower = -d_face[1:-1] / h2
            upper = -d_face[1:-1] / h2
            weights = np.ones(m)
        else:
            m = n
            self.sl = slice(0, n)
            diag = np.empty(n)
            lower = np.empty(n - 1)
            upper = np.empty(n - 1)
            diag[1:-1] = (d_face[:-1] + d_face[1:]) / h2
            lower[:-1] = -d_face[:-1] / h2
            upper[1:] = -d_face[1:] / h2
            # Ghost-node closures at the two walls.
            bl, br = bc.robin_b if bc.kind == ROBIN else (0.0, 0.0)
            diag[0] = 2.0 * d_face[0] / h2 + 2.0 * bl * d_face[0] / h
            upper[0] = -2.0 * d_face[0] / h2
            diag[-1] = 2.0 * d_face[-1] / h2 + 2.0 * br * d_face[-1] / h
            lower[-1] = -2.0 * d_face[-1] / h2
            weights = np.ones(n)
            weights[0] = weights[-1] = 0.5

        for arr in (d_face, lower, diag, upper, weights):
            arr.setflags(write=False)
        self.m = m
        self.lower = lower
        self.diag = diag
        self.upper = upper
        self.weights = weights

    @property
    def has_constant_kernel(self) -> bool:
        """True when constants solve -L u = 0 (pure Neumann, or Robin with b = 0)."""
        if self.bc.kind == DIRICHLET:
            return False
        if self.bc.kind == ROBIN:
            return self.bc.robin_b == (0.0, 0.0)
        return True

    def apply(self, u) -> np.ndarray:
        """Evaluate (L u) at every node from full-length nodal values.

        Interior nodes use the plain stencil on the actual neighbor values;
        Neumann/Robin walls use their ghost closures; Dirichlet walls return 0
        (those rows enforce the boundary value).
        """
        uv = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
        h = self.mesh.h
        h2 = h * h
        df = self.d_face
        out = np.empty_like(uv)
        out[1:-1] = (df[1:] * (uv[2:] - uv[1:-1]) - df[:-1] * (uv[1:-1] - uv[:-2])) / h2
        if self.bc.kind == DIRICHLET:
            out[0] = 0.0
            out[-1] = 0.0
        else:
            bl, br = self.bc.robin_b if self.bc.kind == ROBIN else (0.0, 0.0)
            out[0] = 2.0 * df[0] * (uv[1] - uv[0]) / h2 - 2.0 * bl * df[0] * uv[0] / h
            out[-1] = 2.0 * df[-1] * (uv[-2] - uv[-1]) / h2 - 2.0 * br * df[-1] * uv[-1] / h
        return out

    def matvec(self, u_active: np.ndarray) -> np.ndarray:
        """(-L u) on active nodes, treating u as zero outside them."""
        out = self.diag * u_active
        out[:-1] += self.upper * u_active[1:]
        out[1:] += self.lower * u_active[:-1]
        return out

    def matrix(self) -> np.ndarray:
        """Dense m x m matrix of -L on active nodes (for small-mesh oracles)."""
        a = np.diag(self.diag)
        a += np.diag(self.upper, 1)
        a += np.diag(self.lower, -1)
        return a

    def embed(self, active_values: np.ndarray) -> np.ndarray:
        """Re-embed active-node values into a full-length array (zeros at Dirichlet walls)."""
        if self.bc.kind != DIRICHLET:
            return np.array(active_values, dtype=float)
        full = np.zeros(self.mesh.n)
        full[self.sl] = active_values
        return full

    def restrict(self, full_values) -> np.ndarray:
        vals = full_values.values if isinstance(full_values, ScalarField) else np.asarray(full_values, dtype=float)
        return np.array(vals[self.sl], dtype=float)


def assemble(d: ScalarField, bc: BoundarySpec) -> EllipticOperator:
    """Assemble -L = -div(d grad) under the given boundary closure."""
    return EllipticOperator(d, bc)


class ShiftedSolve:
    """Reusable banded solver for (-L + c) u = f with c >= 0.

    The banded form is prepared once; repeated solves against it are cheap
    and may run concurrently (the factorization state is read-only).
    """

    def __init__(self, op: EllipticOperator, c):
        cv = c.values if isinstance(c, ScalarField) else np.asarray(c, dtype=float)
        if cv.ndim == 0:
            cv = np.full(op.mesh.n, float(cv))
        if cv.shape[0] == op.mesh.n:
            c_active = cv[op.sl]
        elif cv.shape[0] == op.m:
            c_active = cv
        else:
            raise ValidationError("potential length matches neither the mesh nor the active nodes")
        if c_active.min() < 0:
            raise ValidationError("potential c must be nonnegative")
        if op.has_constant_kernel and c_active.max() == 0.0:
            raise SingularSystemError(
                "(-L + c) is singular: Neumann closure with c identically zero "
                "(constants span the kernel)"
            )
        self.op = op
        self.c_active = c_active
        ab = np.zeros((3, op.m))
        ab[0, 1:] = op.upper
        ab[1, :] = op.diag + c_active
        ab[2, :-1] = op.lower
        self._ab = ab
        self._ab.setflags(write=False)

    def solve_active(self, f_active: np.ndarray) -> np.ndarray:
        return solve_banded((1, 1), self._ab, f_active, overwrite_ab=False, overwrite_b=False)

    def solve(self, f) -> np.ndarray:
        """Solve from full-length right-hand side, return full-length values."""
        f_active = self.op.restrict(f)
        return self.op.embed(self.solve_active(f_active))


def solve(op: EllipticOperator, c: ScalarField, f: ScalarField) -> ScalarField:
    """Solve (-L + c) u = f; u is returned with Dirichlet zeros re-embedded.

    With f >= 0 nontrivial and c >= 0 the discrete maximum principle makes
    the solution strictly positive at interior nodes.
    """
    return ScalarField(op.mesh, ShiftedSolve(op, c).solve(f))
