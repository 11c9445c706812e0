"""Shared builders and independent dense oracles for the test suite.

The oracles here deliberately use dense eigendecompositions
(numpy.linalg.eigh / scipy.linalg.eig) so the iterative solvers under
test are checked against a different code path.
"""

import numpy as np
import scipy.linalg

import vectorhost as vh
from vectorhost.eigen import SystemOperator
from vectorhost.operators import assemble

CONSTANTS = dict(d1=1.0, d2=1.0, rho=1.0, sigma1=1.0, sigma2=1.0, beta=1.0, mu=1.0, h_u=2.0)


def constants_coeffs(mesh, **overrides):
    values = dict(CONSTANTS)
    values.update(overrides)
    return vh.CoefficientSet.from_constants(mesh, **values)


def make_state(mesh, h, vu, vi, t=0.0):
    def f(v):
        return v if isinstance(v, vh.ScalarField) else vh.field_from_constant(mesh, v)

    return vh.State(t, f(h), f(vu), f(vi))


def dense_scalar_eig(d2, beta, bc):
    """Smallest eigenvalue of -L2 - beta via symmetrized dense eigh."""
    op = assemble(d2, bc)
    a = op.matrix() - np.diag(op.restrict(beta))
    sq = np.sqrt(op.weights)
    s = (sq[:, None] * a) / sq[None, :]
    return float(np.linalg.eigvalsh(0.5 * (s + s.T)).min())


def dense_system_eig(coeffs, v_b, bc, eps=0.0, weight=None):
    """Eigenvalue of smallest real part of the dense block matrix, with its
    (sign-fixed) eigenvector; Perron theory for the shifted inverse makes
    this the principal pair."""
    sys_op = SystemOperator(coeffs, v_b, bc, eps, weight)
    vals, vecs = scipy.linalg.eig(sys_op.dense())
    i = int(np.argmin(vals.real))
    lam = vals[i]
    vec = vecs[:, i].real
    vec = vec * np.sign(vec[int(np.argmax(np.abs(vec)))])
    return float(lam.real), float(abs(lam.imag)), vec
