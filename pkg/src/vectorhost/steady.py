"""Nonlinear steady states of the model.

Three layers:

  * solve_logistic: the vector-population equilibrium V_B of
    -L2 V = beta V - mu V^2 (exists iff the scalar principal eigenvalue
    of -L2 - beta is negative), computed by damped Newton from the
    constant upper bound max(beta/mu) with a parabolic-relaxation
    fallback;
  * solve_endemic: the infection equilibrium pair of the perturbed
    cooperative system, constructed the classical way — a downward
    monotone iteration from an explicit upper-solution pair and an
    upward one from a small multiple of the principal eigenfunction —
    then polished by Newton so both limits meet the tight residual and
    agreement tolerances;
  * monotone_iterate: the sweep engine itself, usable standalone.

Each damped Picard sweep solves, componentwise,

    (-L + K_c) u_new = f(u_old) + K_c u_old

with K_c large enough that f(u) + K_c u is non-decreasing in (H, V)
over the order interval, which makes the sweep map order-preserving and
the iterates nodewise monotone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu

from .errors import (
    AdmissibilityError,
    ConvergenceError,
    MeshMismatchError,
    MonotonicityError,
    UniquenessViolation,
    ValidationError,
)
from .eigen import (
    ScalarEigenpair,
    SystemEigenpair,
    principal_eigen_scalar,
    principal_eigen_system,
)
from .grid import DIRICHLET, BoundarySpec, CoefficientSet, ScalarField, field_from_constant
from .operators import ShiftedSolve, assemble, solve

SWEEP_TOL = 1e-10
MAX_SWEEPS = 5000
AGREEMENT_TOL = 2e-8
RESIDUAL_TOL = 1e-8
DELTA_CANDIDATES = tuple(10.0 ** (-k) for k in range(1, 9))


@dataclass(frozen=True)
class LogisticSteady:
    """Vector-population equilibrium; v_b is None when none exists."""

    v_b: ScalarField | None
    lambda_beta: float

    @property
    def exists(self) -> bool:
        return self.v_b is not None


@dataclass(frozen=True)
class EndemicEquilibrium:
    h_i: ScalarField
    v_i: ScalarField
    v_u: ScalarField
    lambda_system: float
    eps: float
    iterations_upper: int
    iterations_lower: int
    residual: float


@dataclass(frozen=True)
class EndemicAbsent:
    """No positive equilibrium (nonnegative system eigenvalue, or decoupled input)."""

    lambda_system: float
    eps: float = 0.0
    decoupled: bool = False


def solve_logistic(
    coeffs: CoefficientSet,
    bc: BoundarySpec,
    *,
    scalar_eig: ScalarEigenpair | None = None,
    residual_tol: float = 1e-12,
    max_newton: int = 60,
) -> LogisticSteady:
    """Unique positive solution of -L2 V = beta V - mu V^2, or Absent.

    Newton starts at the constant upper bound max(beta/mu); steps are
    damped until the residual decreases and the iterate stays positive.
    If Newton stalls the iterate is relaxed by integrating the parabolic
    equation for a while, then Newton resumes.
    """
    if scalar_eig is None:
        scalar_eig = principal_eigen_scalar(coeffs.d2, coeffs.beta, bc)
    lam = scalar_eig.lam
    if lam >= 0:
        return LogisticSteady(None, lam)

    op = assemble(coeffs.d2, bc)
    beta = op.restrict(coeffs.beta)
    mu = op.restrict(coeffs.mu)
    v0 = float((coeffs.beta.values / coeffs.mu.values).max())
    v = np.full(op.m, v0)
    scale = 1.0 + float((beta * v).max())

    def residual(u):
        return op.matvec(u) - beta * u + mu * u * u

    history = []
    for attempt in range(3):
        r = residual(v)
        rn = float(np.abs(r).max())
        for _ in range(max_newton):
            if rn <= residual_tol * scale:
                break
            ab = np.zeros((3, op.m))
            ab[0, 1:] = op.upper
            ab[1, :] = op.diag - beta + 2.0 * mu * v
            ab[2, :-1] = op.lower
            delta = solve_banded((1, 1), ab, -r)
            alpha = 1.0
            accepted = False
            while alpha > 2.0 ** -30:
                trial = v + alpha * delta
                if trial.min() > 0:
                    r_trial = residual(trial)
                    rn_trial = float(np.abs(r_trial).max())
                    if rn_trial < rn:
                        v, r, rn = trial, r_trial, rn_trial
                        accepted = True
                        break
                alpha *= 0.5
            history.append(rn)
            if not accepted:
                break
        # Quadratic convergence bottoms out at the evaluation round-off of
        # -L v; accept a stall there as long as the documented residual
        # bound still holds comfortably.
        if rn <= residual_tol * scale or rn <= 1e-9 * (1.0 + float(v.max())):
            return LogisticSteady(ScalarField(coeffs.mesh, op.embed(v)), lam)
        # Relax toward the attractor before retrying Newton.
        from . import dynamics

        v_hat = dynamics.v_hat_bound(coeffs, float(v.max()))
        dt = 0.5 / dynamics.reaction_bound(coeffs, v_hat)
        cfg = dynamics.StepperConfig(dt=dt, t_end=50.0 * (attempt + 1), steady_tol=1e-13)
        traj = dynamics.integrate_scalar_logistic(
            ScalarField(coeffs.mesh, op.embed(v)), coeffs, bc, cfg
        )
        v = op.restrict(traj.final)
    raise ConvergenceError(
        f"logistic Newton failed to converge; residual history {history[-5:]}",
        residual=history[-1] if history else None,
    )


def default_weight(
    coeffs: CoefficientSet,
    bc: BoundarySpec,
    scalar_eig: ScalarEigenpair | None = None,
) -> ScalarField:
    """Perturbation weight: the (sup-normalized) principal eigenfunction of
    -L2 - beta for Dirichlet closures, the constant 1 otherwise."""
    if bc.kind == DIRICHLET:
        if scalar_eig is None:
            scalar_eig = principal_eigen_scalar(coeffs.d2, coeffs.beta, bc)
        return scalar_eig.phi
    return field_from_constant(coeffs.mesh, 1.0)


def check_eps_admissibility(
    coeffs: CoefficientSet,
    v_b: ScalarField,
    bc: BoundarySpec,
    eps: float,
    weight: ScalarField,
    lambda_beta: float,
) -> None:
    """Raise AdmissibilityError naming the first violated smallness condition.

    Neumann/Robin:  eps^2 mu < beta V_B      at every node;
    Dirichlet:      (eps phi)^2 mu < beta V_D + eps phi (lambda + beta)
                    at interior nodes,
    plus positivity V_B - |eps| weight > 0 on the interior in both cases.
    """
    if eps == 0.0:
        return
    mesh = coeffs.mesh
    interior = mesh.interior
    ew = eps * weight.values
    if np.min(v_b.values[interior] - np.abs(ew[interior])) <= 0:
        raise AdmissibilityError(
            "V_B - |eps|*weight > 0",
            f"min over interior nodes is {np.min(v_b.values[interior] - np.abs(ew[interior])):.3e}",
        )
    mu = coeffs.mu.values
    beta = coeffs.beta.values
    if bc.kind == DIRICHLET:
        lhs = ew[interior] ** 2 * mu[interior]
        rhs = beta[interior] * v_b.values[interior] + ew[interior] * (lambda_beta + beta[interior])
        if np.any(lhs >= rhs):
            raise AdmissibilityError(
                "(eps*phi)^2 * mu < beta*V_B + eps*phi*(lambda_beta + beta)",
                f"worst margin {np.min(rhs - lhs):.3e}",
            )
    else:
        lhs = eps * eps * mu
        rhs = beta * v_b.values
        if np.any(lhs >= rhs):
            raise AdmissibilityError(
                "eps^2 * mu < beta*V_B",
                f"worst margin {np.min(rhs - lhs):.3e}",
            )


def upper_solution_h(
    coeffs: CoefficientSet,
    v_b: ScalarField,
    bc: BoundarySpec,
    eps: float = 0.0,
    weight: ScalarField | None = None,
) -> ScalarField:
    """Solve (-L1 + rho) H = sigma1 h_u (V_B + eps weight).

    Together with V_B + eps*weight this is an upper-solution pair of the
    perturbed infection system.
    """
    if weight is None:
        weight = field_from_constant(coeffs.mesh, 1.0)
    if np.min(v_b.values + eps * weight.values) < 0:
        raise ValidationError("V_B + eps*weight must be nonnegative")
    op = assemble(coeffs.d1, bc)
    rhs = ScalarField(
        coeffs.mesh,
        coeffs.sigma1.values * coeffs.h_u.values * (v_b.values + eps * weight.values),
    )
    return solve(op, coeffs.rho, rhs)


class EndemicProblem:
    """The perturbed infection equilibrium system on active nodes.

        (-L1 + rho) H = sigma1 h_u V
        (-L2) V = sigma2 (V_B + eps w - V)^+ H - mu (V_B - eps w) V
    """

    def __init__(
        self,
        coeffs: CoefficientSet,
        bc: BoundarySpec,
        v_b: ScalarField,
        eps: float = 0.0,
        weight: ScalarField | None = None,
    ):
        mesh = coeffs.mesh
        if v_b.mesh != mesh:
            raise MeshMismatchError("v_b must share the coefficient mesh")
        if weight is None:
            weight = field_from_constant(mesh, 1.0)
        self.mesh = mesh
        self.bc = bc
        self.eps = eps
        self.op1 = assemble(coeffs.d1, bc)
        self.op2 = assemble(coeffs.d2, bc)
        sl = self.op1.sl
        self.rho = coeffs.rho.values[sl]
        self.s1hu = (coeffs.sigma1.values * coeffs.h_u.values)[sl]
        self.s2 = coeffs.sigma2.values[sl]
        self.mu = coeffs.mu.values[sl]
        self.v_plus = (v_b.values + eps * weight.values)[sl]
        self.v_minus = (v_b.values - eps * weight.values)[sl]
        self.v_abs = (v_b.values + abs(eps) * weight.values)[sl]
        self.m = self.op1.m

    def reaction(self, h: np.ndarray, v: np.ndarray):
        f1 = -self.rho * h + self.s1hu * v
        f2 = self.s2 * np.maximum(self.v_plus - v, 0.0) * h - self.mu * self.v_minus * v
        return f1, f2

    def residual(self, h: np.ndarray, v: np.ndarray):
        f1, f2 = self.reaction(h, v)
        return self.op1.matvec(h) - f1, self.op2.matvec(v) - f2

    def residual_norm(self, h: np.ndarray, v: np.ndarray) -> float:
        r1, r2 = self.residual(h, v)
        return float(max(np.abs(r1).max(), np.abs(r2).max()))

    def _slack(self, r1, r2) -> float:
        return 1e-8 * (1.0 + float(max(np.abs(r1).max(), np.abs(r2).max())))

    def is_upper(self, h: np.ndarray, v: np.ndarray) -> bool:
        r1, r2 = self.residual(h, v)
        s = self._slack(r1, r2)
        return bool(r1.min() >= -s and r2.min() >= -s)

    def is_lower(self, h: np.ndarray, v: np.ndarray) -> bool:
        r1, r2 = self.residual(h, v)
        s = self._slack(r1, r2)
        return bool(r1.max() <= s and r2.max() <= s)

    def sweep_constant(self, h_cap: float) -> float:
        """Smallest documented K_c making the sweep map order-preserving.

        h_cap bounds the H-component over the order interval (sup of the
        starting upper iterate); the sigma2*h_cap term is what dominates
        the V-derivative of the infection reaction.
        """
        base = float((self.s2 * self.v_abs + self.mu * self.v_abs + self.rho).max())
        needed = max(
            float(self.rho.max()),
            float((self.s2 * h_cap + self.mu * self.v_abs).max()),
        )
        return max(base, needed)

    def jacobian(self, h: np.ndarray, v: np.ndarray) -> sp.csc_matrix:
        active = (self.v_plus - v > 0.0).astype(float)

        def tri(op, extra):
            return sp.diags([op.lower, op.diag + extra, op.upper], offsets=(-1, 0, 1), format="csc")

        j11 = tri(self.op1, self.rho)
        j12 = sp.diags([-self.s1hu], offsets=(0,), format="csc")
        j21 = sp.diags([-self.s2 * np.maximum(self.v_plus - v, 0.0)], offsets=(0,), format="csc")
        j22 = tri(self.op2, self.mu * self.v_minus + self.s2 * h * active)
        return sp.bmat([[j11, j12], [j21, j22]], format="csc")


@dataclass
class MonotoneIteration:
    h: ScalarField
    v: ScalarField
    sweeps: int
    converged: bool
    k_c: float
    final_change: float
    history: list[tuple[ScalarField, ScalarField]] | None = None


def monotone_iterate(
    problem: EndemicProblem,
    h0: ScalarField,
    v0: ScalarField,
    direction: str,
    *,
    k_c: float | None = None,
    sweep_tol: float = SWEEP_TOL,
    max_sweeps: int = MAX_SWEEPS,
    check_start: bool = True,
    keep_history: bool = False,
    stop_below_sup: float | None = None,
) -> MonotoneIteration:
    """Run damped Picard sweeps from an upper ("down") or lower ("up") pair.

    The starting pair is verified to satisfy the matching discrete
    inequalities; every sweep is checked to move nodewise in the declared
    direction (a violation doubles K_c once and restarts, then fails).
    Stops when the sweep-to-sweep sup change drops below sweep_tol, when
    both components fall below stop_below_sup (collapse runs), or at the
    sweep cap.
    """
    if direction not in ("down", "up"):
        raise ValidationError(f"direction must be 'down' or 'up', got {direction!r}")
    h_start = problem.op1.restrict(h0)
    v_start = problem.op2.restrict(v0)
    if check_start:
        ok = problem.is_upper(h_start, v_start) if direction == "down" else problem.is_lower(h_start, v_start)
        if not ok:
            raise ValidationError(
                f"starting pair is not a valid {'upper' if direction == 'down' else 'lower'} solution"
            )
    if k_c is None:
        k_c = problem.sweep_constant(float(h_start.max()))

    def run(k: float) -> MonotoneIteration:
        s1 = ShiftedSolve(problem.op1, problem.op1.embed(np.full(problem.m, k)))
        s2 = ShiftedSolve(problem.op2, problem.op2.embed(np.full(problem.m, k)))
        # Round-off floor of one sweep: evaluating the residual costs
        # eps*stiffness*|u| and the sweep damps it by (M + K)^{-1} ~ 1/K.
        stiff = max(float(problem.op1.diag.max()), float(problem.op2.diag.max())) + k
        h = h_start.copy()
        v = v_start.copy()
        history = [] if keep_history else None
        change = np.inf
        for sweep in range(1, max_sweeps + 1):
            f1, f2 = problem.reaction(h, v)
            h_new = s1.solve_active(f1 + k * h)
            v_new = s2.solve_active(f2 + k * v)
            u_scale = 1.0 + max(float(np.abs(h).max()), float(np.abs(v).max()))
            mono_tol = 256.0 * np.finfo(float).eps * stiff * u_scale / k
            if direction == "down":
                violation = max(float((h_new - h).max()), float((v_new - v).max()))
            else:
                violation = max(float((h - h_new).max()), float((v - v_new).max()))
            if violation > mono_tol:
                raise MonotonicityError(
                    f"sweep {sweep} moved {violation:.3e} against the declared direction (K_c={k:g})"
                )
            change = max(float(np.abs(h_new - h).max()), float(np.abs(v_new - v).max()))
            h, v = h_new, v_new
            if history is not None:
                history.append(
                    (
                        ScalarField(problem.mesh, problem.op1.embed(h)),
                        ScalarField(problem.mesh, problem.op2.embed(v)),
                    )
                )
            collapsed = (
                stop_below_sup is not None
                and max(float(h.max(initial=0.0)), float(v.max(initial=0.0))) < stop_below_sup
            )
            if change < sweep_tol or collapsed:
                return MonotoneIteration(
                    ScalarField(problem.mesh, problem.op1.embed(h)),
                    ScalarField(problem.mesh, problem.op2.embed(v)),
                    sweep,
                    True,
                    k,
                    change,
                    history,
                )
        return MonotoneIteration(
            ScalarField(problem.mesh, problem.op1.embed(h)),
            ScalarField(problem.mesh, problem.op2.embed(v)),
            max_sweeps,
            False,
            k,
            change,
            history,
        )

    try:
        return run(k_c)
    except MonotonicityError:
        # K_c too small for this order interval; one doubling is allowed.
        return run(2.0 * k_c)


def _newton_polish(
    problem: EndemicProblem,
    h: np.ndarray,
    v: np.ndarray,
    *,
    box: tuple | None = None,
    tol: float = 1e-12,
    max_iter: int = 40,
):
    """Drive the coupled residual to (near) round-off from a good start.

    box = ((h_lo, v_lo), (h_hi, v_hi)) clamps the iterates into an order
    interval known to contain the target root; a strictly positive lower
    bound keeps Newton out of the basin of the zero solution.
    """
    r1, r2 = problem.residual(h, v)
    rn = float(max(np.abs(r1).max(), np.abs(r2).max()))
    m = problem.m
    for _ in range(max_iter):
        if rn <= tol:
            break
        lu = splu(problem.jacobian(h, v))
        delta = lu.solve(-np.concatenate([r1, r2]))
        alpha = 1.0
        improved = False
        while alpha > 2.0 ** -20:
            h_t = h + alpha * delta[:m]
            v_t = v + alpha * delta[m:]
            if box is not None:
                (h_lo, v_lo), (h_hi, v_hi) = box
                h_t = np.clip(h_t, h_lo, h_hi)
                v_t = np.clip(v_t, v_lo, v_hi)
            r1_t, r2_t = problem.residual(h_t, v_t)
            rn_t = float(max(np.abs(r1_t).max(), np.abs(r2_t).max()))
            if rn_t < rn:
                h, v, r1, r2, rn = h_t, v_t, r1_t, r2_t, rn_t
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
    return h, v, rn


def solve_endemic(
    coeffs: CoefficientSet,
    bc: BoundarySpec,
    eps: float = 0.0,
    *,
    logistic: LogisticSteady | None = None,
    scalar_eig: ScalarEigenpair | None = None,
    eigenpair: SystemEigenpair | None = None,
    sweep_tol: float = SWEEP_TOL,
    max_sweeps: int = MAX_SWEEPS,
    agreement_tol: float = AGREEMENT_TOL,
    residual_tol: float = RESIDUAL_TOL,
) -> EndemicEquilibrium | EndemicAbsent:
    """Positive equilibrium of the perturbed infection system, or Absent.

    Absent exactly when the system principal eigenvalue is >= 0.  When it
    is negative the equilibrium is bracketed by a downward iteration from
    (H_bar, V_B + eps w) and an upward one from delta (phi1, phi2); the
    two polished limits must agree within agreement_tol (uniqueness), and
    their common value is returned.
    """
    if bc.kind == DIRICHLET and scalar_eig is None:
        scalar_eig = principal_eigen_scalar(coeffs.d2, coeffs.beta, bc)
    if logistic is None:
        logistic = solve_logistic(coeffs, bc, scalar_eig=scalar_eig)
    if not logistic.exists:
        raise ValidationError(
            "endemic solve requires a positive vector equilibrium (lambda_beta < 0); "
            f"got lambda_beta = {logistic.lambda_beta:g}"
        )
    v_b = logistic.v_b
    weight = default_weight(coeffs, bc, scalar_eig)
    check_eps_admissibility(coeffs, v_b, bc, eps, weight, logistic.lambda_beta)

    if float(coeffs.h_u.values.max()) <= 0.0:
        # Decoupled input: the infection block cannot be sourced at all.
        neg_rho = ScalarField(coeffs.mesh, -coeffs.rho.values)
        neg_muv = ScalarField(coeffs.mesh, -coeffs.mu.values * v_b.values)
        lam1 = principal_eigen_scalar(coeffs.d1, neg_rho, bc).lam
        lam2 = principal_eigen_scalar(coeffs.d2, neg_muv, bc).lam
        return EndemicAbsent(min(lam1, lam2), eps, decoupled=True)

    if eigenpair is None:
        eigenpair = principal_eigen_system(coeffs, v_b, bc, eps, weight)
    lam = eigenpair.lam
    if lam >= 0:
        return EndemicAbsent(lam, eps)

    problem = EndemicProblem(coeffs, bc, v_b, eps, weight)
    h_bar = upper_solution_h(coeffs, v_b, bc, eps, weight)
    v_up = ScalarField(coeffs.mesh, v_b.values + eps * weight.values)

    upper_h = problem.op1.restrict(h_bar)
    upper_v = problem.op2.restrict(v_up)
    phi1 = problem.op1.restrict(eigenpair.phi1)
    phi2 = problem.op2.restrict(eigenpair.phi2)
    delta = None
    for cand in DELTA_CANDIDATES:
        lh, lv = cand * phi1, cand * phi2
        fits = bool(
            np.all(lh <= upper_h * (1.0 + 1e-12)) and np.all(lv <= upper_v * (1.0 + 1e-12))
        )
        if fits and problem.is_lower(lh, lv):
            delta = cand
            break
    if delta is None:
        raise ConvergenceError(
            "no amplitude in {1e-1..1e-8} makes delta*(phi1, phi2) an admissible lower solution"
        )

    k_down = problem.sweep_constant(float(upper_h.max()))
    down = monotone_iterate(
        problem, h_bar, v_up, "down", k_c=k_down, sweep_tol=sweep_tol, max_sweeps=max_sweeps
    )
    down_h = problem.op1.restrict(down.h)
    down_v = problem.op2.restrict(down.v)
    # The upward iterates stay below the minimal solution, hence below the
    # downward limit; its (much smaller) sup legitimizes a smaller K_c and
    # a far better contraction rate for the upward phase.
    k_up = problem.sweep_constant(float(down_h.max()))
    lo_h = ScalarField(coeffs.mesh, problem.op1.embed(delta * phi1))
    lo_v = ScalarField(coeffs.mesh, problem.op2.embed(delta * phi2))
    up = monotone_iterate(
        problem, lo_h, lo_v, "up", k_c=k_up, sweep_tol=sweep_tol, max_sweeps=max_sweeps
    )
    up_h = problem.op1.restrict(up.h)
    up_v = problem.op2.restrict(up.v)

    # Polish inside order intervals that bracket the positive root and
    # exclude zero, so Newton cannot drift to the trivial solution.
    hd, vd, rd = _newton_polish(
        problem, down_h, down_v, box=((up_h, up_v), (upper_h, upper_v))
    )
    hu, vu_, ru = _newton_polish(
        problem, up_h, up_v, box=((up_h, up_v), (np.maximum(down_h, hd), np.maximum(down_v, vd)))
    )
    disagreement = max(float(np.abs(hd - hu).max()), float(np.abs(vd - vu_).max()))
    if disagreement > agreement_tol:
        raise UniquenessViolation(
            f"down/up limits disagree by {disagreement:.3e} (> {agreement_tol:g}); "
            "this contradicts uniqueness of the positive equilibrium"
        )
    res = max(rd, ru)
    if res > residual_tol:
        raise ConvergenceError("endemic equilibrium residual above tolerance", residual=res)

    interior = coeffs.mesh.interior
    h_full = problem.op1.embed(hd)
    v_full = problem.op2.embed(vd)
    if h_full[interior].min() <= 0 or v_full[interior].min() <= 0:
        raise ConvergenceError("endemic equilibrium lost interior positivity")
    ceiling = v_b.values + eps * weight.values
    if np.any(v_full[interior] >= ceiling[interior]):
        raise ConvergenceError("endemic V_i does not stay strictly below V_B + eps*weight")

    return EndemicEquilibrium(
        h_i=ScalarField(coeffs.mesh, h_full),
        v_i=ScalarField(coeffs.mesh, v_full),
        v_u=ScalarField(coeffs.mesh, v_b.values - v_full),
        lambda_system=lam,
        eps=eps,
        iterations_upper=down.sweeps,
        iterations_lower=up.sweeps,
        residual=res,
    )
