"""Experiment harness: threshold classification, attractor convergence,
the moving-envelope check for Dirichlet runs, and the no-equilibrium
collapse check.

Eigenvalues predict the attractor, simulations confirm it:

    lambda_beta >= 0                      -> Extinct      (0, 0, 0)
    lambda_beta < 0 <= lambda_system      -> DiseaseFree  (0, V_B, 0)
    lambda_system < 0                     -> Endemic      (H*, V_B - V_i*, V_i*)

Runs whose deciding eigenvalue sits within 1e-3 of zero are flagged as
"slow regime" and excluded from pass/fail classification (convergence
time diverges at the threshold).
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .dynamics import State, StepperConfig, integrate, integrate_scalar_logistic
from .eigen import principal_eigen_scalar, principal_eigen_system
from .errors import ValidationError
from .grid import (
    DIRICHLET,
    BoundarySpec,
    CoefficientSet,
    Mesh1D,
    ScalarField,
    field_from_constant,
)
from .steady import (
    EndemicAbsent,
    EndemicEquilibrium,
    EndemicProblem,
    check_eps_admissibility,
    monotone_iterate,
    solve_endemic,
    solve_logistic,
    upper_solution_h,
)

ENDEMIC = "Endemic"
DISEASE_FREE = "DiseaseFree"
EXTINCT = "Extinct"
SLOW_BAND = 1e-3

TrajectoryRow = namedtuple("TrajectoryRow", "t sup_dist sup_h_i sup_v_u sup_v_i")


@dataclass
class ThresholdReport:
    lambda_beta: float
    lambda_system: float | None
    predicted_attractor: str
    attractor: State
    final_sup_distance: float
    time_to_tolerance: float | None
    envelope_ok: bool | None
    eps_used: float
    slow_regime: bool
    steady: bool
    steps: int
    distance_tol: float
    trajectory: list[TrajectoryRow] = field(default_factory=list)
    equilibrium: EndemicEquilibrium | None = None
    v_b: ScalarField | None = None
    final_state: State | None = None


def _zero_state(mesh: Mesh1D) -> tuple[ScalarField, ScalarField, ScalarField]:
    z = field_from_constant(mesh, 0.0)
    return z, z, z


def run_threshold_experiment(
    coeffs: CoefficientSet,
    bc: BoundarySpec,
    initial: State,
    cfg: StepperConfig,
    *,
    distance_tol: float = 1e-4,
    eps: float = 0.0,
    snapshot_times=None,
) -> ThresholdReport:
    """Classify the scenario by its eigenvalues, then integrate and record
    how the trajectory approaches the predicted attractor."""
    mesh = coeffs.mesh
    if initial.mesh != mesh:
        raise ValidationError("initial state must live on the coefficient mesh")
    interior = mesh.interior
    for name in ("h_i", "v_u", "v_i"):
        if getattr(initial, name).values[interior].min() <= 0:
            raise ValidationError(f"initial {name} must be positive at interior nodes")

    scalar_eig = principal_eigen_scalar(coeffs.d2, coeffs.beta, bc)
    lam_beta = scalar_eig.lam
    lam_sys = None
    equilibrium = None
    v_b = None
    if lam_beta >= 0:
        predicted = EXTINCT
        attractor = _zero_state(mesh)
    else:
        logistic = solve_logistic(coeffs, bc, scalar_eig=scalar_eig)
        v_b = logistic.v_b
        sys_eig = principal_eigen_system(coeffs, logistic.v_b, bc)
        lam_sys = sys_eig.lam
        if lam_sys >= 0:
            predicted = DISEASE_FREE
            zero = field_from_constant(mesh, 0.0)
            attractor = (zero, logistic.v_b, zero)
        else:
            predicted = ENDEMIC
            eq = solve_endemic(
                coeffs, bc, 0.0, logistic=logistic, scalar_eig=scalar_eig, eigenpair=sys_eig
            )
            assert isinstance(eq, EndemicEquilibrium)
            equilibrium = eq
            attractor = (eq.h_i, eq.v_u, eq.v_i)

    slow = abs(lam_beta) <= SLOW_BAND or (lam_sys is not None and abs(lam_sys) <= SLOW_BAND)

    if snapshot_times is None:
        snapshot_times = np.linspace(0.0, cfg.t_end, 101)
    traj = integrate(
        initial,
        coeffs,
        bc,
        cfg,
        snapshot_times=snapshot_times,
        reference=attractor,
        reference_tol=distance_tol,
    )
    rows = [
        TrajectoryRow(
            st.t,
            dist,
            float(np.abs(st.h_i.values).max()),
            float(np.abs(st.v_u.values).max()),
            float(np.abs(st.v_i.values).max()),
        )
        for st, dist in zip(traj.snapshots, traj.snapshot_distances)
    ]

    envelope_ok = None
    if bc.kind == DIRICHLET and eps > 0 and lam_beta < 0:
        env = check_envelope_dirichlet(coeffs, initial, eps, cfg)
        envelope_ok = env.t_eps is not None and env.held_until_end

    att_state = State(0.0, attractor[0], attractor[1], attractor[2])
    return ThresholdReport(
        lambda_beta=lam_beta,
        lambda_system=lam_sys,
        predicted_attractor=predicted,
        attractor=att_state,
        final_sup_distance=traj.final_sup_distance,
        time_to_tolerance=traj.first_time_below,
        envelope_ok=envelope_ok,
        eps_used=eps,
        slow_regime=slow,
        steady=traj.steady,
        steps=traj.steps,
        distance_tol=distance_tol,
        trajectory=rows,
        equilibrium=equilibrium,
        v_b=v_b,
        final_state=traj.final,
    )


@dataclass
class EnvelopeReport:
    t_eps: float | None
    held_until_end: bool
    lambda_beta: float
    eps: float
    t_end: float
    margins: list[tuple[float, float, float]] = field(default_factory=list)


def check_envelope_dirichlet(
    coeffs: CoefficientSet,
    initial: State,
    eps: float,
    cfg: StepperConfig,
    *,
    margin_times=None,
) -> EnvelopeReport:
    """Track when V = V_u + V_i first enters the moving envelope
    V_D - eps*phi < V < V_D + eps*phi at all interior nodes, and whether it
    stays inside until t_end (phi: sup-normalized principal eigenfunction
    of -L2 - beta under Dirichlet closure)."""
    if eps <= 0:
        raise ValidationError("envelope check needs eps > 0")
    bc = BoundarySpec.dirichlet()
    mesh = coeffs.mesh
    scalar_eig = principal_eigen_scalar(coeffs.d2, coeffs.beta, bc)
    if scalar_eig.lam >= 0:
        raise ValidationError(
            f"envelope check requires lambda_beta < 0, got {scalar_eig.lam:g} "
            "(no positive vector equilibrium exists)"
        )
    logistic = solve_logistic(coeffs, bc, scalar_eig=scalar_eig)
    check_eps_admissibility(coeffs, logistic.v_b, bc, eps, scalar_eig.phi, scalar_eig.lam)

    interior = mesh.interior
    lower = (logistic.v_b.values - eps * scalar_eig.phi.values)[interior]
    upper = (logistic.v_b.values + eps * scalar_eig.phi.values)[interior]
    v0 = ScalarField(mesh, initial.v_u.values + initial.v_i.values)

    found: list[float | None] = [None]
    held = [True]
    margins: list[tuple[float, float, float]] = []
    mtimes = sorted(float(t) for t in margin_times) if margin_times is not None else []
    midx = [0]

    def observer(t: float, values: np.ndarray):
        vi = values[interior]
        inside = bool(np.all(lower < vi) and np.all(vi < upper))
        if inside and found[0] is None:
            found[0] = t
        if not inside and found[0] is not None:
            held[0] = False
        while midx[0] < len(mtimes) and t >= mtimes[midx[0]] - 1e-9:
            margins.append((t, float((vi - lower).min()), float((upper - vi).min())))
            midx[0] += 1

    integrate_scalar_logistic(
        v0, coeffs, bc, cfg, stop_at_steady=False, observer=observer
    )
    return EnvelopeReport(
        t_eps=found[0],
        held_until_end=held[0] if found[0] is not None else False,
        lambda_beta=scalar_eig.lam,
        eps=eps,
        t_end=cfg.t_end,
        margins=margins,
    )


@dataclass
class AbsenceReport:
    """Outcome of the no-endemic-equilibrium check when the system
    eigenvalue is nonnegative: the solver must report Absent and the
    downward iteration from the upper pair must collapse toward zero."""

    applicable: bool
    lambda_beta: float
    lambda_system: float | None = None
    absent_confirmed: bool | None = None
    collapse_sup: float | None = None
    confirmed: bool | None = None


def check_endemic_absence(
    coeffs: CoefficientSet,
    bc: BoundarySpec,
    *,
    gate: float = 1e-8,
    collapse_tol: float = 1e-6,
    max_sweeps: int = 5000,
) -> AbsenceReport:
    """When the system eigenvalue at the vector equilibrium is >= gate,
    confirm solve_endemic returns Absent and the down-iteration from the
    upper pair collapses below collapse_tol in sup norm."""
    scalar_eig = principal_eigen_scalar(coeffs.d2, coeffs.beta, bc)
    if scalar_eig.lam >= 0:
        raise ValidationError("absence check requires lambda_beta < 0")
    logistic = solve_logistic(coeffs, bc, scalar_eig=scalar_eig)
    sys_eig = principal_eigen_system(coeffs, logistic.v_b, bc)
    if sys_eig.lam < gate:
        return AbsenceReport(False, scalar_eig.lam, sys_eig.lam)

    res = solve_endemic(
        coeffs, bc, 0.0, logistic=logistic, scalar_eig=scalar_eig, eigenpair=sys_eig
    )
    absent = isinstance(res, EndemicAbsent)

    problem = EndemicProblem(coeffs, bc, logistic.v_b, 0.0)
    h_bar = upper_solution_h(coeffs, logistic.v_b, bc)
    run = monotone_iterate(
        problem,
        h_bar,
        logistic.v_b,
        "down",
        max_sweeps=max_sweeps,
        stop_below_sup=0.5 * collapse_tol,
    )
    collapse_sup = max(float(np.abs(run.h.values).max()), float(np.abs(run.v.values).max()))
    return AbsenceReport(
        applicable=True,
        lambda_beta=scalar_eig.lam,
        lambda_system=sys_eig.lam,
        absent_confirmed=absent,
        collapse_sup=collapse_sup,
        confirmed=absent and collapse_sup < collapse_tol,
    )


@dataclass(frozen=True)
class Scenario:
    coeffs: CoefficientSet
    initial: State


def wavy_field(mesh: Mesh1D, rng: np.random.Generator, lo: float = 0.2, hi: float = 5.0) -> ScalarField:
    """c0 (1 + a sin(k pi xi)): c0 log-uniform in [lo, hi], a uniform in
    [0, 0.5], k in {1, 2, 3}; strictly positive by construction."""
    c0 = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    a = float(rng.uniform(0.0, 0.5))
    k = int(rng.integers(1, 4))
    xi = (mesh.nodes - mesh.a) / (mesh.b - mesh.a)
    return ScalarField(mesh, c0 * (1.0 + a * np.sin(k * np.pi * xi)))


def random_coefficients(mesh: Mesh1D, rng: np.random.Generator) -> CoefficientSet:
    """Seeded smooth positive coefficients (one wavy profile per name)."""
    names = ("d1", "d2", "rho", "sigma1", "sigma2", "beta", "mu", "h_u")
    return CoefficientSet(**{name: wavy_field(mesh, rng) for name in names})


def random_initial(mesh: Mesh1D, bc: BoundarySpec, rng: np.random.Generator) -> State:
    """Seeded positive-in-the-interior initial data (boundary zeros for Dirichlet)."""
    xi = (mesh.nodes - mesh.a) / (mesh.b - mesh.a)
    if bc.kind == DIRICHLET:
        bump = np.sin(np.pi * xi)
        bump[0] = bump[-1] = 0.0
    else:
        bump = np.ones(mesh.n)
    comps = []
    for _ in range(3):
        c0 = float(np.exp(rng.uniform(np.log(0.1), np.log(2.0))))
        a = float(rng.uniform(0.0, 0.5))
        k = int(rng.integers(1, 4))
        comps.append(ScalarField(mesh, c0 * (1.0 + a * np.sin(k * np.pi * xi)) * bump))
    return State(0.0, comps[0], comps[1], comps[2])


def random_scenario(mesh: Mesh1D, bc: BoundarySpec, rng: np.random.Generator) -> Scenario:
    return Scenario(random_coefficients(mesh, rng), random_initial(mesh, bc, rng))
