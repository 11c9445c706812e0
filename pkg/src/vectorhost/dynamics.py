"""IMEX time integration of the parabolic systems.

Diffusion is treated implicitly (one tridiagonal solve per component per
step), reactions explicitly, so the fixed points of the scheme are exactly
the discrete elliptic steady states.  The explicit reaction imposes the
documented step bound

    dt <= 0.5 / max_x (rho + 2 sigma2 Vhat + beta + 2 mu Vhat + sigma1 h_u),

with Vhat = max(max V(0), max beta/mu), a crude Lipschitz bound that also
keeps the update positivity-preserving.  Negative round-off in
(-1e-14, 0) is clamped to zero; anything below that reports blow-up.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import BlowUpError, MeshMismatchError, StabilityError, ValidationError
from .grid import DIRICHLET, BoundarySpec, CoefficientSet, ScalarField, sup_distance
from .operators import ShiftedSolve, assemble

CLAMP_BAND = 1e-14


@dataclass(frozen=True)
class State:
    """Time-stamped triple (H_i, V_u, V_i); all components nonnegative."""

    t: float
    h_i: ScalarField
    v_u: ScalarField
    v_i: ScalarField

    def __post_init__(self):
        mesh = self.h_i.mesh
        if self.v_u.mesh != mesh or self.v_i.mesh != mesh:
            raise MeshMismatchError("state components must share one mesh")
        for name in ("h_i", "v_u", "v_i"):
            if getattr(self, name).values.min() < 0:
                raise ValidationError(f"state component {name} has negative values")

    @property
    def mesh(self):
        return self.h_i.mesh


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    t_end: float
    steady_tol: float = 1e-9
    steady_window: int = 50

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValidationError(f"dt must be positive and finite, got {self.dt}")
        if not (self.t_end > 0 and np.isfinite(self.t_end)):
            raise ValidationError(f"t_end must be positive and finite, got {self.t_end}")
        if self.steady_tol <= 0 or self.steady_window < 1:
            raise ValidationError("steady_tol must be > 0 and steady_window >= 1")


def reaction_bound(coeffs: CoefficientSet, v_hat: float) -> float:
    """Nodewise Lipschitz bound of the reaction used for the dt limit."""
    c = coeffs
    den = (
        c.rho.values
        + 2.0 * c.sigma2.values * v_hat
        + c.beta.values
        + 2.0 * c.mu.values * v_hat
        + c.sigma1.values * c.h_u.values
    )
    return float(den.max())


def v_hat_bound(coeffs: CoefficientSet, v_initial_max: float) -> float:
    return max(float(v_initial_max), float((coeffs.beta.values / coeffs.mu.values).max()))


def stability_dt_max(coeffs: CoefficientSet, state: State) -> float:
    """Largest admissible dt for the 3-component system from this state."""
    v0 = float((state.v_u.values + state.v_i.values).max())
    return 0.5 / reaction_bound(coeffs, v_hat_bound(coeffs, v0))


def _clamp(values: np.ndarray, what: str) -> np.ndarray:
    lowest = values.min()
    if lowest <= -CLAMP_BAND:
        raise BlowUpError(f"{what} dropped to {lowest:.3e}, below the -1e-14 round-off band")
    if lowest < 0.0:
        values = np.maximum(values, 0.0)
    return values


class _Kernels:
    """Prefactored implicit-diffusion solves for one (coeffs, bc, dt)."""

    def __init__(self, coeffs: CoefficientSet, bc: BoundarySpec, dt: float):
        self.dt = dt
        self.op1 = assemble(coeffs.d1, bc)
        self.op2 = assemble(coeffs.d2, bc)
        inv_dt = np.full(coeffs.mesh.n, 1.0 / dt)
        self.sol1 = ShiftedSolve(self.op1, inv_dt)
        self.sol2 = ShiftedSolve(self.op2, inv_dt)
        self.rho = coeffs.rho.values
        self.s1hu = coeffs.sigma1.values * coeffs.h_u.values
        self.s2 = coeffs.sigma2.values
        self.beta = coeffs.beta.values
        self.mu = coeffs.mu.values


def _advance(state: State, k: _Kernels, t_new: float | None = None) -> State:
    h = state.h_i.values
    vu = state.v_u.values
    vi = state.v_i.values
    v = vu + vi
    inv_dt = 1.0 / k.dt
    cross = k.s2 * vu * h
    r_h = -k.rho * h + k.s1hu * vi
    r_vu = -cross + k.beta * v - k.mu * v * vu
    r_vi = cross - k.mu * v * vi
    h_new = _clamp(k.sol1.solve(h * inv_dt + r_h), "H_i")
    vu_new = _clamp(k.sol2.solve(vu * inv_dt + r_vu), "V_u")
    vi_new = _clamp(k.sol2.solve(vi * inv_dt + r_vi), "V_i")
    mesh = state.mesh
    return State(
        state.t + k.dt if t_new is None else t_new,
        ScalarField(mesh, h_new),
        ScalarField(mesh, vu_new),
        ScalarField(mesh, vi_new),
    )


def step(state: State, coeffs: CoefficientSet, bc: BoundarySpec, dt: float) -> State:
    """One IMEX step of the full system; dt must respect the stability bound."""
    if state.mesh != coeffs.mesh:
        raise MeshMismatchError("state and coefficients live on different meshes")
    bound = stability_dt_max(coeffs, state)
    if dt > bound * (1.0 + 1e-12):
        raise StabilityError(f"dt={dt:g} exceeds the explicit-reaction bound {bound:g}")
    return _advance(state, _Kernels(coeffs, bc, dt))


@dataclass
class TrajectorySummary:
    final: State
    steady: bool
    steps: int
    dt: float
    snapshots: list[State] = field(default_factory=list)
    snapshot_distances: list[float] | None = None
    first_time_below: float | None = None
    final_sup_distance: float | None = None


def _snap_dirichlet_zeros(state: State) -> State:
    """Zero the wall nodes exactly; round-off residue (e.g. sin(pi)) is
    snapped, anything larger is rejected."""
    fields = {}
    changed = False
    for name in ("h_i", "v_u", "v_i"):
        f = getattr(state, name)
        tol = 1e-12 * (1.0 + float(np.abs(f.values).max()))
        if abs(f.values[0]) > tol or abs(f.values[-1]) > tol:
            raise ValidationError(f"Dirichlet runs need zero boundary values in {name}")
        if f.values[0] != 0.0 or f.values[-1] != 0.0:
            vals = f.values.copy()
            vals[0] = 0.0
            vals[-1] = 0.0
            f = ScalarField(f.mesh, vals)
            changed = True
        fields[name] = f
    if not changed:
        return state
    return State(state.t, fields["h_i"], fields["v_u"], fields["v_i"])


def integrate(
    state0: State,
    coeffs: CoefficientSet,
    bc: BoundarySpec,
    cfg: StepperConfig,
    *,
    snapshot_times=None,
    reference: tuple[ScalarField, ScalarField, ScalarField] | None = None,
    reference_tol: float | None = None,
    stop_at_steady: bool = True,
) -> TrajectorySummary:
    """Step until t_end, or until the state has moved less than steady_tol
    (sup norm, all components) over the last steady_window steps; the
    windowed measure catches slow drift that per-step changes would hide.
    With a reference triple the per-step sup distance is tracked and the
    first time it dips below reference_tol is recorded."""
    if state0.mesh != coeffs.mesh:
        raise MeshMismatchError("state and coefficients live on different meshes")
    if bc.kind == DIRICHLET:
        state0 = _snap_dirichlet_zeros(state0)
    bound = stability_dt_max(coeffs, state0)
    if cfg.dt > bound * (1.0 + 1e-12):
        raise StabilityError(f"dt={cfg.dt:g} exceeds the explicit-reaction bound {bound:g}")

    ref = None
    if reference is not None:
        ref = tuple(np.asarray(f.values, dtype=float) for f in reference)

    def distance(st: State) -> float:
        return max(
            float(np.abs(st.h_i.values - ref[0]).max()),
            float(np.abs(st.v_u.values - ref[1]).max()),
            float(np.abs(st.v_i.values - ref[2]).max()),
        )

    times = sorted(float(t) for t in snapshot_times) if snapshot_times is not None else []
    summary = TrajectorySummary(final=state0, steady=False, steps=0, dt=cfg.dt)
    if ref is not None:
        summary.snapshot_distances = []
        d0 = distance(state0)
        if reference_tol is not None and d0 < reference_tol:
            summary.first_time_below = 0.0
    idx = 0
    while idx < len(times) and times[idx] <= 1e-12 * max(1.0, cfg.dt):
        summary.snapshots.append(state0)
        if ref is not None:
            summary.snapshot_distances.append(distance(state0))
        idx += 1

    kernels = _Kernels(coeffs, bc, cfg.dt)
    window: deque[State] = deque([state0], maxlen=cfg.steady_window + 1)
    state = state0
    n_full = int(np.floor(cfg.t_end / cfg.dt + 1e-12))
    remainder = cfg.t_end - n_full * cfg.dt
    steps_done = 0

    def one_step(st: State, k: _Kernels, t_new: float) -> State:
        nonlocal idx, steps_done
        new = _advance(st, k, t_new)
        steps_done += 1
        window.append(new)
        if ref is not None and reference_tol is not None and summary.first_time_below is None:
            if distance(new) < reference_tol:
                summary.first_time_below = new.t
        while idx < len(times) and new.t >= times[idx] - 1e-9 * max(1.0, cfg.dt):
            summary.snapshots.append(new)
            if ref is not None:
                summary.snapshot_distances.append(distance(new))
            idx += 1
        return new

    def window_settled() -> bool:
        if len(window) <= cfg.steady_window:
            return False
        old, new = window[0], window[-1]
        moved = max(
            sup_distance(new.h_i, old.h_i),
            sup_distance(new.v_u, old.v_u),
            sup_distance(new.v_i, old.v_i),
        )
        return moved < cfg.steady_tol

    for k in range(n_full):
        state = one_step(state, kernels, (k + 1) * cfg.dt)
        if stop_at_steady and window_settled():
            summary.steady = True
            break
    else:
        if remainder > 1e-12 * cfg.dt:
            state = one_step(state, _Kernels(coeffs, bc, remainder), cfg.t_end)

    summary.final = state
    summary.steps = steps_done
    if ref is not None:
        summary.final_sup_distance = distance(state)
    return summary


@dataclass
class ScalarTrajectory:
    final: ScalarField
    steady: bool
    steps: int
    dt: float
    snapshots: list[tuple[float, ScalarField]] = field(default_factory=list)


def integrate_scalar_logistic(
    v0: ScalarField,
    coeffs: CoefficientSet,
    bc: BoundarySpec,
    cfg: StepperConfig,
    *,
    snapshot_times=None,
    stop_at_steady: bool = True,
    observer=None,
) -> ScalarTrajectory:
    """Integrate the summed vector equation d V/dt - L2 V = beta V - mu V^2
    with the same IMEX splitting as the full system (so V_u + V_i of the
    3-component run and this trajectory agree to round-off).

    observer(t, values) is called on the initial data and after every step.
    """
    mesh = coeffs.mesh
    if v0.mesh != mesh:
        raise MeshMismatchError("v0 and coefficients live on different meshes")
    if v0.values[mesh.interior].min() <= 0:
        raise ValidationError("v0 must be positive at interior nodes")
    if bc.kind == DIRICHLET:
        tol = 1e-12 * (1.0 + float(np.abs(v0.values).max()))
        if abs(v0.values[0]) > tol or abs(v0.values[-1]) > tol:
            raise ValidationError("Dirichlet runs need zero boundary values in v0")
        if v0.values[0] != 0.0 or v0.values[-1] != 0.0:
            vals = v0.values.copy()
            vals[0] = 0.0
            vals[-1] = 0.0
            v0 = ScalarField(mesh, vals)
    bound = 0.5 / reaction_bound(coeffs, v_hat_bound(coeffs, float(v0.values.max())))
    if cfg.dt > bound * (1.0 + 1e-12):
        raise StabilityError(f"dt={cfg.dt:g} exceeds the explicit-reaction bound {bound:g}")

    op2 = assemble(coeffs.d2, bc)
    beta = coeffs.beta.values
    mu = coeffs.mu.values

    times = sorted(float(t) for t in snapshot_times) if snapshot_times is not None else []
    traj = ScalarTrajectory(final=v0, steady=False, steps=0, dt=cfg.dt)
    idx = 0
    t = 0.0
    v = v0.values.copy()
    if observer is not None:
        observer(t, v)
    while idx < len(times) and times[idx] <= 1e-12 * max(1.0, cfg.dt):
        traj.snapshots.append((t, ScalarField(mesh, v)))
        idx += 1

    window: deque[np.ndarray] = deque([v], maxlen=cfg.steady_window + 1)
    n_full = int(np.floor(cfg.t_end / cfg.dt + 1e-12))
    remainder = cfg.t_end - n_full * cfg.dt
    sol = ShiftedSolve(op2, np.full(mesh.n, 1.0 / cfg.dt))
    sol_rem = None
    steps = 0

    def advance(vv: np.ndarray, solver: ShiftedSolve, dt: float) -> np.ndarray:
        rhs = vv / dt + beta * vv - mu * vv * vv
        return _clamp(solver.solve(rhs), "V")

    for k in range(n_full + 1):
        if k == n_full:
            if remainder <= 1e-12 * cfg.dt:
                break
            if sol_rem is None:
                sol_rem = ShiftedSolve(op2, np.full(mesh.n, 1.0 / remainder))
            v_new = advance(v, sol_rem, remainder)
            t = cfg.t_end
        else:
            v_new = advance(v, sol, cfg.dt)
            t = (k + 1) * cfg.dt
        steps += 1
        v = v_new
        window.append(v)
        if observer is not None:
            observer(t, v)
        while idx < len(times) and t >= times[idx] - 1e-9 * max(1.0, cfg.dt):
            traj.snapshots.append((t, ScalarField(mesh, v)))
            idx += 1
        if (
            stop_at_steady
            and len(window) > cfg.steady_window
            and float(np.abs(window[-1] - window[0]).max()) < cfg.steady_tol
        ):
            traj.steady = True
            break

    traj.final = ScalarField(mesh, v)
    traj.steps = steps
    return traj


@dataclass
class AuxPairTrajectory:
    h: ScalarField
    v: ScalarField
    steady: bool
    steps: int
    dt: float
    monotone_ok: bool | None = None
    max_violation: float = 0.0
    first_violation_time: float | None = None


def integrate_aux_pair(
    h0: ScalarField,
    v0: ScalarField,
    coeffs: CoefficientSet,
    v_b: ScalarField,
    bc: BoundarySpec,
    cfg: StepperConfig,
    *,
    eps: float = 0.0,
    weight: ScalarField | None = None,
    monotone: str | None = None,
    monotone_tol: float = 1e-10,
    stop_at_steady: bool = True,
) -> AuxPairTrajectory:
    """Integrate the auxiliary two-component flow with frozen vector
    equilibrium and the positive-part infection term:

        dH/dt - L1 H = -rho H + sigma1 h_u V
        dV/dt - L2 V = sigma2 (V_B + eps w - V)^+ H - mu (V_B - eps w) V

    This is the flow whose trajectories from upper (lower) solutions are
    nodewise non-increasing (non-decreasing); pass monotone="nonincreasing"
    or "nondecreasing" to track violations beyond monotone_tol.  The step
    is capped so the update map is order-preserving over the run.
    """
    mesh = coeffs.mesh
    if weight is None:
        weight = ScalarField(mesh, np.ones(mesh.n))
    if monotone not in (None, "nonincreasing", "nondecreasing"):
        raise ValidationError(f"unknown monotone mode {monotone!r}")
    v_plus = v_b.values + eps * weight.values
    v_minus = v_b.values - eps * weight.values
    rho = coeffs.rho.values
    s1hu = coeffs.sigma1.values * coeffs.h_u.values
    s2 = coeffs.sigma2.values
    mu = coeffs.mu.values

    # Order preservation needs 1/dt >= rho and 1/dt >= sigma2 H + mu (V_B + |eps| w);
    # bound H over the run through the maximum principle.
    v_abs = v_b.values + abs(eps) * weight.values
    h_cap = max(float(h0.values.max()), float((s1hu * v_plus).max()) / float(rho.min()))
    den = np.maximum(rho, s2 * h_cap + mu * v_abs)
    dt = min(cfg.dt, 0.5 / float(den.max()))

    op1 = assemble(coeffs.d1, bc)
    op2 = assemble(coeffs.d2, bc)
    sol1 = ShiftedSolve(op1, np.full(mesh.n, 1.0 / dt))
    sol2 = ShiftedSolve(op2, np.full(mesh.n, 1.0 / dt))

    h = h0.values.copy()
    v = v0.values.copy()
    t = 0.0
    window: deque[tuple[np.ndarray, np.ndarray]] = deque([(h, v)], maxlen=cfg.steady_window + 1)
    out = AuxPairTrajectory(h0, v0, steady=False, steps=0, dt=dt)
    if monotone is not None:
        out.monotone_ok = True
    steps = 0
    while t < cfg.t_end - 1e-12 * max(1.0, dt):
        f1 = -rho * h + s1hu * v
        f2 = s2 * np.maximum(v_plus - v, 0.0) * h - mu * v_minus * v
        h_new = _clamp(sol1.solve(h / dt + f1), "H")
        v_new = _clamp(sol2.solve(v / dt + f2), "V")
        steps += 1
        t = steps * dt
        if monotone is not None:
            if monotone == "nonincreasing":
                viol = max(float((h_new - h).max()), float((v_new - v).max()))
            else:
                viol = max(float((h - h_new).max()), float((v - v_new).max()))
            if viol > out.max_violation:
                out.max_violation = viol
            if viol > monotone_tol and out.first_violation_time is None:
                out.first_violation_time = t
                out.monotone_ok = False
        h, v = h_new, v_new
        window.append((h, v))
        if stop_at_steady and len(window) > cfg.steady_window:
            h_old, v_old = window[0]
            moved = max(float(np.abs(h - h_old).max()), float(np.abs(v - v_old).max()))
            if moved < cfg.steady_tol:
                out.steady = True
                break

    out.h = ScalarField(mesh, h)
    out.v = ScalarField(mesh, v)
    out.steps = steps
    return out


@dataclass
class ComparisonReport:
    ordered: bool
    first_violation_time: float | None
    max_violation: float
    t_end: float
    dt: float


def compare_trajectories(
    state_a: State,
    state_b: State,
    coeffs: CoefficientSet,
    bc: BoundarySpec,
    cfg: StepperConfig,
    *,
    order_tol: float = 1e-10,
) -> ComparisonReport:
    """Integrate two states with identical configuration and report the first
    time (if any) the (H_i, V_i) ordering breaks beyond order_tol.

    Requires state_a <= state_b in (H_i, V_i) at t = 0.  The step is
    internally capped (never above cfg.dt) so the explicit reaction map is
    order-preserving in (H_i, V_i); the crude system bound alone does not
    control the sigma2*H term.
    """
    if state_a.mesh != state_b.mesh or state_a.mesh != coeffs.mesh:
        raise MeshMismatchError("states and coefficients must share one mesh")
    if (
        float((state_a.h_i.values - state_b.h_i.values).max()) > order_tol
        or float((state_a.v_i.values - state_b.v_i.values).max()) > order_tol
    ):
        raise ValidationError("state_a must be <= state_b in (H_i, V_i) at t = 0")

    v_hat = max(
        v_hat_bound(coeffs, float((state_a.v_u.values + state_a.v_i.values).max())),
        v_hat_bound(coeffs, float((state_b.v_u.values + state_b.v_i.values).max())),
    )
    s1hu = coeffs.sigma1.values * coeffs.h_u.values
    h_cap = max(
        float(state_a.h_i.values.max()),
        float(state_b.h_i.values.max()),
        float(s1hu.max()) * v_hat / float(coeffs.rho.values.min()),
    )
    order_den = np.maximum(
        coeffs.rho.values, coeffs.sigma2.values * h_cap + coeffs.mu.values * v_hat
    )
    dt = min(cfg.dt, 0.5 / reaction_bound(coeffs, v_hat), 0.5 / float(order_den.max()))

    kernels = _Kernels(coeffs, bc, dt)
    a, b = state_a, state_b
    report = ComparisonReport(True, None, 0.0, cfg.t_end, dt)
    t = 0.0
    steps = 0
    while t < cfg.t_end - 1e-12 * max(1.0, dt):
        steps += 1
        t = steps * dt
        a = _advance(a, kernels, t)
        b = _advance(b, kernels, t)
        viol = max(
            float((a.h_i.values - b.h_i.values).max()),
            float((a.v_i.values - b.v_i.values).max()),
        )
        if viol > report.max_violation:
            report.max_violation = viol
        if viol > order_tol and report.first_violation_time is None:
            report.first_violation_time = t
            report.ordered = False
    return report
