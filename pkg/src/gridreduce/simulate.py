"""Fixed-step integration of the full and reduced grid models.

All integrators use the classic fourth-order Runge-Kutta scheme on a
uniform time grid.  The full model is a semi-explicit index-1 system: the
load angles are re-solved by Newton iteration at every stage, warm-started
from the previous stage.  Trajectories are immutable once returned.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import cho_solve

from .control import CommunicationGraph, CostModel, closed_loop_rhs, lyapunov_value
from .errors import (
    ConvergenceError,
    IncompatibleStateError,
    RegularityError,
    SecurityViolation,
)
from .graphs import _spd_cholesky
from .model import (
    SECURITY_LIMIT,
    EquilibriumPoint,
    FullState,
    NetworkParameters,
    ReducedState,
    conserved_load_vector,
    ensure_secure,
    nonlinear_reduced_rhs,
)

__all__ = [
    "IntegratorConfig",
    "Trajectory",
    "ReconstructedAngles",
    "integrate_reduced",
    "integrate_closed_loop",
    "integrate_dae",
    "project_compatible",
    "reconstruct_theta",
    "run_linear_pair",
    "monitors",
]

#: Absolute tolerance on the load constraint residual of DAE initial states.
COMPATIBILITY_TOLERANCE = 1e-10
#: Newton settings for the per-stage load-angle solve.
CONSTRAINT_TOLERANCE = 1e-12
CONSTRAINT_MAX_ITERATIONS = 25


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration settings.

    ``horizon`` must be an integer number of steps and ``record_every``
    must divide the step count so the recorded grid stays uniform.
    """

    step: float = 1e-3
    horizon: float = 10.0
    method: str = "rk4"
    record_every: int = 1

    def __post_init__(self):
        if self.step <= 0.0:
            raise ValueError("step must be positive")
        if self.method != "rk4":
            raise ValueError(f"unknown integration method {self.method!r}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError("record_every must be a positive integer")
        object.__setattr__(self, "record_every", int(self.record_every))
        steps = round(self.horizon / self.step)
        if steps < 1 or abs(steps * self.step - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ValueError("horizon must be a positive integer multiple of step")
        if steps % self.record_every:
            raise ValueError("record_every must divide the step count")

    @property
    def step_count(self) -> int:
        return round(self.horizon / self.step)


@dataclass(frozen=True)
class Trajectory:
    """Sampled trajectory on a uniform time grid.

    ``eta`` holds the edge-state of the simulated model (full edge angles
    for the reduced and full models, recovered-edge angles for the reduced
    linear pair).  ``theta`` is present for full-model runs, ``xi`` for
    closed-loop runs.  ``channels`` holds named scalar monitor series.
    """

    times: np.ndarray
    eta: np.ndarray
    omega_g: np.ndarray
    u: np.ndarray
    xi: np.ndarray | None = None
    theta: np.ndarray | None = None
    channels: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        k = self.times.shape[0]
        for name in ("eta", "omega_g", "u", "xi", "theta"):
            series = getattr(self, name)
            if series is not None and series.shape[0] != k:
                raise ValueError(f"{name} has {series.shape[0]} samples, expected {k}")
        for name, series in self.channels.items():
            if series.shape[0] != k:
                raise ValueError(f"channel {name!r} has {series.shape[0]} samples, expected {k}")

    @property
    def sample_count(self) -> int:
        return self.times.shape[0]

    def with_channels(self, **channels) -> "Trajectory":
        """Copy of the trajectory with additional monitor channels."""
        merged = dict(self.channels)
        merged.update(channels)
        return replace(self, channels=merged)


def _as_input(u, size: int):
    """Normalize an input specification to a callable of time."""
    if callable(u):
        return u
    vec = np.asarray(u, dtype=float)
    if vec.shape != (size,):
        raise ValueError(f"input must have shape ({size},), got {vec.shape}")
    return lambda t: vec


def _rk4(rhs, x0: np.ndarray, t0: float, cfg: IntegratorConfig):
    """Fixed-step RK4 returning recorded times and states."""
    h = cfg.step
    steps = cfg.step_count
    every = cfg.record_every
    record = np.empty((steps // every + 1, x0.size))
    record[0] = x0
    x = np.array(x0, dtype=float)
    for k in range(steps):
        t = t0 + k * h
        try:
            k1 = rhs(t, x)
            k2 = rhs(t + 0.5 * h, x + (0.5 * h) * k1)
            k3 = rhs(t + 0.5 * h, x + (0.5 * h) * k2)
            k4 = rhs(t + h, x + h * k3)
        except SecurityViolation as err:
            if err.time is None:
                err.time = t
            raise
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(x).all():
            raise ConvergenceError(f"state became non-finite at t={t + h:.6g} s")
        if (k + 1) % every == 0:
            record[(k + 1) // every] = x
    times = t0 + (h * every) * np.arange(record.shape[0])
    return times, record


def integrate_reduced(
    initial: ReducedState,
    u,
    net: NetworkParameters,
    cfg: IntegratorConfig,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate the reduced nonlinear model under a given input."""
    m = net.edge_count
    g = net.generator_count
    if initial.eta.shape != (m,) or initial.omega_g.shape != (g,):
        raise ValueError("initial state does not match the network dimensions")
    input_fn = _as_input(u, g)
    x0 = np.concatenate((initial.eta, initial.omega_g))

    def rhs(t, x):
        d_eta, d_omega = nonlinear_reduced_rhs(x[:m], x[m:], input_fn(t), net)
        return np.concatenate((d_eta, d_omega))

    times, record = _rk4(rhs, x0, t0, cfg)
    eta = record[:, :m]
    ensure_secure(eta[-1])
    u_samples = np.stack([np.asarray(input_fn(t), dtype=float) for t in times])
    return Trajectory(times, eta, record[:, m:], u_samples)


def integrate_closed_loop(
    initial: ReducedState,
    xi0,
    net: NetworkParameters,
    cost: CostModel,
    comm: CommunicationGraph,
    cfg: IntegratorConfig,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate the reduced model in feedback with the averaging controller."""
    m = net.edge_count
    g = net.generator_count
    xi0 = np.asarray(xi0, dtype=float)
    if initial.eta.shape != (m,) or initial.omega_g.shape != (g,) or xi0.shape != (g,):
        raise ValueError("initial state does not match the network dimensions")
    if cost.generator_count != g or comm.generator_count != g:
        raise ValueError("controller dimensions do not match the network")
    x0 = np.concatenate((initial.eta, initial.omega_g, xi0))

    def rhs(t, x):
        d_eta, d_omega, d_xi = closed_loop_rhs(
            x[:m], x[m : m + g], x[m + g :], net, cost, comm
        )
        return np.concatenate((d_eta, d_omega, d_xi))

    times, record = _rk4(rhs, x0, t0, cfg)
    eta = record[:, :m]
    ensure_secure(eta[-1])
    xi = record[:, m + g :]
    return Trajectory(times, eta, record[:, m : m + g], xi / cost.coefficients, xi=xi)


def _solve_load_angles(
    theta_g: np.ndarray,
    theta_l0: np.ndarray,
    net: NetworkParameters,
    tolerance: float = CONSTRAINT_TOLERANCE,
) -> np.ndarray:
    """Newton solve of the constant-power load constraint for load angles."""
    if net.load_count == 0:
        return np.zeros(0)
    p = net.load_power
    w0 = net.line_weights
    base = net._bg_t @ theta_g
    theta_l = np.array(theta_l0, dtype=float)
    residual_norm = np.inf
    for _ in range(CONSTRAINT_MAX_ITERATIONS):
        eta = base + net._bl_t @ theta_l
        ensure_secure(eta)
        residual = p - net.b_load @ (w0 * np.sin(eta))
        residual_norm = float(np.abs(residual).max())
        if residual_norm <= tolerance:
            return theta_l
        blw = net.b_load * (w0 * np.cos(eta))
        chol = _spd_cholesky(blw @ net._bl_t, "load constraint")
        theta_l = theta_l + cho_solve((chol, True), residual, check_finite=False)
    raise ConvergenceError(
        f"load constraint Newton failed (residual {residual_norm:.3e})", residual_norm
    )


def integrate_dae(
    initial: FullState,
    u,
    net: NetworkParameters,
    cfg: IntegratorConfig,
    t0: float = 0.0,
    compatibility_tolerance: float = COMPATIBILITY_TOLERANCE,
) -> Trajectory:
    """Integrate the full model with its load constraint re-solved per stage.

    The initial bus angles must satisfy the load constraint within
    ``compatibility_tolerance``.
    """
    n = net.node_count
    g = net.generator_count
    if initial.theta.shape != (n,) or initial.omega_g.shape != (g,):
        raise ValueError("initial state does not match the network dimensions")
    input_fn = _as_input(u, g)
    theta0 = np.array(initial.theta, dtype=float)
    eta0 = net.incidence.T @ theta0
    ensure_secure(eta0)
    residual0 = net.load_power - conserved_load_vector(eta0, net)
    residual_norm = float(np.abs(residual0).max(initial=0.0))
    if residual_norm > compatibility_tolerance:
        raise IncompatibleStateError(
            f"initial bus angles violate the load constraint "
            f"(residual {residual_norm:.3e} > {compatibility_tolerance:g})",
            residual_norm,
        )
    warm = [theta0[g:]]
    # _rk4 evaluates four stages per step with the accepted state first, so
    # every fourth solve is the consistent load angle vector of a step start
    stage_loads: list[np.ndarray] = []
    stage_index = [0]

    def rhs(t, x):
        theta_g = x[:g]
        omega = x[g:]
        theta_l = _solve_load_angles(theta_g, warm[0], net)
        warm[0] = theta_l
        if stage_index[0] % 4 == 0:
            stage_loads.append(theta_l)
        stage_index[0] += 1
        eta = net._bg_t @ theta_g + net._bl_t @ theta_l
        d_omega = (
            np.asarray(input_fn(t), dtype=float)
            - net.damping * omega
            - net.b_gen @ (net.line_weights * np.sin(eta))
        ) / net.inertia
        return np.concatenate((omega, d_omega))

    x0 = np.concatenate((theta0[:g], initial.omega_g))
    times, record = _rk4(rhs, x0, t0, cfg)

    # recorded samples are step starts except the last, whose constraint
    # still needs one solve
    theta = np.empty((times.shape[0], n))
    theta[:, :g] = record[:, :g]
    theta[0, g:] = theta0[g:]
    for idx in range(1, times.shape[0] - 1):
        theta[idx, g:] = stage_loads[idx * cfg.record_every]
    if times.shape[0] > 1:
        theta[-1, g:] = _solve_load_angles(record[-1, :g], warm[0], net)
    eta = theta @ net.incidence
    ensure_secure(eta[-1])
    u_samples = np.stack([np.asarray(input_fn(t), dtype=float) for t in times])
    return Trajectory(times, eta, record[:, g:], u_samples, theta=theta)


def project_compatible(eta_guess, net: NetworkParameters, tolerance: float = 1e-10) -> np.ndarray:
    """Nearest compatible edge-angle vector for the network's load power.

    Recovers least-squares bus angles for the guess, then re-solves the
    load angles so the constraint holds; the result lies in the incidence
    image and satisfies the load constraint within ``tolerance``.
    """
    eta_guess = np.asarray(eta_guess, dtype=float)
    if eta_guess.shape != (net.edge_count,):
        raise ValueError("eta_guess does not match the edge count")
    delta = np.linalg.lstsq(net.incidence.T, eta_guess, rcond=None)[0]
    g = net.generator_count
    theta_l = _solve_load_angles(delta[:g], delta[g:], net, tolerance=min(tolerance, 1e-12))
    eta0 = net._bg_t @ delta[:g] + net._bl_t @ theta_l
    ensure_secure(eta0)
    return eta0


def _omega_l_series(eta: np.ndarray, omega_g: np.ndarray, net: NetworkParameters) -> np.ndarray:
    """Batched load-frequency reconstruction over trajectory samples."""
    k = eta.shape[0]
    if net.load_count == 0:
        return np.zeros((k, 0))
    w = net.line_weights * np.cos(eta)
    z = (omega_g @ net.b_gen) * w
    rhs = -(z @ net._bl_t)
    mats = np.einsum("ke,ae,be->kab", w, net.b_load, net.b_load)
    try:
        solved = np.linalg.solve(mats, rhs[..., None])
    except np.linalg.LinAlgError as exc:
        raise RegularityError("load block became singular along the trajectory") from exc
    return solved[..., 0]


@dataclass(frozen=True)
class ReconstructedAngles:
    """Bus angles and full frequency vectors recovered from a reduced run."""

    times: np.ndarray
    theta: np.ndarray
    omega: np.ndarray


def reconstruct_theta(
    trajectory: Trajectory,
    net: NetworkParameters,
    image_tolerance: float = 1e-8,
) -> ReconstructedAngles:
    """Recover full-model bus angles from a reduced trajectory.

    The edge angles are lifted by least squares, the load frequencies are
    reconstructed, and the free constant is fixed so the angle rates equal
    the bus frequencies.  Fails when the edge angles stray from the
    incidence image by more than ``image_tolerance``.
    """
    eta = trajectory.eta
    omega_g = trajectory.omega_g
    if eta.shape[1] != net.edge_count:
        raise ValueError("trajectory edge dimension does not match the network")
    pinv_bt = np.linalg.pinv(net.incidence.T)
    delta = eta @ pinv_bt.T
    image_residual = float(np.abs(delta @ net.incidence - eta).max(initial=0.0))
    if image_residual > image_tolerance:
        raise ValueError(
            f"edge angles leave the incidence image (residual {image_residual:.3e})"
        )
    omega_l = _omega_l_series(eta, omega_g, net)
    omega = np.hstack((omega_g, omega_l))
    integral = cumulative_trapezoid(omega, trajectory.times, axis=0, initial=0.0)
    alpha = (delta.sum(axis=1) - integral.sum(axis=1)) / net.node_count
    theta = delta - alpha[:, None]
    return ReconstructedAngles(trajectory.times, theta, omega)


def run_linear_pair(
    theta_g0,
    omega_g0,
    u,
    net: NetworkParameters,
    cfg: IntegratorConfig,
    t0: float = 0.0,
) -> tuple[Trajectory, Trajectory]:
    """Integrate the two linear reduced models from consistent starts.

    Both models see the same generator angles initially: the recovered-edge
    (Kron) model starts at kron_incidence.T @ theta_g0, the projected model
    at projected.matrix.T @ theta_g0.  Returns (kron, projected)
    trajectories; their generator frequencies agree up to round-off.
    """
    g = net.generator_count
    theta_g0 = np.asarray(theta_g0, dtype=float)
    omega_g0 = np.asarray(omega_g0, dtype=float)
    if theta_g0.shape != (g,) or omega_g0.shape != (g,):
        raise ValueError("initial state does not match the generator count")
    input_fn = _as_input(u, g)

    def integrate(b_edges: np.ndarray, weights: np.ndarray) -> Trajectory:
        m_edges = b_edges.shape[1]
        x0 = np.concatenate((b_edges.T @ theta_g0, omega_g0))

        def rhs(t, x):
            eta = x[:m_edges]
            omega = x[m_edges:]
            d_omega = (
                np.asarray(input_fn(t), dtype=float)
                - net.p_hat
                - net.damping * omega
                - b_edges @ (weights * eta)
            ) / net.inertia
            return np.concatenate((b_edges.T @ omega, d_omega))

        times, record = _rk4(rhs, x0, t0, cfg)
        u_samples = np.stack([np.asarray(input_fn(t), dtype=float) for t in times])
        return Trajectory(times, record[:, :m_edges], record[:, m_edges:], u_samples)

    kron = integrate(net.kron_incidence, net.kron_weights)
    projected = integrate(net.projected.matrix, net.line_weights)
    return kron, projected


def monitors(
    trajectory: Trajectory,
    net: NetworkParameters,
    equilibrium: EquilibriumPoint | None = None,
    cost: CostModel | None = None,
) -> Trajectory:
    """Attach standard scalar monitor channels to a trajectory.

    Always computes the conserved-vector drift, the security margin, the
    reduced-model energy and the largest frequency disagreement.  Given an
    equilibrium, adds the storage energy; given also a cost model and a
    controller state, adds the closed-loop energy.
    """
    eta = trajectory.eta
    omega_g = trajectory.omega_g
    if eta.shape[1] != net.edge_count:
        raise ValueError("trajectory edge dimension does not match the network")
    w = net.line_weights
    sin_eta = np.sin(eta)
    conserved = (sin_eta * w) @ net._bl_t
    drift = np.abs(conserved - conserved[0]).max(axis=1) if net.load_count else np.zeros(
        eta.shape[0]
    )
    margin = SECURITY_LIMIT - np.abs(eta).max(axis=1)
    eta_s = eta @ net.projected.projection
    kinetic = 0.5 * np.einsum("ki,i,ki->k", omega_g, net.inertia, omega_g)
    energy = kinetic - np.cos(eta_s) @ w
    omega_l = _omega_l_series(eta, omega_g, net)
    v = omega_g @ net.b_gen + omega_l @ net.b_load
    disagreement = np.abs(v).max(axis=1)
    channels: dict[str, np.ndarray] = {
        "conserved_drift": drift,
        "security_margin": margin,
        "hamiltonian": energy,
        "disagreement_max": disagreement,
    }
    if equilibrium is not None:
        d_omega = omega_g - equilibrium.omega_sync
        kin = 0.5 * np.einsum("ki,i,ki->k", d_omega, net.inertia, d_omega)
        potential = (np.cos(equilibrium.eta) - np.cos(eta)) @ w
        potential -= (eta - equilibrium.eta) @ (w * np.sin(equilibrium.eta))
        storage = kin + potential
        channels["storage_energy"] = storage
        if cost is not None and trajectory.xi is not None:
            diff = trajectory.xi - cost.coefficients * equilibrium.u
            channels["lyapunov"] = storage + 0.5 * np.einsum("ki,ki->k", diff, diff)
    return trajectory.with_channels(**channels)
