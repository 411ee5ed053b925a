"""Scenario execution: split the horizon at load events, integrate, merge.

Each load event ends a segment.  The new constant power takes effect
exactly at the event time; the reduced state is re-projected onto the new
constraint manifold (full-model runs keep the generator angles and
re-solve the load angles).  Monitors are attached per segment against
that segment's equilibrium, so energy channels measure the distance to
the currently relevant steady state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import CommunicationGraph, CostModel, solve_ofr
from .errors import ConvergenceError, ScenarioError, SecurityViolation
from .model import (
    EquilibriumPoint,
    FullState,
    NetworkParameters,
    ReducedState,
    ensure_secure,
    find_equilibrium,
)
from .scenario import Scenario, build_network
from .simulate import (
    IntegratorConfig,
    Trajectory,
    _solve_load_angles,
    integrate_closed_loop,
    integrate_dae,
    integrate_reduced,
    monitors,
    project_compatible,
)

__all__ = [
    "SegmentRun",
    "ScenarioResult",
    "ComparisonResult",
    "run_scenario",
    "run_comparison",
    "merge_trajectories",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SegmentRun:
    """One integrated stretch between events, with its own network."""

    start_time: float
    network: NetworkParameters
    input: np.ndarray
    equilibrium: EquilibriumPoint | None
    trajectory: Trajectory


@dataclass(frozen=True)
class ScenarioResult:
    """Full outcome of a scenario run."""

    scenario: Scenario
    config: IntegratorConfig
    segments: tuple[SegmentRun, ...]
    trajectory: Trajectory
    summary: dict


@dataclass(frozen=True)
class ComparisonResult:
    """Full-model and reduced-model runs of one scenario, with gap series."""

    scenario: Scenario
    config: IntegratorConfig
    full: Trajectory
    reduced: Trajectory
    eta_gap: np.ndarray
    omega_gap: np.ndarray

    @property
    def max_eta_gap(self) -> float:
        return float(self.eta_gap.max())

    @property
    def max_omega_gap(self) -> float:
        return float(self.omega_gap.max())


def _resolve_config(scenario: Scenario, step, horizon) -> IntegratorConfig:
    cfg = scenario.integrator
    step = cfg.step if step is None else float(step)
    horizon = cfg.horizon if horizon is None else float(horizon)
    try:
        return IntegratorConfig(
            step=step, horizon=horizon, method=cfg.method, record_every=cfg.record_every
        )
    except ValueError as exc:
        raise ScenarioError(f"integrator: {exc}") from exc


def _segment_config(cfg: IntegratorConfig, duration: float, index: int) -> IntegratorConfig:
    try:
        return IntegratorConfig(
            step=cfg.step,
            horizon=duration,
            method=cfg.method,
            record_every=cfg.record_every,
        )
    except ValueError as exc:
        raise ScenarioError(
            f"events[{index}]: segment of {duration} s is incompatible with "
            f"step {cfg.step} and record cadence {cfg.record_every}: {exc}"
        ) from exc


def _active_events(scenario: Scenario, horizon: float):
    return tuple(e for e in scenario.events if 0.0 < e.time < horizon)


def _apply_event(net: NetworkParameters, event) -> NetworkParameters:
    local = event.bus - net.generator_count
    power = net.load_power.copy()
    if event.scale is not None:
        power[local] *= event.scale
    else:
        power[local] = event.power
    return net.with_load_power(power)


def _baseline_input(net: NetworkParameters, cost: CostModel | None) -> np.ndarray:
    """Constant input used when no controller closes the loop.

    With a cost block the optimal dispatch for the initial load; otherwise
    the load is split evenly, so the open-loop equilibrium sits at nominal
    frequency either way.
    """
    total = float(net.load_power.sum())
    if cost is not None:
        u_star, _ = solve_ofr(cost, total)
        return u_star
    return np.full(net.generator_count, -total / net.generator_count)


def _initial_condition(scenario: Scenario, net: NetworkParameters, u0: np.ndarray):
    """Resolve the initial block to (reduced state, bus angles)."""
    initial = scenario.initial
    if initial.mode == "equilibrium":
        eq = find_equilibrium(u0, net)
        omega = np.full(net.generator_count, eq.omega_sync)
        return ReducedState(eq.eta, omega), np.array(eq.theta)
    theta = np.asarray(initial.theta, dtype=float)
    omega = np.asarray(initial.omega, dtype=float)
    eta = net.incidence.T @ theta
    ensure_secure(eta)
    return ReducedState(eta, omega), theta


def merge_trajectories(parts) -> Trajectory:
    """Concatenate consecutive trajectory segments into one.

    Segment boundaries carry two samples at the same time (pre- and
    post-event); the post-event sample wins.  Optional series and channels
    are kept only when every part has them.
    """
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to merge")
    if len(parts) == 1:
        return parts[0]

    def stack(extract):
        pieces = [extract(part)[:-1] for part in parts[:-1]]
        pieces.append(extract(parts[-1]))
        return np.concatenate(pieces, axis=0)

    xi = stack(lambda p: p.xi) if all(p.xi is not None for p in parts) else None
    theta = stack(lambda p: p.theta) if all(p.theta is not None for p in parts) else None
    shared = set(parts[0].channels)
    for part in parts[1:]:
        shared &= set(part.channels)
    channels = {name: stack(lambda p, n=name: p.channels[n]) for name in sorted(shared)}
    return Trajectory(
        times=stack(lambda p: p.times),
        eta=stack(lambda p: p.eta),
        omega_g=stack(lambda p: p.omega_g),
        u=stack(lambda p: p.u),
        xi=xi,
        theta=theta,
        channels=channels,
    )


def _segment_equilibrium(
    net: NetworkParameters, cost: CostModel | None, closed: bool, u_bar: np.ndarray
) -> tuple[EquilibriumPoint | None, np.ndarray]:
    """Steady state the current segment converges to, if one exists."""
    if closed:
        u_target, _ = solve_ofr(cost, float(net.load_power.sum()))
    else:
        u_target = u_bar
    try:
        return find_equilibrium(u_target, net), u_target
    except (SecurityViolation, ConvergenceError):
        return None, u_target


def run_scenario(scenario: Scenario, step=None, horizon=None) -> ScenarioResult:
    """Integrate a scenario (closed loop when its controller is enabled)."""
    cfg = _resolve_config(scenario, step, horizon)
    net = build_network(scenario.network)
    ctrl = scenario.controller
    cost = CostModel(np.asarray(ctrl.cost, dtype=float)) if ctrl.cost is not None else None
    closed = ctrl.enabled
    if closed and cost is None:
        raise ScenarioError("controller.cost: required when the controller is enabled")
    comm = (
        CommunicationGraph.from_pairs(net.generator_count, ctrl.communication)
        if closed
        else None
    )
    u_bar = _baseline_input(net, cost)
    state, _ = _initial_condition(scenario, net, u_bar)
    if closed and ctrl.initial_state == "equilibrium":
        xi = cost.coefficients * u_bar
    else:
        xi = np.zeros(net.generator_count)

    events = _active_events(scenario, cfg.horizon)
    bounds = [0.0] + [e.time for e in events] + [cfg.horizon]
    segments = []
    for index, event in enumerate([*events, None]):
        start, end = bounds[index], bounds[index + 1]
        seg_cfg = _segment_config(cfg, end - start, index)
        if closed:
            traj = integrate_closed_loop(state, xi, net, cost, comm, seg_cfg, t0=start)
            xi = traj.xi[-1]
        else:
            traj = integrate_reduced(state, u_bar, net, seg_cfg, t0=start)
        eq, u_target = _segment_equilibrium(net, cost, closed, u_bar)
        traj = monitors(traj, net, equilibrium=eq, cost=cost if closed else None)
        segments.append(SegmentRun(start, net, u_target, eq, traj))
        state = ReducedState(traj.eta[-1], traj.omega_g[-1])
        if event is not None:
            net = _apply_event(net, event)
            try:
                state = ReducedState(project_compatible(state.eta, net), state.omega_g)
            except SecurityViolation as err:
                if err.time is None:
                    err.time = event.time
                raise

    merged = merge_trajectories([seg.trajectory for seg in segments])
    summary = _summarize(scenario, cfg, segments, merged, cost)
    return ScenarioResult(scenario, cfg, tuple(segments), merged, summary)


def _summarize(scenario, cfg, segments, merged, cost) -> dict:
    nominal = scenario.network.nominal_frequency_hz
    omega_end = merged.omega_g[-1]
    u_end = merged.u[-1]
    summary = {
        "name": scenario.name,
        "controller": scenario.controller.enabled,
        "step": cfg.step,
        "final_time": float(merged.times[-1]),
        "events_applied": len(segments) - 1,
        "final_frequency_hz": (nominal + omega_end / TWO_PI).tolist(),
        "final_frequency_deviation_hz": float(np.abs(omega_end).max()) / TWO_PI,
        "final_u": u_end.tolist(),
        "min_security_margin": float(merged.channels["security_margin"].min()),
        "max_conserved_drift": max(
            float(seg.trajectory.channels["conserved_drift"].max()) for seg in segments
        ),
    }
    if cost is not None:
        summary["marginal_costs"] = cost.marginal(u_end).tolist()
    return summary


def run_comparison(scenario: Scenario, step=None, horizon=None) -> ComparisonResult:
    """Integrate the full and the reduced model side by side, open loop.

    Both runs start from the same compatible state, share the constant
    baseline input and apply the same events; the gap series measure how
    far the full-model edge angles and generator frequencies drift from
    the reduced run.
    """
    cfg = _resolve_config(scenario, step, horizon)
    net = build_network(scenario.network)
    ctrl = scenario.controller
    cost = CostModel(np.asarray(ctrl.cost, dtype=float)) if ctrl.cost is not None else None
    u_bar = _baseline_input(net, cost)
    reduced_state, theta0 = _initial_condition(scenario, net, u_bar)
    full_state = FullState(theta0, reduced_state.omega_g)

    events = _active_events(scenario, cfg.horizon)
    bounds = [0.0] + [e.time for e in events] + [cfg.horizon]
    full_parts = []
    reduced_parts = []
    for index, event in enumerate([*events, None]):
        start, end = bounds[index], bounds[index + 1]
        seg_cfg = _segment_config(cfg, end - start, index)
        full_traj = integrate_dae(full_state, u_bar, net, seg_cfg, t0=start)
        reduced_traj = integrate_reduced(reduced_state, u_bar, net, seg_cfg, t0=start)
        full_parts.append(full_traj)
        reduced_parts.append(reduced_traj)
        if event is not None:
            net = _apply_event(net, event)
            theta_end = full_traj.theta[-1]
            g = net.generator_count
            try:
                theta_l = _solve_load_angles(theta_end[:g], theta_end[g:], net)
                reduced_eta = project_compatible(reduced_traj.eta[-1], net)
            except SecurityViolation as err:
                if err.time is None:
                    err.time = event.time
                raise
            full_state = FullState(
                np.concatenate((theta_end[:g], theta_l)), full_traj.omega_g[-1]
            )
            reduced_state = ReducedState(reduced_eta, reduced_traj.omega_g[-1])

    full = merge_trajectories(full_parts)
    reduced = merge_trajectories(reduced_parts)
    eta_gap = np.abs(full.eta - reduced.eta).max(axis=1)
    omega_gap = np.abs(full.omega_g - reduced.omega_g).max(axis=1)
    return ComparisonResult(scenario, cfg, full, reduced, eta_gap, omega_gap)
