"""Swing-equation network model with constant-power loads.

Buses are ordered with generator buses first.  Bus angles ``theta`` live on
nodes; the reduced model works with edge angle differences
``eta = B.T @ theta`` where B is the incidence matrix.  Frequencies
``omega`` are deviations from the nominal grid frequency in rad/s.

The secure operating region keeps every edge angle difference strictly
inside (-pi/2, pi/2); state-dependent reductions lose regularity on its
boundary, so the model raises a hard error within a small guard band.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import ConvergenceError, SecurityViolation
from .graphs import (
    NodePartition,
    UndirectedGraph,
    _spd_cholesky,
    as_edge_weights,
    incidence_matrix,
    is_connected,
    kron_edge_recovery,
    projected_incidence,
    schur_complement,
    weighted_laplacian,
)

__all__ = [
    "NetworkParameters",
    "ReducedState",
    "FullState",
    "EquilibriumPoint",
    "SECURITY_LIMIT",
    "SECURITY_GUARD",
    "line_weights",
    "active_power",
    "linear_dae_residual",
    "solve_theta_L",
    "p_hat",
    "linear_reduced_rhs",
    "gamma_prime",
    "projected_incidence_at",
    "omega_L_reconstruct",
    "nonlinear_reduced_rhs",
    "conserved_load_vector",
    "synchronous_frequency",
    "find_equilibrium",
    "storage_energy",
    "hamiltonian",
    "kron_hamiltonian",
    "frequency_disagreement",
    "kron_disagreement",
    "project_edge_angles",
    "security_margin",
    "ensure_secure",
]

#: Boundary of the secure region for edge angle differences, rad.
SECURITY_LIMIT = np.pi / 2
#: Guard band: angles within this distance of the boundary are an error.
SECURITY_GUARD = 1e-6


def _positive_vector(values, length: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (length,):
        raise ValueError(f"{name}: expected shape ({length},), got {arr.shape}")
    if length and not np.all(arr > 0.0):
        raise ValueError(f"{name}: entries must be positive")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=float)
    out.setflags(write=False)
    return out


class NetworkParameters:
    """Immutable bundle of grid parameters and derived reduction matrices.

    Parameters
    ----------
    graph:
        Connected bus graph; buses 0..generator_count-1 are generators,
        the remaining buses are constant-power loads.
    generator_count:
        Number of generator buses (at least one).
    inertia, damping:
        Swing-equation coefficients per generator, positive.
    reactance:
        Line reactance per edge, positive.
    voltage:
        Bus voltage magnitudes, positive; defaults to 1.0 everywhere.
    load_power:
        Net constant-power injection per load bus (consumption negative);
        defaults to zero.
    nominal_frequency_hz:
        Display frequency that deviations are measured against.

    Derived attributes (read-only arrays): ``line_weights``, ``incidence``,
    ``b_gen``, ``b_load``, ``laplacian``, ``reduced_laplacian``,
    ``projected`` (the projected incidence bundle), ``kron_graph``,
    ``kron_weights``, ``kron_incidence`` and ``p_hat`` (the load power seen
    from the generator buses through the eliminated network).
    """

    def __init__(
        self,
        graph: UndirectedGraph,
        generator_count: int,
        inertia,
        damping,
        reactance,
        voltage=None,
        load_power=None,
        nominal_frequency_hz: float = 50.0,
    ):
        if not isinstance(graph, UndirectedGraph):
            raise TypeError("graph must be an UndirectedGraph")
        n = graph.node_count
        m = graph.edge_count
        g = int(generator_count)
        if not 1 <= g <= n:
            raise ValueError("generator_count must be between 1 and the bus count")
        if not is_connected(graph):
            raise ValueError("network graph must be connected")
        if m == 0:
            raise ValueError("network needs at least one line")
        self.graph = graph
        self.generator_count = g
        self.inertia = _freeze(_positive_vector(inertia, g, "inertia"))
        self.damping = _freeze(_positive_vector(damping, g, "damping"))
        self.reactance = _freeze(_positive_vector(reactance, m, "reactance"))
        if voltage is None:
            voltage = np.ones(n)
        self.voltage = _freeze(_positive_vector(voltage, n, "voltage"))
        n_load = n - g
        if load_power is None:
            load_power = np.zeros(n_load)
        load_power = np.asarray(load_power, dtype=float)
        if load_power.shape != (n_load,):
            raise ValueError(f"load_power: expected shape ({n_load},), got {load_power.shape}")
        self.load_power = _freeze(load_power)
        self.nominal_frequency_hz = float(nominal_frequency_hz)
        if self.nominal_frequency_hz <= 0.0:
            raise ValueError("nominal_frequency_hz must be positive")

        tails, heads = graph.endpoint_arrays()
        self.edge_endpoints = (tails, heads)
        self.line_weights = _freeze(line_weights(self))
        self.incidence = _freeze(incidence_matrix(graph))
        self.b_gen = _freeze(self.incidence[:g])
        self.b_load = _freeze(self.incidence[g:])
        self.partition = NodePartition.leading(n, g)
        self.laplacian = _freeze(weighted_laplacian(self.incidence, self.line_weights))
        self.projected = projected_incidence(self.b_gen, self.b_load, self.line_weights)
        self.reduced_laplacian = _freeze(schur_complement(self.laplacian, self.partition))
        self.kron_graph, kron_w = kron_edge_recovery(self.reduced_laplacian)
        self.kron_weights = _freeze(kron_w)
        self.kron_incidence = _freeze(incidence_matrix(self.kron_graph))
        # cached transposes keep the simulation hot path free of copies
        self._bg_t = _freeze(self.b_gen.T)
        self._bl_t = _freeze(self.b_load.T)
        if n_load:
            load_block = (self.b_load * self.line_weights) @ self._bl_t
            self._load_chol = _spd_cholesky(load_block, "NetworkParameters")
            self._gen_load_coupling = _freeze((self.b_gen * self.line_weights) @ self._bl_t)
            self.p_hat = _freeze(
                self._gen_load_coupling @ cho_solve((self._load_chol, True), load_power)
            )
        else:
            self._load_chol = None
            self._gen_load_coupling = _freeze(np.zeros((g, 0)))
            self.p_hat = _freeze(np.zeros(g))

    @property
    def node_count(self) -> int:
        return self.graph.node_count

    @property
    def edge_count(self) -> int:
        return self.graph.edge_count

    @property
    def load_count(self) -> int:
        return self.node_count - self.generator_count

    def with_load_power(self, load_power) -> "NetworkParameters":
        """Copy of the network with a different constant-power load vector."""
        return NetworkParameters(
            self.graph,
            self.generator_count,
            self.inertia,
            self.damping,
            self.reactance,
            self.voltage,
            load_power,
            self.nominal_frequency_hz,
        )

    def _load_block_solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._load_chol is None:
            return np.zeros_like(rhs)
        return cho_solve((self._load_chol, True), rhs)

    def __repr__(self) -> str:
        return (
            f"NetworkParameters(buses={self.node_count}, generators={self.generator_count}, "
            f"lines={self.edge_count})"
        )


@dataclass(frozen=True)
class ReducedState:
    """State of the reduced model: edge angles and generator frequencies."""

    eta: np.ndarray
    omega_g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eta", _freeze(np.atleast_1d(self.eta)))
        object.__setattr__(self, "omega_g", _freeze(np.atleast_1d(self.omega_g)))


@dataclass(frozen=True)
class FullState:
    """State of the full model: bus angles and generator frequencies."""

    theta: np.ndarray
    omega_g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", _freeze(np.atleast_1d(self.theta)))
        object.__setattr__(self, "omega_g", _freeze(np.atleast_1d(self.omega_g)))


@dataclass(frozen=True)
class EquilibriumPoint:
    """Steady state: constant edge angles and one synchronous frequency.

    ``omega_sync`` is the common frequency deviation of every bus; it is
    zero exactly when input and load balance.  ``theta`` are bus angles
    realizing ``eta`` with the first generator angle pinned to zero.
    """

    eta: np.ndarray
    omega_sync: float
    u: np.ndarray
    theta: np.ndarray
    network: NetworkParameters

    def __post_init__(self):
        object.__setattr__(self, "eta", _freeze(np.atleast_1d(self.eta)))
        object.__setattr__(self, "u", _freeze(np.atleast_1d(self.u)))
        object.__setattr__(self, "theta", _freeze(np.atleast_1d(self.theta)))
        ensure_secure(self.eta)


def security_margin(eta) -> float:
    """Distance of the largest edge angle magnitude from pi/2."""
    eta = np.asarray(eta, dtype=float)
    largest = float(np.abs(eta).max(initial=0.0))
    return SECURITY_LIMIT - largest


def ensure_secure(eta) -> None:
    """Raise SecurityViolation when an edge angle reaches the guard band."""
    # inlined security_margin: this runs once per integrator stage
    largest = float(np.abs(np.asarray(eta, dtype=float)).max(initial=0.0))
    margin = SECURITY_LIMIT - largest
    if margin <= SECURITY_GUARD:
        raise SecurityViolation(
            f"edge angle difference within {SECURITY_GUARD:g} rad of +/-pi/2 "
            f"(margin {margin:.3e} rad)",
            margin,
        )


def line_weights(net: NetworkParameters) -> np.ndarray:
    """Edge weights voltage_i * voltage_j / reactance for every line."""
    tails, heads = net.edge_endpoints
    return net.voltage[tails] * net.voltage[heads] / net.reactance


def active_power(theta, net: NetworkParameters) -> np.ndarray:
    """Net active power injection at every bus for bus angles ``theta``."""
    theta = np.asarray(theta, dtype=float)
    eta = net.incidence.T @ theta
    return net.incidence @ (net.line_weights * np.sin(eta))


def linear_dae_residual(theta, omega_g, u, net: NetworkParameters):
    """Residuals of the linearized model equations.

    Returns ``(generator_residual, load_residual)``; both vanish at a
    linear equilibrium.
    """
    theta = np.asarray(theta, dtype=float)
    omega_g = np.asarray(omega_g, dtype=float)
    u = np.asarray(u, dtype=float)
    flow = net.laplacian @ theta
    gen = -net.damping * omega_g - flow[: net.generator_count] + u
    load = -flow[net.generator_count :] + net.load_power
    return gen, load


def solve_theta_L(theta_g, net: NetworkParameters, load_power=None) -> np.ndarray:
    """Load-bus angles solving the linearized load constraint."""
    theta_g = np.asarray(theta_g, dtype=float)
    p = net.load_power if load_power is None else np.asarray(load_power, dtype=float)
    if net.load_count == 0:
        return np.zeros(0)
    rhs = p - (net.b_load * net.line_weights) @ (net._bg_t @ theta_g)
    return net._load_block_solve(rhs)


def p_hat(net: NetworkParameters, load_power=None) -> np.ndarray:
    """Constant-power load as seen from the generator buses.

    Satisfies sum(p_hat) == -sum(load_power): the reduced model carries the
    full demand.
    """
    if load_power is None:
        return net.p_hat.copy()
    p = np.asarray(load_power, dtype=float)
    return net._gen_load_coupling @ net._load_block_solve(p)


def linear_reduced_rhs(eta_s, omega_g, u, net: NetworkParameters):
    """Right-hand side of the linear reduced model on projected edge angles."""
    eta_s = np.asarray(eta_s, dtype=float)
    omega_g = np.asarray(omega_g, dtype=float)
    u = np.asarray(u, dtype=float)
    bs = net.projected.matrix
    d_eta = bs.T @ omega_g
    d_omega = (
        u - net.p_hat - net.damping * omega_g - bs @ (net.line_weights * eta_s)
    ) / net.inertia
    return d_eta, d_omega


def gamma_prime(eta, net: NetworkParameters) -> np.ndarray:
    """State-dependent edge weights gamma_k * cos(eta_k).

    Positivity (eta inside the secure region) is the caller's concern.
    """
    return net.line_weights * np.cos(np.asarray(eta, dtype=float))


def projected_incidence_at(eta, net: NetworkParameters):
    """Projected incidence built with the state-dependent weights at ``eta``."""
    eta = np.asarray(eta, dtype=float)
    ensure_secure(eta)
    return projected_incidence(net.b_gen, net.b_load, gamma_prime(eta, net))


def omega_L_reconstruct(eta, omega_g, net: NetworkParameters) -> np.ndarray:
    """Load-bus frequencies implied by the generator frequencies at ``eta``."""
    eta = np.asarray(eta, dtype=float)
    omega_g = np.asarray(omega_g, dtype=float)
    ensure_secure(eta)
    if net.load_count == 0:
        return np.zeros(0)
    w = net.line_weights * np.cos(eta)
    blw = net.b_load * w
    chol = _spd_cholesky(blw @ net._bl_t, "omega_L_reconstruct")
    return -cho_solve((chol, True), blw @ (net._bg_t @ omega_g), check_finite=False)


def nonlinear_reduced_rhs(eta, omega_g, u, net: NetworkParameters):
    """Right-hand side of the reduced nonlinear model.

    The edge-angle rate is the state-dependent projected incidence applied
    to the generator frequencies, evaluated through the reconstructed load
    frequencies; the frequency rate is the generator swing equation.
    """
    eta = np.asarray(eta, dtype=float)
    omega_g = np.asarray(omega_g, dtype=float)
    ensure_secure(eta)
    d_eta = net._bg_t @ omega_g
    if net.load_count:
        w = net.line_weights * np.cos(eta)
        blw = net.b_load * w
        chol = _spd_cholesky(blw @ net._bl_t, "nonlinear_reduced_rhs")
        omega_l = -cho_solve((chol, True), blw @ d_eta, check_finite=False)
        d_eta = d_eta + net._bl_t @ omega_l
    d_omega = (
        np.asarray(u, dtype=float)
        - net.damping * omega_g
        - net.b_gen @ (net.line_weights * np.sin(eta))
    ) / net.inertia
    return d_eta, d_omega


def conserved_load_vector(eta, net: NetworkParameters) -> np.ndarray:
    """Load-side power flow; constant along reduced-model trajectories."""
    eta = np.asarray(eta, dtype=float)
    return net.b_load @ (net.line_weights * np.sin(eta))


def synchronous_frequency(eta, u, net: NetworkParameters) -> float:
    """Common steady frequency deviation for edge angles ``eta`` and input ``u``."""
    total = float(conserved_load_vector(eta, net).sum()) + float(np.sum(u))
    return total / float(net.damping.sum())


def find_equilibrium(
    u_bar,
    net: NetworkParameters,
    load_power=None,
    tolerance: float = 1e-12,
    max_iterations: int = 50,
) -> EquilibriumPoint:
    """Newton solve for a synchronous equilibrium of the reduced model.

    Bus angles start at zero with the first generator angle pinned there.
    Steps are damped by halving whenever the residual grows or an edge
    angle would leave the secure region.
    """
    if load_power is not None:
        net = net.with_load_power(load_power)
    u_bar = np.asarray(u_bar, dtype=float)
    if u_bar.shape != (net.generator_count,):
        raise ValueError("u_bar must have one entry per generator")
    omega_sync = (float(u_bar.sum()) + float(net.load_power.sum())) / float(net.damping.sum())
    n = net.node_count
    b = net.incidence
    w = net.line_weights
    target = np.concatenate((u_bar - net.damping * omega_sync, net.load_power))

    def residual(theta: np.ndarray) -> np.ndarray:
        return b @ (w * np.sin(b.T @ theta)) - target

    theta = np.zeros(n)
    res = residual(theta)
    res_norm = float(np.abs(res).max())
    for _ in range(max_iterations):
        if res_norm < tolerance:
            break
        eta = b.T @ theta
        jac = b @ ((w * np.cos(eta))[:, None] * b.T)
        try:
            step = np.linalg.solve(jac[1:, 1:], res[1:])
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(
                "equilibrium Newton: singular Jacobian", res_norm
            ) from exc
        scale = 1.0
        boundary_bound = False
        while True:
            candidate = theta.copy()
            candidate[1:] -= scale * step
            if security_margin(b.T @ candidate) <= SECURITY_GUARD:
                boundary_bound = True
            else:
                cand_res = residual(candidate)
                cand_norm = float(np.abs(cand_res).max())
                if cand_norm < res_norm:
                    theta, res, res_norm = candidate, cand_res, cand_norm
                    break
            scale *= 0.5
            if scale < 2.0**-40:
                if boundary_bound:
                    raise SecurityViolation(
                        "equilibrium Newton: iterates leave the secure region "
                        f"(residual {res_norm:.3e})",
                        security_margin(b.T @ theta),
                    )
                raise ConvergenceError(
                    f"equilibrium Newton stalled at residual {res_norm:.3e}", res_norm
                )
    else:
        raise ConvergenceError(
            f"equilibrium Newton did not converge in {max_iterations} iterations "
            f"(residual {res_norm:.3e})",
            res_norm,
        )
    eta = b.T @ theta
    return EquilibriumPoint(eta, omega_sync, u_bar, theta, net)


def storage_energy(eta, omega_g, equilibrium: EquilibriumPoint) -> float:
    """Energy distance of a reduced state from an equilibrium.

    Kinetic part in the frequency deviation, potential part from the line
    flows; zero exactly at the equilibrium and locally positive definite
    inside the secure region.
    """
    net = equilibrium.network
    eta = np.asarray(eta, dtype=float)
    omega_g = np.asarray(omega_g, dtype=float)
    w = net.line_weights
    d_omega = omega_g - equilibrium.omega_sync
    kinetic = 0.5 * float(d_omega @ (net.inertia * d_omega))
    potential = float(w @ (np.cos(equilibrium.eta) - np.cos(eta)))
    potential -= float((w * np.sin(equilibrium.eta)) @ (eta - equilibrium.eta))
    return kinetic + potential


def hamiltonian(eta_s, omega_g, net: NetworkParameters) -> float:
    """Energy of the reduced model on projected edge angles."""
    eta_s = np.asarray(eta_s, dtype=float)
    omega_g = np.asarray(omega_g, dtype=float)
    kinetic = 0.5 * float(omega_g @ (net.inertia * omega_g))
    return kinetic - float(net.line_weights @ np.cos(eta_s))


def kron_hamiltonian(eta_hat, omega_g, net: NetworkParameters) -> float:
    """Energy of the reduced model on the recovered (Kron) edge set."""
    eta_hat = np.asarray(eta_hat, dtype=float)
    omega_g = np.asarray(omega_g, dtype=float)
    kinetic = 0.5 * float(omega_g @ (net.inertia * omega_g))
    return kinetic - float(net.kron_weights @ np.cos(eta_hat))


def frequency_disagreement(omega, net: NetworkParameters) -> np.ndarray:
    """Edge-wise frequency differences for a full bus frequency vector."""
    return net.incidence.T @ np.asarray(omega, dtype=float)


def kron_disagreement(omega_g, kron_incidence) -> np.ndarray:
    """Edge-wise generator frequency differences on the recovered edge set."""
    return np.asarray(kron_incidence, dtype=float).T @ np.asarray(omega_g, dtype=float)


def project_edge_angles(eta, net: NetworkParameters) -> np.ndarray:
    """Component of an edge-angle vector visible to the reduced linear model.

    When the load constraint holds, adding back the constrained component
    B_L^T (B_L W B_L^T)^-1 p reconstructs ``eta`` exactly.
    """
    return net.projected.projection.T @ np.asarray(eta, dtype=float)
