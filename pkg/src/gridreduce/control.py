"""Optimal frequency regulation and the distributed averaging controller.

Generation cost is quadratic, 0.5 * q_i * u_i**2 per generator.  The
optimal balanced dispatch equalizes marginal costs q_i * u_i; the
distributed controller reaches it by consensus over a connected
communication graph between the generators.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import UndirectedGraph, incidence_matrix, is_connected
from .model import EquilibriumPoint, NetworkParameters, nonlinear_reduced_rhs, storage_energy

__all__ = [
    "CostModel",
    "CommunicationGraph",
    "solve_ofr",
    "controller_rhs",
    "closed_loop_rhs",
    "lyapunov_value",
]


@dataclass(frozen=True)
class CostModel:
    """Quadratic cost coefficients, one positive entry per generator."""

    coefficients: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.coefficients, dtype=float)
        if q.ndim != 1 or q.size == 0:
            raise ValueError("cost coefficients must be a non-empty vector")
        if not np.all(q > 0.0):
            raise ValueError("cost coefficients must be positive")
        q = np.array(q)
        q.setflags(write=False)
        object.__setattr__(self, "coefficients", q)

    @property
    def generator_count(self) -> int:
        return self.coefficients.size

    def marginal(self, u) -> np.ndarray:
        """Marginal cost q_i * u_i of an injection vector."""
        return self.coefficients * np.asarray(u, dtype=float)


@dataclass(frozen=True)
class CommunicationGraph:
    """Connected unit-weight communication topology between generators."""

    graph: UndirectedGraph

    def __post_init__(self):
        if not is_connected(self.graph):
            raise ValueError("communication graph must be connected")
        b = incidence_matrix(self.graph)
        laplacian = b @ b.T
        laplacian.setflags(write=False)
        object.__setattr__(self, "laplacian", laplacian)

    @classmethod
    def from_pairs(cls, generator_count: int, pairs) -> "CommunicationGraph":
        return cls(UndirectedGraph.from_pairs(generator_count, pairs))

    @property
    def generator_count(self) -> int:
        return self.graph.node_count


def solve_ofr(cost: CostModel, total_load: float) -> tuple[np.ndarray, float]:
    """Cheapest balanced dispatch against a total constant-power load.

    Minimizes 0.5 * sum(q_i * u_i**2) subject to sum(u) + total_load == 0.
    Returns the optimal injections and the multiplier; marginal costs
    q_i * u_i all equal minus the multiplier.
    """
    inverse = 1.0 / cost.coefficients
    multiplier = float(total_load) / float(inverse.sum())
    return -multiplier * inverse, multiplier


def controller_rhs(xi, omega_g, cost: CostModel, comm: CommunicationGraph):
    """Distributed averaging controller: returns (d_xi, u).

    The controller state is driven by consensus on the communication graph
    and by the measured frequency deviations; the injection is the
    cost-scaled controller state.
    """
    xi = np.asarray(xi, dtype=float)
    omega_g = np.asarray(omega_g, dtype=float)
    q = cost.coefficients
    u = xi / q
    d_xi = -comm.laplacian @ xi - omega_g / q
    return d_xi, u


def closed_loop_rhs(
    eta,
    omega_g,
    xi,
    net: NetworkParameters,
    cost: CostModel,
    comm: CommunicationGraph,
):
    """Reduced model in feedback with the averaging controller."""
    d_xi, u = controller_rhs(xi, omega_g, cost, comm)
    d_eta, d_omega = nonlinear_reduced_rhs(eta, omega_g, u, net)
    return d_eta, d_omega, d_xi


def lyapunov_value(eta, omega_g, xi, equilibrium: EquilibriumPoint, cost: CostModel) -> float:
    """Closed-loop energy: storage plus controller distance to its target.

    The controller target is the cost-scaled optimal dispatch of the
    equilibrium input.  Nonincreasing along closed-loop trajectories.
    """
    xi = np.asarray(xi, dtype=float)
    xi_target = cost.coefficients * equilibrium.u
    diff = xi - xi_target
    return storage_energy(eta, omega_g, equilibrium) + 0.5 * float(diff @ diff)
