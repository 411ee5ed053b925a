"""Randomized structural self-checks behind the verify command.

Each instance draws a connected weighted graph (and a small power network
built on one), evaluates every structural identity of the reduction, and
keeps the worst residual seen per property.  Smaller is better for every
reported residual, so thresholds read uniformly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from .errors import ConvergenceError, SecurityViolation
from .graphs import (
    NodePartition,
    UndirectedGraph,
    as_edge_weights,
    incidence_matrix,
    kernel_projection,
    kron_edge_recovery,
    projected_incidence,
    schur_complement,
    weighted_laplacian,
)
from .model import NetworkParameters, find_equilibrium, nonlinear_reduced_rhs, solve_theta_L

__all__ = [
    "PropertyReport",
    "SuiteReport",
    "random_connected_graph",
    "random_partition",
    "random_network",
    "run_property_suite",
    "INJECTIONS",
]

#: Residual threshold shared by all structural properties.
RESIDUAL_THRESHOLD = 1e-10
#: Smallest nonzero Laplacian eigenvalue accepted as "connected".
CONNECTIVITY_FLOOR = 1e-8

INJECTIONS = ("negative-weight",)


@dataclass(frozen=True)
class PropertyReport:
    """Worst-case outcome of one property over all instances."""

    name: str
    passed: bool
    worst: float
    detail: str = ""


@dataclass(frozen=True)
class SuiteReport:
    """Outcome of a whole randomized run."""

    seed: int
    count: int
    inject: str | None
    properties: tuple[PropertyReport, ...]

    @property
    def passed(self) -> bool:
        return all(prop.passed for prop in self.properties)

    def format_lines(self) -> list[str]:
        lines = []
        for prop in self.properties:
            status = "PASS" if prop.passed else "FAIL"
            line = f"{status}  {prop.name}: worst residual {prop.worst:.3e}"
            if prop.detail:
                line += f" ({prop.detail})"
            lines.append(line)
        return lines


def random_connected_graph(
    rng: np.random.Generator, min_nodes: int = 3, max_nodes: int = 10
) -> UndirectedGraph:
    """Spanning tree over a random node order plus random extra edges."""
    n = int(rng.integers(min_nodes, max_nodes + 1))
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        anchor = order[int(rng.integers(0, k))]
        a, b = int(order[k]), int(anchor)
        edges.add((min(a, b), max(a, b)))
    candidates = [
        (i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in edges
    ]
    if candidates:
        extra = int(rng.integers(0, len(candidates) + 1))
        picks = rng.choice(len(candidates), size=extra, replace=False)
        edges.update(candidates[int(k)] for k in picks)
    return UndirectedGraph(n, tuple(sorted(edges)))


def random_partition(rng: np.random.Generator, node_count: int) -> NodePartition:
    """Nonempty retained and eliminated sets covering all nodes."""
    retained_count = int(rng.integers(1, node_count))
    order = rng.permutation(node_count)
    return NodePartition(
        tuple(sorted(int(v) for v in order[:retained_count])),
        tuple(sorted(int(v) for v in order[retained_count:])),
    )


def random_network(
    rng: np.random.Generator, min_nodes: int = 3, max_nodes: int = 6
) -> NetworkParameters:
    """Small network with a secure equilibrium under balanced even dispatch.

    Loads are rescaled (halved, a bounded number of times) until the
    equilibrium solve succeeds with margin, so every returned network is
    usable for time-domain runs.
    """
    graph = random_connected_graph(rng, min_nodes, max_nodes)
    n = graph.node_count
    generators = int(rng.integers(1, n))
    loads = n - generators
    inertia = rng.uniform(1.0, 5.0, generators)
    damping = rng.uniform(0.5, 2.0, generators)
    reactance = rng.uniform(0.2, 2.0, graph.edge_count)
    voltage = rng.uniform(0.95, 1.05, n)
    load_power = rng.uniform(-0.3, 0.1, loads)
    for _ in range(8):
        net = NetworkParameters(
            graph, generators, inertia, damping, reactance, voltage, load_power
        )
        u_even = np.full(generators, -float(load_power.sum()) / generators)
        try:
            eq = find_equilibrium(u_even, net)
        except (SecurityViolation, ConvergenceError):
            load_power = load_power * 0.5
            continue
        if np.abs(eq.eta).max(initial=0.0) < 1.0:
            return net
        load_power = load_power * 0.5
    raise RuntimeError("could not scale loads to a secure equilibrium")


class _Worst:
    """Tracks the largest residual per property name."""

    def __init__(self):
        self.values: dict[str, float] = {}

    def update(self, name: str, residual: float) -> None:
        residual = float(residual)
        if not np.isfinite(residual):
            residual = np.inf
        self.values[name] = max(self.values.get(name, 0.0), residual)


def _graph_properties(worst: _Worst, rng: np.random.Generator) -> None:
    graph = random_connected_graph(rng)
    weights = as_edge_weights(rng.uniform(0.1, 10.0, graph.edge_count), graph.edge_count)
    partition = random_partition(rng, graph.node_count)
    b = incidence_matrix(graph)
    b1 = b[list(partition.retained)]
    b2 = b[list(partition.eliminated)]
    lap = weighted_laplacian(b, weights)
    reduced = schur_complement(lap, partition)
    proj = projected_incidence(b1, b2, weights)
    bs, pi = proj.matrix, proj.projection
    ones = np.ones(len(partition.retained))

    worst.update("projected-rows-balance", np.abs(ones @ bs).max(initial=0.0))
    worst.update(
        "projected-kernel-orthogonality",
        np.abs((bs * weights) @ b2.T).max(initial=0.0),
    )
    worst.update("cross-factorization", np.abs((bs * weights) @ b1.T - reduced).max())
    worst.update("symmetric-factorization", np.abs((bs * weights) @ bs.T - reduced).max())
    worst.update("projection-idempotent", np.abs(pi @ pi - pi).max())
    # weighted self-adjointness: Pi @ diag(w) is symmetric
    pi_w = pi * weights
    worst.update("projection-weighted-selfadjoint", np.abs(pi_w - pi_w.T).max())
    worst.update("eliminated-rows-annihilated", np.abs(b2 @ pi).max(initial=0.0))

    eigenvalues = np.linalg.eigvalsh(reduced)
    worst.update("schur-zero-row-sums", np.abs(reduced.sum(axis=1)).max())
    worst.update("schur-symmetry", np.abs(reduced - reduced.T).max())
    worst.update("schur-zero-mode", abs(eigenvalues[0]))
    if len(eigenvalues) > 1:
        worst.update(
            "schur-connectivity", max(0.0, CONNECTIVITY_FLOOR - eigenvalues[1])
        )

    kron_graph, kron_weights = kron_edge_recovery(reduced)
    b_hat = incidence_matrix(kron_graph)
    worst.update(
        "kron-reassembly", np.abs(weighted_laplacian(b_hat, kron_weights) - reduced).max()
    )

    cycles = null_space(b)
    if cycles.size:
        worst.update("kernel-containment", np.abs(bs @ cycles).max())
    kernel2 = null_space(b2)
    if kernel2.size:
        worst.update("projection-fixes-kernel", np.abs(pi @ kernel2 - kernel2).max())


def _network_properties(worst: _Worst, rng: np.random.Generator) -> None:
    net = random_network(rng)
    g, loads = net.generator_count, net.load_count

    worst.update(
        "reduced-load-balance", abs(float(net.p_hat.sum()) + float(net.load_power.sum()))
    )

    theta_g = rng.uniform(-0.2, 0.2, g)
    theta = np.concatenate((theta_g, solve_theta_L(theta_g, net)))
    load_rows = net.b_load * net.line_weights
    worst.update(
        "linear-constraint-solve",
        np.abs(net.load_power - load_rows @ (net.incidence.T @ theta)).max(initial=0.0),
    )

    eta = net.incidence.T @ rng.uniform(-0.2, 0.2, net.node_count)
    omega_g = rng.uniform(-1.0, 1.0, g)
    d_eta, _ = nonlinear_reduced_rhs(eta, omega_g, np.zeros(g), net)
    rate = net.b_load @ (net.line_weights * np.cos(eta) * d_eta) if loads else np.zeros(0)
    worst.update("frequency-constraint-rate", np.abs(rate).max(initial=0.0))
    lifted = np.linalg.lstsq(net.incidence.T, d_eta, rcond=None)[0]
    worst.update("reduced-rate-in-image", np.abs(net.incidence.T @ lifted - d_eta).max())

    weights_at = net.line_weights * np.cos(eta)
    proj = projected_incidence(net.b_gen, net.b_load, weights_at)
    lap = weighted_laplacian(net.incidence, weights_at)
    reduced = schur_complement(lap, net.partition)
    worst.update(
        "state-dependent-factorization",
        np.abs((proj.matrix * weights_at) @ proj.matrix.T - reduced).max(),
    )


def run_property_suite(
    seed: int = 0, count: int = 100, inject: str | None = None
) -> SuiteReport:
    """Evaluate all structural properties over ``count`` random instances."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    if inject is not None and inject not in INJECTIONS:
        raise ValueError(f"unknown injection {inject!r}; expected one of {INJECTIONS}")
    rng = np.random.default_rng(seed)
    worst = _Worst()
    failures: list[PropertyReport] = []
    for index in range(count):
        if inject == "negative-weight" and index == 0:
            graph = random_connected_graph(rng)
            weights = rng.uniform(0.1, 10.0, graph.edge_count)
            weights[0] = -1.0
            try:
                as_edge_weights(weights, graph.edge_count)
            except ValueError as exc:
                failures.append(
                    PropertyReport(
                        "positive-weight-precondition", False, 1.0, str(exc)
                    )
                )
            else:
                failures.append(
                    PropertyReport(
                        "positive-weight-precondition",
                        False,
                        1.0,
                        "negative weight was not rejected",
                    )
                )
            continue
        _graph_properties(worst, rng)
        _network_properties(worst, rng)
    properties = [
        PropertyReport(name, value < RESIDUAL_THRESHOLD, value)
        for name, value in sorted(worst.values.items())
    ]
    properties.extend(failures)
    return SuiteReport(seed, count, inject, tuple(properties))
