"""Acceptance criteria for the reduction library and its dynamics stack.

Each test records one pass/fail line through the ``acceptance`` fixture
and then asserts, so a full run prints a nine-line verdict summary.
"""
import time

import numpy as np

from gridreduce import run_comparison
from gridreduce.checks import random_connected_graph, random_network, random_partition
from gridreduce.control import (
    CommunicationGraph,
    CostModel,
    lyapunov_value,
    solve_ofr,
)
from gridreduce.graphs import (
    NodePartition,
    UndirectedGraph,
    incidence_matrix,
    projected_incidence,
    schur_complement,
    weighted_laplacian,
)
from gridreduce.model import (
    FullState,
    ReducedState,
    find_equilibrium,
    project_edge_angles,
    solve_theta_L,
)
from gridreduce.simulate import (
    IntegratorConfig,
    integrate_closed_loop,
    integrate_dae,
    integrate_reduced,
    monitors,
    run_linear_pair,
)

PROJECTION_TOLERANCE = 1e-9
CLOSED_FORM_TOLERANCE = 1e-12
MODEL_GAP_TOLERANCE = 1e-6
DRIFT_TOLERANCE = 1e-6
DISSIPATION_TOLERANCE = 1e-6
FREQUENCY_TOLERANCE_HZ = 1e-3
SHARING_TOLERANCE = 0.01
LYAPUNOV_STEP_TOLERANCE = 1e-6
OPTIMALITY_TOLERANCE = 1e-12
LINEAR_CHAIN_TOLERANCE = 1e-8


def test_criterion_1_projected_incidence_identities(acceptance):
    """Four structural identities over 500 random weighted graphs."""
    rng = np.random.default_rng(2026)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(500):
        graph = random_connected_graph(rng, min_nodes=3, max_nodes=10)
        weights = rng.uniform(0.1, 10.0, graph.edge_count)
        partition = random_partition(rng, graph.node_count)
        b = incidence_matrix(graph)
        b1 = b[list(partition.retained)]
        b2 = b[list(partition.eliminated)]
        reduced = schur_complement(weighted_laplacian(b, weights), partition)
        bs = projected_incidence(b1, b2, weights).matrix
        ones = np.ones(len(partition.retained))
        residual = max(
            np.abs(ones @ bs).max(initial=0.0),
            np.abs((bs * weights) @ b2.T).max(initial=0.0),
            np.abs((bs * weights) @ b1.T - reduced).max(),
            np.abs((bs * weights) @ bs.T - reduced).max(),
        )
        worst = max(worst, residual)
    elapsed = time.perf_counter() - start
    passed = worst < PROJECTION_TOLERANCE and elapsed < 10.0
    acceptance(1, passed, f"500 graphs, worst residual {worst:.3g}, {elapsed:.1f} s")
    assert worst < PROJECTION_TOLERANCE
    assert elapsed < 10.0


def test_criterion_2_hub_closed_forms(acceptance):
    """Two retained nodes joined through one eliminated hub, closed forms."""
    rng = np.random.default_rng(7)
    graph = UndirectedGraph(3, ((0, 2), (2, 1)))
    partition = NodePartition((0, 1), (2,))
    b = incidence_matrix(graph)
    worst = 0.0
    for _ in range(50):
        a, c = rng.uniform(0.1, 10.0, 2)
        weights = np.array([a, c])
        lap = weighted_laplacian(b, weights)
        lap_expected = np.array([[a, 0, -a], [0, c, -c], [-a, -c, a + c]])
        reduced = schur_complement(lap, partition)
        reduced_expected = (a * c / (a + c)) * np.array([[1.0, -1.0], [-1.0, 1.0]])
        bs = projected_incidence(b[:2], b[2:], weights).matrix
        bs_expected = np.array([[c, a], [-c, -a]]) / (a + c)
        worst = max(
            worst,
            np.abs(lap - lap_expected).max(),
            np.abs(reduced - reduced_expected).max(),
            np.abs(bs - bs_expected).max(),
        )
    passed = worst < CLOSED_FORM_TOLERANCE
    acceptance(2, passed, f"50 weight pairs, worst residual {worst:.3g}")
    assert worst < CLOSED_FORM_TOLERANCE


def test_criterion_3_full_vs_reduced_agreement(acceptance, case6_scenario):
    """Constraint-resolved full model tracks the reduced model to 1e-6."""
    start = time.perf_counter()
    comparison = run_comparison(case6_scenario, step=1e-3, horizon=10.0)
    worst = comparison.max_eta_gap
    rng = np.random.default_rng(42)
    cfg = IntegratorConfig(step=1e-3, horizon=10.0)
    for _ in range(20):
        net = random_network(rng)
        u = np.full(net.generator_count, -float(net.load_power.sum()) / net.generator_count)
        eq = find_equilibrium(u, net)
        omega0 = np.zeros(net.generator_count)
        omega0[0] += 0.05
        reduced = integrate_reduced(ReducedState(eq.eta, omega0), u, net, cfg)
        full = integrate_dae(FullState(np.array(eq.theta), omega0), u, net, cfg)
        worst = max(worst, float(np.abs(full.eta - reduced.eta).max()))
    elapsed = time.perf_counter() - start
    passed = worst < MODEL_GAP_TOLERANCE and elapsed < 60.0
    acceptance(
        3, passed, f"case study + 20 networks, worst gap {worst:.3g}, {elapsed:.0f} s"
    )
    assert worst < MODEL_GAP_TOLERANCE
    assert elapsed < 60.0


def test_criterion_4_conserved_vector_drift(acceptance, case6_run):
    """The load vector stays constant within each trajectory segment."""
    result, _ = case6_run
    worst = max(
        float(segment.trajectory.channels["conserved_drift"].max())
        for segment in result.segments
    )
    passed = worst < DRIFT_TOLERANCE
    acceptance(4, passed, f"{len(result.segments)} segments, worst drift {worst:.3g}")
    assert worst < DRIFT_TOLERANCE


def test_criterion_5_storage_dissipation(acceptance, case6_network):
    """Finite-difference storage rate matches -omega^T A omega open loop."""
    net = case6_network
    cost = CostModel(np.array([0.4, 0.2, 0.4 / 3.0]))
    u_bar, _ = solve_ofr(cost, float(net.load_power.sum()))
    eq = find_equilibrium(u_bar, net)
    omega0 = np.array([0.05, -0.03, 0.01])
    cfg = IntegratorConfig(step=1e-3, horizon=10.0)
    trajectory = integrate_reduced(ReducedState(eq.eta, omega0), u_bar, net, cfg)
    trajectory = monitors(trajectory, net, equilibrium=eq)
    energy = trajectory.channels["storage_energy"]
    h = cfg.step
    rate = (energy[2:] - energy[:-2]) / (2.0 * h)
    omega = trajectory.omega_g[1:-1]
    # the balanced dispatch holds omega_bar = 0 and u = u_bar throughout
    dissipation = np.einsum("ij,j,ij->i", omega, net.damping, omega)
    worst = float(np.abs(rate + dissipation).max())
    passed = worst < DISSIPATION_TOLERANCE
    acceptance(5, passed, f"worst dissipation residual {worst:.3g}")
    assert worst < DISSIPATION_TOLERANCE


def test_criterion_6_case_study_regulation(acceptance, case6_run):
    """Load step at t = 4 s: frequency restored, optimal proportional sharing."""
    result, elapsed = case6_run
    deviation = result.summary["final_frequency_deviation_hz"]
    u_end = np.asarray(result.summary["final_u"])
    ratios = u_end / u_end[0]
    sharing_error = float(np.abs(ratios - np.array([1.0, 2.0, 3.0])).max() / 3.0)
    lyapunov_rise = max(
        float(np.diff(segment.trajectory.channels["lyapunov"]).max())
        for segment in result.segments
    )
    passed = (
        deviation < FREQUENCY_TOLERANCE_HZ
        and sharing_error < SHARING_TOLERANCE
        and lyapunov_rise <= LYAPUNOV_STEP_TOLERANCE
        and elapsed < 30.0
    )
    acceptance(
        6,
        passed,
        f"deviation {deviation:.3g} Hz, sharing error {sharing_error:.3g}, "
        f"max V rise {lyapunov_rise:.3g}, {elapsed:.0f} s",
    )
    assert deviation < FREQUENCY_TOLERANCE_HZ
    assert sharing_error < SHARING_TOLERANCE
    assert lyapunov_rise <= LYAPUNOV_STEP_TOLERANCE
    assert elapsed < 30.0


def test_criterion_7_dispatch_optimality(acceptance):
    """Balance, equal marginals, and local optimality of the dispatch."""
    cost = CostModel(np.array([0.4, 0.2, 0.4 / 3.0]))
    total_load = -1.8
    u_star, _ = solve_ofr(cost, total_load)
    balance = abs(float(u_star.sum()) + total_load)
    marginals = cost.marginal(u_star)
    marginal_spread = float(marginals.max() - marginals.min())

    def total_cost(u):
        return 0.5 * float(cost.coefficients @ (u * u))

    rng = np.random.default_rng(3)
    beaten = 0
    for _ in range(20):
        direction = rng.standard_normal(3)
        direction -= direction.mean()
        direction *= 1e-3 / np.linalg.norm(direction)
        if total_cost(u_star + direction) > total_cost(u_star):
            beaten += 1
    passed = (
        balance < OPTIMALITY_TOLERANCE
        and marginal_spread < OPTIMALITY_TOLERANCE
        and beaten == 20
    )
    acceptance(
        7,
        passed,
        f"balance {balance:.3g}, marginal spread {marginal_spread:.3g}, "
        f"beats {beaten}/20 perturbations",
    )
    assert balance < OPTIMALITY_TOLERANCE
    assert marginal_spread < OPTIMALITY_TOLERANCE
    assert beaten == 20


def test_criterion_8_rk4_convergence_order(acceptance, case6_network, case6_scenario):
    """Step-halving on the smooth closed-loop transient shows fourth order."""
    net = case6_network
    ctrl = case6_scenario.controller
    cost = CostModel(np.asarray(ctrl.cost))
    comm = CommunicationGraph.from_pairs(net.generator_count, ctrl.communication)
    u_bar, _ = solve_ofr(cost, float(net.load_power.sum()))
    eq = find_equilibrium(u_bar, net)
    state = ReducedState(eq.eta, np.zeros(net.generator_count))
    xi0 = np.zeros(net.generator_count)

    def final_state(step):
        cfg = IntegratorConfig(step=step, horizon=2.0, record_every=int(round(2.0 / step)))
        traj = integrate_closed_loop(state, xi0, net, cost, comm, cfg)
        return np.concatenate((traj.eta[-1], traj.omega_g[-1], traj.xi[-1]))

    reference = final_state(5e-4)
    error_coarse = np.linalg.norm(final_state(4e-3) - reference)
    error_fine = np.linalg.norm(final_state(2e-3) - reference)
    order = float(np.log2(error_coarse / error_fine))
    passed = 3.7 < order < 4.3 and error_coarse > 1e-13
    acceptance(8, passed, f"observed order {order:.3f}")
    assert error_coarse > 1e-13
    assert 3.7 < order < 4.3


def test_criterion_9_linear_model_chain(acceptance, case6_network):
    """Recovered-edge and projected linear models agree; the projected
    coordinates of the linearized bus-angle model obey the reduced model."""
    net = case6_network
    g = net.generator_count
    rng = np.random.default_rng(11)
    theta_g0 = 0.05 * rng.standard_normal(g)
    omega0 = 0.1 * rng.standard_normal(g)
    u = net.p_hat
    cfg = IntegratorConfig(step=1e-3, horizon=2.0)
    kron, projected = run_linear_pair(theta_g0, omega0, u, net, cfg)
    omega_gap = float(np.abs(kron.omega_g - projected.omega_g).max())

    # linearized bus-angle model: loads follow the linear frequency relation
    theta0 = np.concatenate((theta_g0, solve_theta_L(theta_g0, net)))
    eta = net.incidence.T @ theta0
    omega = omega0.copy()
    load_rows = net.b_load * net.line_weights
    load_gram = load_rows @ net.b_load.T
    coupling = load_rows @ net.b_gen.T

    def rhs(state):
        eta_k, omega_k = state
        omega_l = -np.linalg.solve(load_gram, coupling @ omega_k)
        d_eta = net.b_gen.T @ omega_k + net.b_load.T @ omega_l
        d_omega = (
            u - net.damping * omega_k - net.b_gen @ (net.line_weights * eta_k)
        ) / net.inertia
        return d_eta, d_omega

    h = cfg.step
    chain_gap = 0.0
    for k in range(cfg.step_count):
        mapped = project_edge_angles(eta, net)
        chain_gap = max(
            chain_gap,
            float(np.abs(mapped - projected.eta[k]).max()),
            float(np.abs(omega - projected.omega_g[k]).max()),
        )
        k1 = rhs((eta, omega))
        k2 = rhs((eta + 0.5 * h * k1[0], omega + 0.5 * h * k1[1]))
        k3 = rhs((eta + 0.5 * h * k2[0], omega + 0.5 * h * k2[1]))
        k4 = rhs((eta + h * k3[0], omega + h * k3[1]))
        eta = eta + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        omega = omega + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    chain_gap = max(
        chain_gap,
        float(np.abs(project_edge_angles(eta, net) - projected.eta[-1]).max()),
        float(np.abs(omega - projected.omega_g[-1]).max()),
    )
    passed = omega_gap < LINEAR_CHAIN_TOLERANCE and chain_gap < LINEAR_CHAIN_TOLERANCE
    acceptance(
        9, passed, f"pair frequency gap {omega_gap:.3g}, projection gap {chain_gap:.3g}"
    )
    assert omega_gap < LINEAR_CHAIN_TOLERANCE
    assert chain_gap < LINEAR_CHAIN_TOLERANCE
