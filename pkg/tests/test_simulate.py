"""Integrators: reduced ODE, constrained full model, and their agreement."""
import numpy as np
import pytest

from gridreduce import (
    CommunicationGraph,
    ConvergenceError,
    CostModel,
    FullState,
    IncompatibleStateError,
    IntegratorConfig,
    NetworkParameters,
    ReducedState,
    SecurityViolation,
    Trajectory,
    UndirectedGraph,
    conserved_load_vector,
    find_equilibrium,
    integrate_closed_loop,
    integrate_dae,
    integrate_reduced,
    monitors,
    project_compatible,
    projected_incidence_at,
    reconstruct_theta,
    run_linear_pair,
    solve_ofr,
    storage_energy,
)
from gridreduce.checks import random_network

HOLD_TOLERANCE = 1e-10
AGREEMENT_TOLERANCE = 1e-8


def hub_network(load: float = -1.0) -> NetworkParameters:
    graph = UndirectedGraph(3, ((0, 2), (2, 1)))
    return NetworkParameters(
        graph,
        2,
        inertia=[1.0, 1.5],
        damping=[1.0, 1.0],
        reactance=[1.0, 1.0],
        load_power=[load],
    )


def perturbed_start(net, magnitude: float = 0.1):
    """Equilibrium under even dispatch with one generator frequency kicked."""
    g = net.generator_count
    u = np.full(g, -float(net.load_power.sum()) / g)
    eq = find_equilibrium(u, net)
    omega = np.full(g, eq.omega_sync)
    omega[0] += magnitude
    return eq, u, omega


# ---------------------------------------------------------------------------
# configuration


def test_integrator_config_validation():
    with pytest.raises(ValueError, match="step"):
        IntegratorConfig(step=0.0)
    with pytest.raises(ValueError, match="method"):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError, match="record_every"):
        IntegratorConfig(record_every=0)
    with pytest.raises(ValueError, match="divide"):
        IntegratorConfig(step=1e-3, horizon=1.0, record_every=3)
    with pytest.raises(ValueError, match="integer multiple"):
        IntegratorConfig(step=1e-3, horizon=0.0005)
    assert IntegratorConfig(step=1e-3, horizon=2.0).step_count == 2000


# ---------------------------------------------------------------------------
# reduced model


def test_integrate_reduced_holds_equilibrium():
    net = hub_network()
    eq, u, _ = perturbed_start(net, magnitude=0.0)
    cfg = IntegratorConfig(step=1e-3, horizon=10.0)
    traj = integrate_reduced(ReducedState(eq.eta, np.zeros(2)), u, net, cfg)
    assert np.abs(traj.eta - eq.eta).max() < HOLD_TOLERANCE
    assert np.abs(traj.omega_g).max() < HOLD_TOLERANCE


def test_integrate_reduced_dissipates_storage():
    net = hub_network()
    eq, u, omega0 = perturbed_start(net)
    cfg = IntegratorConfig(step=1e-3, horizon=5.0)
    traj = integrate_reduced(ReducedState(eq.eta, omega0), u, net, cfg)
    traj = monitors(traj, net, equilibrium=eq)
    storage = traj.channels["storage_energy"]
    assert storage[0] > 0.0
    assert np.diff(storage).max() < 1e-12
    assert storage[-1] < 0.5 * storage[0]


def test_integrate_reduced_conserves_the_load_vector():
    net = hub_network()
    eq, u, omega0 = perturbed_start(net)
    cfg = IntegratorConfig(step=1e-3, horizon=5.0)
    traj = integrate_reduced(ReducedState(eq.eta, omega0), u, net, cfg)
    flows = np.stack([conserved_load_vector(eta, net) for eta in traj.eta])
    assert np.abs(flows - flows[0]).max() < HOLD_TOLERANCE


def test_integrate_reduced_records_the_requested_grid():
    net = hub_network()
    eq, u, omega0 = perturbed_start(net)
    cfg = IntegratorConfig(step=1e-3, horizon=1.0, record_every=10)
    traj = integrate_reduced(ReducedState(eq.eta, omega0), u, net, cfg)
    assert traj.sample_count == 101
    assert np.abs(np.diff(traj.times) - 0.01).max() < 1e-12


def test_integrate_reduced_supports_time_varying_input():
    net = hub_network()
    eq, u, _ = perturbed_start(net, magnitude=0.0)

    def input_fn(t):
        return u + np.array([0.01 * np.sin(t), 0.0])

    cfg = IntegratorConfig(step=1e-3, horizon=1.0, record_every=100)
    traj = integrate_reduced(ReducedState(eq.eta, np.zeros(2)), input_fn, net, cfg)
    expected = np.stack([input_fn(t) for t in traj.times])
    assert np.abs(traj.u - expected).max() == 0.0


def test_integrate_reduced_rejects_mismatched_state():
    net = hub_network()
    cfg = IntegratorConfig(step=1e-3, horizon=1.0)
    with pytest.raises(ValueError, match="dimensions"):
        integrate_reduced(ReducedState(np.zeros(3), np.zeros(2)), np.zeros(2), net, cfg)
    with pytest.raises(ValueError, match="shape"):
        integrate_reduced(ReducedState(np.zeros(2), np.zeros(2)), np.zeros(3), net, cfg)


def test_integrate_reduced_flags_security_violation_with_time():
    # opposing inputs push an edge angle across pi/2 mid-run
    graph = UndirectedGraph(3, ((0, 1), (0, 2), (1, 2)))
    net = NetworkParameters(
        graph, 2, inertia=[0.5, 0.5], damping=[0.2, 0.2],
        reactance=[1.0, 1.0, 1.0], load_power=[-0.1],
    )
    eq = find_equilibrium(np.array([0.05, 0.05]), net)
    cfg = IntegratorConfig(step=1e-3, horizon=5.0)
    with pytest.raises(SecurityViolation) as info:
        integrate_reduced(ReducedState(eq.eta, np.zeros(2)), np.array([4.0, -4.0]), net, cfg)
    assert info.value.time is not None
    assert 0.0 < info.value.time <= 5.0
    assert "at t=" in str(info.value)


def test_rk4_order_of_convergence():
    # Richardson quotient against a fine reference on a smooth swing
    net = hub_network()
    eq, u, omega0 = perturbed_start(net, magnitude=0.3)
    state = ReducedState(eq.eta, omega0)

    def final_state(step):
        cfg = IntegratorConfig(step=step, horizon=1.0, record_every=round(1.0 / step))
        traj = integrate_reduced(state, u, net, cfg)
        return np.concatenate((traj.eta[-1], traj.omega_g[-1]))

    reference = final_state(5e-4)
    coarse = np.abs(final_state(8e-3) - reference).max()
    fine = np.abs(final_state(4e-3) - reference).max()
    order = np.log2(coarse / fine)
    assert coarse > 1e-13, "errors too close to round-off to measure an order"
    assert 3.5 < order < 4.5


# ---------------------------------------------------------------------------
# closed loop


def test_integrate_closed_loop_holds_optimal_equilibrium():
    net = hub_network()
    cost = CostModel(np.array([1.0, 1.0]))
    comm = CommunicationGraph.from_pairs(2, ((0, 1),))
    u_star, _ = solve_ofr(cost, float(net.load_power.sum()))
    eq = find_equilibrium(u_star, net)
    cfg = IntegratorConfig(step=1e-3, horizon=5.0)
    traj = integrate_closed_loop(
        ReducedState(eq.eta, np.zeros(2)), cost.coefficients * u_star, net, cost, comm, cfg
    )
    assert np.abs(traj.eta - eq.eta).max() < HOLD_TOLERANCE
    assert np.abs(traj.omega_g).max() < HOLD_TOLERANCE
    assert np.abs(traj.u - u_star).max() < HOLD_TOLERANCE


def test_integrate_closed_loop_regulates_frequency_from_cold_start():
    net = hub_network()
    cost = CostModel(np.array([1.0, 0.5]))
    comm = CommunicationGraph.from_pairs(2, ((0, 1),))
    u_even = np.full(2, -float(net.load_power.sum()) / 2.0)
    eq = find_equilibrium(u_even, net)
    cfg = IntegratorConfig(step=1e-3, horizon=20.0)
    traj = integrate_closed_loop(
        ReducedState(eq.eta, np.zeros(2)), np.zeros(2), net, cost, comm, cfg
    )
    u_star, _ = solve_ofr(cost, float(net.load_power.sum()))
    opt = find_equilibrium(u_star, net)
    traj = monitors(traj, net, equilibrium=opt, cost=cost)
    lyapunov = traj.channels["lyapunov"]
    assert np.diff(lyapunov).max() < 1e-9
    assert np.abs(traj.omega_g[-1]).max() < 1e-3
    assert np.abs(traj.u[-1] - u_star).max() < 1e-3


def test_integrate_closed_loop_validates_dimensions():
    net = hub_network()
    cost = CostModel(np.array([1.0, 1.0, 1.0]))
    comm = CommunicationGraph.from_pairs(3, ((0, 1), (1, 2)))
    cfg = IntegratorConfig(step=1e-3, horizon=1.0)
    with pytest.raises(ValueError, match="controller dimensions"):
        integrate_closed_loop(
            ReducedState(np.zeros(2), np.zeros(2)), np.zeros(2), net, cost, comm, cfg
        )


# ---------------------------------------------------------------------------
# full model


def test_integrate_dae_holds_equilibrium_and_the_constraint():
    net = hub_network()
    eq, u, _ = perturbed_start(net, magnitude=0.0)
    cfg = IntegratorConfig(step=1e-3, horizon=5.0)
    traj = integrate_dae(FullState(eq.theta, np.zeros(2)), u, net, cfg)
    assert np.abs(traj.theta - eq.theta).max() < HOLD_TOLERANCE
    for eta in traj.eta:
        residual = net.load_power - conserved_load_vector(eta, net)
        assert np.abs(residual).max() < HOLD_TOLERANCE


def test_integrate_dae_satisfies_the_constraint_along_swings():
    net = hub_network()
    eq, u, omega0 = perturbed_start(net, magnitude=0.3)
    cfg = IntegratorConfig(step=1e-3, horizon=3.0)
    traj = integrate_dae(FullState(eq.theta, omega0), u, net, cfg)
    residuals = net.load_power - np.stack(
        [conserved_load_vector(eta, net) for eta in traj.eta]
    )
    assert np.abs(residuals).max() < HOLD_TOLERANCE


def test_integrate_dae_matches_the_reduced_model():
    rng = np.random.default_rng(17)
    for _ in range(3):
        net = random_network(rng)
        eq, u, omega0 = perturbed_start(net, magnitude=0.05)
        cfg = IntegratorConfig(step=1e-3, horizon=2.0)
        full = integrate_dae(FullState(eq.theta, omega0), u, net, cfg)
        reduced = integrate_reduced(ReducedState(eq.eta, omega0), u, net, cfg)
        assert np.abs(full.eta - reduced.eta).max() < AGREEMENT_TOLERANCE
        assert np.abs(full.omega_g - reduced.omega_g).max() < AGREEMENT_TOLERANCE


def test_integrate_dae_rejects_incompatible_initial_state():
    net = hub_network()
    theta = np.array([0.3, -0.2, 0.05])  # violates the load constraint
    cfg = IntegratorConfig(step=1e-3, horizon=1.0)
    with pytest.raises(IncompatibleStateError) as info:
        integrate_dae(FullState(theta, np.zeros(2)), np.zeros(2), net, cfg)
    assert info.value.residual > 0.0


def test_integrate_dae_rejects_mismatched_state():
    net = hub_network()
    cfg = IntegratorConfig(step=1e-3, horizon=1.0)
    with pytest.raises(ValueError, match="dimensions"):
        integrate_dae(FullState(np.zeros(2), np.zeros(2)), np.zeros(2), net, cfg)


# ---------------------------------------------------------------------------
# state projection and reconstruction


def test_project_compatible_keeps_compatible_states():
    net = hub_network()
    eq, _, _ = perturbed_start(net, magnitude=0.0)
    assert np.abs(project_compatible(eq.eta, net) - eq.eta).max() < HOLD_TOLERANCE


def test_project_compatible_restores_the_constraint():
    net = hub_network()
    eq, _, _ = perturbed_start(net, magnitude=0.0)
    bumped = net.with_load_power(net.load_power * 1.2)
    eta = project_compatible(eq.eta, bumped)
    residual = bumped.load_power - conserved_load_vector(eta, bumped)
    assert np.abs(residual).max() < HOLD_TOLERANCE
    # result stays in the incidence image
    lifted = np.linalg.lstsq(bumped.incidence.T, eta, rcond=None)[0]
    assert np.abs(bumped.incidence.T @ lifted - eta).max() < HOLD_TOLERANCE


def test_project_compatible_rejects_bad_shape():
    net = hub_network()
    with pytest.raises(ValueError, match="edge count"):
        project_compatible(np.zeros(3), net)


def test_reconstruct_theta_round_trips_the_reduced_run():
    net = hub_network()
    eq, u, omega0 = perturbed_start(net, magnitude=0.2)
    cfg = IntegratorConfig(step=1e-3, horizon=2.0)
    traj = integrate_reduced(ReducedState(eq.eta, omega0), u, net, cfg)
    recon = reconstruct_theta(traj, net)
    assert np.abs(recon.theta @ net.incidence - traj.eta).max() < HOLD_TOLERANCE
    residuals = net.load_power - np.stack(
        [conserved_load_vector(eta, net) for eta in traj.eta]
    )
    assert np.abs(residuals).max() < 1e-8
    # angle rates match the recovered bus frequencies
    h = cfg.step
    fd = (recon.theta[2:] - recon.theta[:-2]) / (2.0 * h)
    assert np.abs(fd - recon.omega[1:-1]).max() < 1e-5


def test_reconstruct_theta_rejects_out_of_image_angles():
    graph = UndirectedGraph(3, ((0, 1), (0, 2), (1, 2)))
    net = NetworkParameters(
        graph, 2, inertia=[1.0, 1.0], damping=[1.0, 1.0], reactance=[1.0, 1.0, 1.0],
        load_power=[0.0],
    )
    times = np.array([0.0, 1.0])
    eta = np.ones((2, 3))  # nonzero oriented cycle sum: not B^T theta for any theta
    traj = Trajectory(times, eta, np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError, match="incidence image"):
        reconstruct_theta(traj, net)


# ---------------------------------------------------------------------------
# linear pair


def test_run_linear_pair_rest_point():
    net = hub_network()
    cfg = IntegratorConfig(step=1e-3, horizon=1.0)
    kron, projected = run_linear_pair(np.zeros(2), np.zeros(2), net.p_hat, net, cfg)
    assert np.abs(kron.eta).max() < HOLD_TOLERANCE
    assert np.abs(projected.omega_g).max() < HOLD_TOLERANCE


def test_run_linear_pair_dimensions_and_agreement(case6_network):
    net = case6_network
    rng = np.random.default_rng(21)
    theta_g0 = rng.uniform(-0.2, 0.2, 3)
    omega0 = rng.uniform(-0.3, 0.3, 3)
    cfg = IntegratorConfig(step=1e-3, horizon=2.0)
    kron, projected = run_linear_pair(theta_g0, omega0, net.p_hat, net, cfg)
    assert kron.eta.shape[1] == net.kron_incidence.shape[1]
    assert projected.eta.shape[1] == net.edge_count
    assert np.abs(kron.omega_g - projected.omega_g).max() < AGREEMENT_TOLERANCE


def test_run_linear_pair_dissipates_quadratic_energy():
    # with u = p_hat the linear model is damped: E = kinetic + elastic decays
    net = hub_network()
    rng = np.random.default_rng(22)
    cfg = IntegratorConfig(step=1e-3, horizon=3.0)
    kron, _ = run_linear_pair(
        rng.uniform(-0.2, 0.2, 2), rng.uniform(-0.3, 0.3, 2), net.p_hat, net, cfg
    )
    kinetic = 0.5 * np.einsum("ki,i,ki->k", kron.omega_g, net.inertia, kron.omega_g)
    elastic = 0.5 * np.einsum("ke,e,ke->k", kron.eta, net.kron_weights, kron.eta)
    energy = kinetic + elastic
    assert np.diff(energy).max() < 1e-12


def test_run_linear_pair_rejects_bad_shapes():
    net = hub_network()
    cfg = IntegratorConfig(step=1e-3, horizon=1.0)
    with pytest.raises(ValueError, match="generator count"):
        run_linear_pair(np.zeros(3), np.zeros(2), np.zeros(2), net, cfg)


# ---------------------------------------------------------------------------
# monitors


def test_monitors_channels_and_values():
    net = hub_network()
    eq, u, omega0 = perturbed_start(net, magnitude=0.2)
    cfg = IntegratorConfig(step=1e-3, horizon=1.0, record_every=50)
    traj = monitors(integrate_reduced(ReducedState(eq.eta, omega0), u, net, cfg), net,
                    equilibrium=eq)
    for name in ("conserved_drift", "security_margin", "hamiltonian", "disagreement_max",
                 "storage_energy"):
        assert name in traj.channels
    assert "lyapunov" not in traj.channels  # no controller state on this run
    k = traj.sample_count // 2
    assert abs(
        traj.channels["storage_energy"][k]
        - storage_energy(traj.eta[k], traj.omega_g[k], eq)
    ) < 1e-12
    margin = np.pi / 2.0 - np.abs(traj.eta[k]).max()
    assert abs(traj.channels["security_margin"][k] - margin) < 1e-12
    expected = np.abs(projected_incidence_at(traj.eta[k], net).matrix.T @ traj.omega_g[k]).max()
    assert abs(traj.channels["disagreement_max"][k] - expected) < 1e-10


def test_trajectory_validates_sample_counts():
    times = np.zeros(3)
    with pytest.raises(ValueError, match="samples"):
        Trajectory(times, np.zeros((2, 1)), np.zeros((3, 1)), np.zeros((3, 1)))
