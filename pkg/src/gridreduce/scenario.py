"""Scenario files: a TOML schema for networks, events, and run settings.

A scenario bundles one network, an initial condition, an ordered list of
load-step events, controller settings, integrator settings and output
requests.  Bus numbers are 1-based in files and 0-based in the parsed
dataclasses; generator buses come first.  See ``data/case6.toml`` for a
commented example.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ScenarioError
from .graphs import UndirectedGraph
from .model import NetworkParameters
from .simulate import IntegratorConfig

__all__ = [
    "LineSpec",
    "NetworkSpec",
    "InitialSpec",
    "LoadEvent",
    "ControllerSpec",
    "OutputSpec",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "format_scenario",
    "build_network",
    "builtin_case6",
    "bundled_case6_path",
]

FORMAT_VERSION = 1


@dataclass(frozen=True)
class LineSpec:
    """One transmission line: 0-based endpoints and a positive reactance."""

    tail: int
    head: int
    reactance: float


@dataclass(frozen=True)
class NetworkSpec:
    buses: int
    generators: int
    lines: tuple[LineSpec, ...]
    inertia: tuple[float, ...]
    damping: tuple[float, ...]
    voltage: tuple[float, ...]
    load_power: tuple[float, ...]
    nominal_frequency_hz: float = 50.0


@dataclass(frozen=True)
class InitialSpec:
    """Either a solved equilibrium or an explicit (theta, omega) state."""

    mode: str = "equilibrium"
    theta: tuple[float, ...] | None = None
    omega: tuple[float, ...] | None = None


@dataclass(frozen=True)
class LoadEvent:
    """Constant-power step at one load bus, applied exactly on the grid.

    Exactly one of ``scale`` (multiplies the current injection) or
    ``power`` (replaces it) is set.
    """

    time: float
    bus: int
    scale: float | None = None
    power: float | None = None


@dataclass(frozen=True)
class ControllerSpec:
    enabled: bool = False
    cost: tuple[float, ...] | None = None
    communication: tuple[tuple[int, int], ...] = ()
    initial_state: str = "zero"


@dataclass(frozen=True)
class OutputSpec:
    csv: str | None = None
    figures: tuple[str, ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    network: NetworkSpec
    initial: InitialSpec = InitialSpec()
    events: tuple[LoadEvent, ...] = ()
    controller: ControllerSpec = ControllerSpec()
    integrator: IntegratorConfig = IntegratorConfig()
    output: OutputSpec = OutputSpec()
    format_version: int = FORMAT_VERSION


def _fail(path: str, message: str) -> ScenarioError:
    return ScenarioError(f"{path}: {message}")


def _require(table: dict, key: str, kind, path: str):
    if key not in table:
        raise _fail(f"{path}.{key}", "missing required key")
    return _typed(table[key], key, kind, path)


def _typed(value, key: str, kind, path: str):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise _fail(f"{path}.{key}", "expected an integer")
    if not isinstance(value, kind):
        raise _fail(f"{path}.{key}", f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _float_tuple(values, length: int | None, path: str) -> tuple[float, ...]:
    if not isinstance(values, list):
        raise _fail(path, "expected an array of numbers")
    out = []
    for idx, value in enumerate(values):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _fail(f"{path}[{idx}]", "expected a number")
        out.append(float(value))
    if length is not None and len(out) != length:
        raise _fail(path, f"expected {length} entries, got {len(out)}")
    return tuple(out)


def _check_unknown(table: dict, allowed: set[str], path: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise _fail(path, f"unknown key(s): {', '.join(sorted(unknown))}")


def _bus_index(value, buses: int, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(path, "expected a 1-based bus number")
    if not 1 <= value <= buses:
        raise _fail(path, f"bus number {value} out of range 1..{buses}")
    return value - 1


def _parse_network(table, path: str = "network") -> NetworkSpec:
    if not isinstance(table, dict):
        raise _fail(path, "expected a table")
    _check_unknown(
        table,
        {
            "buses",
            "generators",
            "nominal_frequency_hz",
            "lines",
            "inertia",
            "damping",
            "voltage",
            "load_power",
        },
        path,
    )
    buses = _require(table, "buses", int, path)
    generators = _require(table, "generators", int, path)
    if buses < 1:
        raise _fail(f"{path}.buses", "must be at least 1")
    if not 1 <= generators <= buses:
        raise _fail(f"{path}.generators", "must be between 1 and the bus count")
    raw_lines = table.get("lines")
    if not isinstance(raw_lines, list) or not raw_lines:
        raise _fail(f"{path}.lines", "expected a non-empty array of [from, to, reactance]")
    lines = []
    for idx, entry in enumerate(raw_lines):
        entry_path = f"{path}.lines[{idx}]"
        if not isinstance(entry, list) or len(entry) != 3:
            raise _fail(entry_path, "expected [from_bus, to_bus, reactance]")
        tail = _bus_index(entry[0], buses, f"{entry_path}[0]")
        head = _bus_index(entry[1], buses, f"{entry_path}[1]")
        reactance = entry[2]
        if isinstance(reactance, bool) or not isinstance(reactance, (int, float)):
            raise _fail(f"{entry_path}[2]", "expected a number")
        reactance = float(reactance)
        if reactance <= 0.0:
            raise _fail(f"{entry_path}[2]", "reactance must be positive")
        if tail == head:
            raise _fail(entry_path, "line endpoints must differ")
        lines.append(LineSpec(tail, head, reactance))
    inertia = _float_tuple(_require(table, "inertia", list, path), generators, f"{path}.inertia")
    damping = _float_tuple(_require(table, "damping", list, path), generators, f"{path}.damping")
    if "voltage" in table:
        voltage = _float_tuple(table["voltage"], buses, f"{path}.voltage")
    else:
        voltage = (1.0,) * buses
    load_count = buses - generators
    if "load_power" in table:
        load_power = _float_tuple(table["load_power"], load_count, f"{path}.load_power")
    else:
        load_power = (0.0,) * load_count
    nominal = table.get("nominal_frequency_hz", 50.0)
    if isinstance(nominal, bool) or not isinstance(nominal, (int, float)):
        raise _fail(f"{path}.nominal_frequency_hz", "expected a number")
    for name, values in (("inertia", inertia), ("damping", damping), ("voltage", voltage)):
        if any(v <= 0.0 for v in values):
            raise _fail(f"{path}.{name}", "entries must be positive")
    return NetworkSpec(
        buses=buses,
        generators=generators,
        lines=tuple(lines),
        inertia=inertia,
        damping=damping,
        voltage=voltage,
        load_power=load_power,
        nominal_frequency_hz=float(nominal),
    )


def _parse_initial(table, network: NetworkSpec, path: str = "initial") -> InitialSpec:
    if table is None:
        return InitialSpec()
    if not isinstance(table, dict):
        raise _fail(path, "expected a table")
    _check_unknown(table, {"mode", "theta", "omega"}, path)
    mode = table.get("mode", "equilibrium")
    if mode not in ("equilibrium", "state"):
        raise _fail(f"{path}.mode", "expected 'equilibrium' or 'state'")
    if mode == "equilibrium":
        if "theta" in table or "omega" in table:
            raise _fail(path, "theta/omega are only valid with mode = 'state'")
        return InitialSpec()
    theta = _float_tuple(_require(table, "theta", list, path), network.buses, f"{path}.theta")
    omega = _float_tuple(
        _require(table, "omega", list, path), network.generators, f"{path}.omega"
    )
    return InitialSpec(mode="state", theta=theta, omega=omega)


def _parse_events(entries, network: NetworkSpec, horizon: float, step: float) -> tuple[LoadEvent, ...]:
    if entries is None:
        return ()
    if not isinstance(entries, list):
        raise ScenarioError("events: expected an array of tables")
    events = []
    for idx, table in enumerate(entries):
        path = f"events[{idx}]"
        if not isinstance(table, dict):
            raise _fail(path, "expected a table")
        _check_unknown(table, {"time", "bus", "scale", "power"}, path)
        time = _require(table, "time", float, path)
        if not 0.0 < time < horizon:
            raise _fail(f"{path}.time", f"must lie strictly inside (0, {horizon})")
        steps = time / step
        if abs(steps - round(steps)) > 1e-9 * max(1.0, abs(steps)):
            raise _fail(f"{path}.time", f"must fall on the integration grid (step {step})")
        bus = _bus_index(_require(table, "bus", int, path), network.buses, f"{path}.bus")
        if bus < network.generators:
            raise _fail(f"{path}.bus", "events must target a load bus")
        has_scale = "scale" in table
        has_power = "power" in table
        if has_scale == has_power:
            raise _fail(path, "exactly one of 'scale' or 'power' is required")
        scale = _require(table, "scale", float, path) if has_scale else None
        power = _require(table, "power", float, path) if has_power else None
        events.append(LoadEvent(time=float(time), bus=bus, scale=scale, power=power))
    events.sort(key=lambda e: e.time)
    return tuple(events)


def _parse_controller(table, network: NetworkSpec, path: str = "controller") -> ControllerSpec:
    if table is None:
        return ControllerSpec()
    if not isinstance(table, dict):
        raise _fail(path, "expected a table")
    _check_unknown(table, {"enabled", "cost", "communication", "initial_state"}, path)
    enabled = table.get("enabled", False)
    if not isinstance(enabled, bool):
        raise _fail(f"{path}.enabled", "expected a boolean")
    cost = None
    if "cost" in table:
        cost = _float_tuple(table["cost"], network.generators, f"{path}.cost")
        if any(c <= 0.0 for c in cost):
            raise _fail(f"{path}.cost", "entries must be positive")
    communication = []
    for idx, pair in enumerate(table.get("communication", [])):
        pair_path = f"{path}.communication[{idx}]"
        if not isinstance(pair, list) or len(pair) != 2:
            raise _fail(pair_path, "expected [generator, generator]")
        a = _bus_index(pair[0], network.generators, f"{pair_path}[0]")
        b = _bus_index(pair[1], network.generators, f"{pair_path}[1]")
        communication.append((a, b))
    initial_state = table.get("initial_state", "zero")
    if initial_state not in ("zero", "equilibrium"):
        raise _fail(f"{path}.initial_state", "expected 'zero' or 'equilibrium'")
    if enabled:
        if cost is None:
            raise _fail(f"{path}.cost", "required when the controller is enabled")
        if not communication and network.generators > 1:
            raise _fail(f"{path}.communication", "required when the controller is enabled")
    return ControllerSpec(
        enabled=enabled,
        cost=cost,
        communication=tuple(communication),
        initial_state=initial_state,
    )


def _parse_integrator(table, path: str = "integrator") -> IntegratorConfig:
    if table is None:
        return IntegratorConfig()
    if not isinstance(table, dict):
        raise _fail(path, "expected a table")
    _check_unknown(table, {"step", "horizon", "method", "record_every"}, path)
    step = _typed(table.get("step", 1e-3), "step", float, path)
    horizon = _typed(table.get("horizon", 10.0), "horizon", float, path)
    method = _typed(table.get("method", "rk4"), "method", str, path)
    record_every = _typed(table.get("record_every", 1), "record_every", int, path)
    try:
        return IntegratorConfig(
            step=float(step), horizon=float(horizon), method=method, record_every=record_every
        )
    except ValueError as exc:
        raise _fail(path, str(exc)) from exc


def _parse_output(table, path: str = "output") -> OutputSpec:
    if table is None:
        return OutputSpec()
    if not isinstance(table, dict):
        raise _fail(path, "expected a table")
    _check_unknown(table, {"csv", "figures"}, path)
    csv = table.get("csv")
    if csv is not None and not isinstance(csv, str):
        raise _fail(f"{path}.csv", "expected a string path")
    figures = table.get("figures", [])
    if not isinstance(figures, list) or not all(isinstance(f, str) for f in figures):
        raise _fail(f"{path}.figures", "expected an array of channel names")
    return OutputSpec(csv=csv, figures=tuple(figures))


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"syntax error: {exc}") from exc
    _check_unknown(
        raw,
        {"format_version", "name", "network", "initial", "events", "controller", "integrator", "output"},
        "scenario",
    )
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise ScenarioError(
            f"format_version: expected {FORMAT_VERSION}, got {version!r}"
        )
    name = raw.get("name", "scenario")
    if not isinstance(name, str):
        raise ScenarioError("name: expected a string")
    if "network" not in raw:
        raise ScenarioError("network: missing required table")
    network = _parse_network(raw["network"])
    integrator = _parse_integrator(raw.get("integrator"))
    initial = _parse_initial(raw.get("initial"), network)
    events = _parse_events(raw.get("events"), network, integrator.horizon, integrator.step)
    controller = _parse_controller(raw.get("controller"), network)
    output = _parse_output(raw.get("output"))
    return Scenario(
        name=name,
        network=network,
        initial=initial,
        events=events,
        controller=controller,
        integrator=integrator,
        output=output,
    )


def load_scenario(path) -> Scenario:
    """Read and parse a scenario file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        return parse_scenario(text)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int,)):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value) or math.isnan(value):
            raise ValueError("cannot serialize non-finite numbers")
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def format_scenario(scenario: Scenario) -> str:
    """Serialize a scenario so that parsing it back gives an equal value."""
    net = scenario.network
    lines = [
        f"format_version = {scenario.format_version}",
        f"name = {_toml_value(scenario.name)}",
        "",
        "[network]",
        f"buses = {net.buses}",
        f"generators = {net.generators}",
        f"nominal_frequency_hz = {_toml_value(net.nominal_frequency_hz)}",
        "lines = "
        + _toml_value([[l.tail + 1, l.head + 1, l.reactance] for l in net.lines]),
        f"inertia = {_toml_value(net.inertia)}",
        f"damping = {_toml_value(net.damping)}",
        f"voltage = {_toml_value(net.voltage)}",
        f"load_power = {_toml_value(net.load_power)}",
        "",
        "[initial]",
        f"mode = {_toml_value(scenario.initial.mode)}",
    ]
    if scenario.initial.mode == "state":
        lines.append(f"theta = {_toml_value(scenario.initial.theta)}")
        lines.append(f"omega = {_toml_value(scenario.initial.omega)}")
    for event in scenario.events:
        lines.extend(
            [
                "",
                "[[events]]",
                f"time = {_toml_value(event.time)}",
                f"bus = {event.bus + 1}",
            ]
        )
        if event.scale is not None:
            lines.append(f"scale = {_toml_value(event.scale)}")
        else:
            lines.append(f"power = {_toml_value(event.power)}")
    ctrl = scenario.controller
    lines.extend(["", "[controller]", f"enabled = {_toml_value(ctrl.enabled)}"])
    if ctrl.cost is not None:
        lines.append(f"cost = {_toml_value(ctrl.cost)}")
    if ctrl.communication:
        lines.append(
            "communication = "
            + _toml_value([[a + 1, b + 1] for a, b in ctrl.communication])
        )
    lines.append(f"initial_state = {_toml_value(ctrl.initial_state)}")
    cfg = scenario.integrator
    lines.extend(
        [
            "",
            "[integrator]",
            f"step = {_toml_value(cfg.step)}",
            f"horizon = {_toml_value(cfg.horizon)}",
            f"method = {_toml_value(cfg.method)}",
            f"record_every = {cfg.record_every}",
        ]
    )
    out = scenario.output
    if out.csv is not None or out.figures:
        lines.extend(["", "[output]"])
        if out.csv is not None:
            lines.append(f"csv = {_toml_value(out.csv)}")
        if out.figures:
            lines.append(f"figures = {_toml_value(list(out.figures))}")
    return "\n".join(lines) + "\n"


def build_network(network: NetworkSpec) -> NetworkParameters:
    """Instantiate the model parameters for a scenario network."""
    try:
        graph = UndirectedGraph(
            network.buses, tuple((l.tail, l.head) for l in network.lines)
        )
        return NetworkParameters(
            graph,
            network.generators,
            network.inertia,
            network.damping,
            tuple(l.reactance for l in network.lines),
            network.voltage,
            network.load_power,
            network.nominal_frequency_hz,
        )
    except ValueError as exc:
        raise ScenarioError(f"network: {exc}") from exc


def builtin_case6() -> Scenario:
    """Built-in six-bus case study: three generators feeding three loads.

    A 20 percent load step hits bus 4 at t = 4 s while the averaging
    controller restores nominal frequency and shares the increase at
    marginal costs proportional to 1 : 2 : 3.
    """
    network = NetworkSpec(
        buses=6,
        generators=3,
        lines=(
            LineSpec(0, 1, 0.25),
            LineSpec(0, 3, 0.21),
            LineSpec(0, 4, 0.32),
            LineSpec(1, 2, 0.26),
            LineSpec(1, 3, 0.13),
            LineSpec(1, 4, 0.33),
            LineSpec(1, 5, 0.22),
            LineSpec(2, 4, 0.31),
            LineSpec(2, 5, 0.10),
            LineSpec(3, 4, 0.50),
            LineSpec(4, 5, 0.33),
        ),
        inertia=(4.62, 4.17, 5.10),
        damping=(1.41, 1.28, 1.72),
        voltage=(1.0,) * 6,
        load_power=(-0.6, -0.7, -0.5),
        nominal_frequency_hz=50.0,
    )
    return Scenario(
        name="six-bus-case-study",
        network=network,
        initial=InitialSpec(),
        events=(LoadEvent(time=4.0, bus=3, scale=1.2),),
        controller=ControllerSpec(
            enabled=True,
            cost=(0.4, 0.2, 0.4 / 3),
            communication=((0, 1), (1, 2)),
            initial_state="equilibrium",
        ),
        integrator=IntegratorConfig(step=1e-3, horizon=30.0, record_every=1),
        output=OutputSpec(csv="case6.csv", figures=("frequency_hz", "injection")),
    )


def bundled_case6_path():
    """Path-like handle to the bundled six-bus scenario file."""
    return resources.files("gridreduce.data").joinpath("case6.toml")
