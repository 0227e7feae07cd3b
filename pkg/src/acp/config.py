"""Experiment configuration: a TOML file plus key=value overrides.

Every field has a default; unknown keys are rejected with the full dotted
path so typos fail loudly instead of silently running a different
experiment.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .control import ControlConfig
from .errors import ConfigError, DegenerateIntervalError
from .netsim import (
    AcpController,
    Delay,
    FixedRateController,
    LazyController,
    NodeSpec,
    Topology,
)


@dataclass
class TopologyConfig:
    kind: str = "mm1"  # mm1 | tandem | chain_mbps | delay
    mu: float = 1.0  # mm1 service rate (pkts/s)
    mus: list = field(default_factory=lambda: [1.0, 1.0])  # tandem rates
    rates_mbps: list = field(default_factory=lambda: [1.0] * 6)  # chain links
    cross_mbps: float = 0.0  # per-link single-hop cross load (chain only)
    cross_bits: int = 12_000  # cross packet size (chain only)
    delay_s: float = 0.01  # one-way latency (delay kind)
    loss: float = 0.0  # Bernoulli drop probability per forward hop
    update_bits: int = 1000
    ack_bits: int = 128

    def build(self) -> Topology:
        if self.kind == "mm1":
            base = Topology.mm1(self.mu)
        elif self.kind == "tandem":
            base = Topology.tandem(*self.mus)
        elif self.kind == "chain_mbps":
            base = Topology.chain_mbps(
                list(self.rates_mbps), cross_mbps=self.cross_mbps,
                cross_bits=self.cross_bits,
            )
        elif self.kind == "delay":
            d = NodeSpec(Delay(self.delay_s))
            base = Topology(forward=(d,), reverse=(d,))
        else:
            raise ConfigError(
                f"topology.kind: unknown kind {self.kind!r} "
                "(expected mm1, tandem, chain_mbps, or delay)"
            )
        fwd = tuple(
            NodeSpec(n.service, loss_prob=self.loss) for n in base.forward
        ) if self.loss else base.forward
        return Topology(
            forward=fwd,
            reverse=base.reverse,
            cross=base.cross,
            update_bits=self.update_bits,
            ack_bits=self.ack_bits,
        )


@dataclass
class WorkloadConfig:
    kind: str = "poisson"  # poisson | periodic (open-loop sweeps only)

    def validate(self) -> None:
        if self.kind not in ("poisson", "periodic"):
            raise ConfigError(f"workload.kind: unknown kind {self.kind!r}")


@dataclass
class SweepConfig:
    start: float = 0.1
    stop: float = 1.0
    step: float = 0.1
    refine: bool = True  # parabolic vertex around the best grid point
    rerun_factor: float = 4.0  # profile rerun length vs sweep-point length

    def rates(self) -> list:
        if self.step <= 0 or self.stop < self.start:
            raise ConfigError("sweep: need step > 0 and stop >= start")
        out = []
        k = 0
        while True:
            r = round(self.start + k * self.step, 12)
            if r > self.stop + 1e-12:
                break
            out.append(r)
            k += 1
        return out


@dataclass
class ControllerConfig:
    kind: str = "acp"  # acp | lazy | fixed
    kappa: float = 0.25  # additive step, packets per epoch
    alpha: float = 0.125  # EWMA weight for RTT and inter-delivery estimates
    multiplier: float = 10.0  # epoch length in units of min(RTT, Z)
    lambda_min: float = 0.1
    lambda_max: float = 1e4
    rate: float = 1.0  # fixed-rate controller only
    guard_uses_realized_change: bool = False

    def control(self) -> ControlConfig:
        return ControlConfig(
            kappa=self.kappa,
            lambda_min=self.lambda_min,
            lambda_max=self.lambda_max,
            epoch_multiplier=self.multiplier,
            guard_uses_realized_change=self.guard_uses_realized_change,
        )

    def build(self):
        if self.kind == "acp":
            return AcpController(
                kappa=self.kappa,
                alpha=self.alpha,
                epoch_multiplier=self.multiplier,
                lambda_min=self.lambda_min,
                lambda_max=self.lambda_max,
                guard_uses_realized_change=self.guard_uses_realized_change,
            )
        if self.kind == "lazy":
            return LazyController(
                alpha=self.alpha,
                lambda_min=self.lambda_min,
                lambda_max=self.lambda_max,
            )
        if self.kind == "fixed":
            if self.rate <= 0:
                raise ConfigError("controller.rate: must be positive")
            return FixedRateController(rate=self.rate)
        raise ConfigError(
            f"controller.kind: unknown kind {self.kind!r} "
            "(expected acp, lazy, or fixed)"
        )


@dataclass
class RunConfig:
    duration_s: float = 1000.0
    warmup_frac: float = 0.1
    seeds: list = field(default_factory=lambda: [1])
    max_backlog: int = 100_000
    label: str = ""

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise DegenerateIntervalError(
                "run.duration_s: a zero-length run measures nothing"
            )
        if not (0 <= self.warmup_frac < 1):
            raise ConfigError("run.warmup_frac: must lie in [0, 1)")
        if not self.seeds:
            raise ConfigError("run.seeds: need at least one seed")


@dataclass
class NetConfig:
    """Real-transport (UDP) parameters for the source and monitor commands."""

    host: str = "127.0.0.1"
    port: int = 9987
    bind_host: str = "0.0.0.0"
    updates: int = 1000  # source exits after this many data updates
    kappa: float = 1.0  # larger default step suits real links
    payload_len: int = 109
    init_probes: int = 10
    probe_timeout_s: float = 1.0
    linger_s: float = 1.0  # wait for stragglers after the last send
    idle_exit_s: float = 0.0  # monitor exits after this silence (0 = never)


@dataclass
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    run: RunConfig = field(default_factory=RunConfig)
    net: NetConfig = field(default_factory=NetConfig)

    def validate(self) -> "ExperimentConfig":
        self.workload.validate()
        self.run.validate()
        self.topology.build()
        self.controller.build()
        return self


_SECTIONS = {
    "topology": TopologyConfig,
    "workload": WorkloadConfig,
    "sweep": SweepConfig,
    "controller": ControllerConfig,
    "run": RunConfig,
    "net": NetConfig,
}


def _apply_section(obj, data: dict, prefix: str) -> None:
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(
                f"{prefix}.{key}: unknown key "
                f"(known: {', '.join(sorted(known))})"
            )
        current = getattr(obj, key)
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{prefix}.{key}: expected a boolean")
        elif isinstance(current, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{prefix}.{key}: expected a number")
            value = float(value)
        elif isinstance(current, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{prefix}.{key}: expected an integer")
        elif isinstance(current, str):
            if not isinstance(value, str):
                raise ConfigError(f"{prefix}.{key}: expected a string")
        elif isinstance(current, list):
            if not isinstance(value, list):
                raise ConfigError(f"{prefix}.{key}: expected a list")
        setattr(obj, key, value)


def config_from_dict(data: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for section, payload in data.items():
        if section not in _SECTIONS:
            raise ConfigError(
                f"{section}: unknown section "
                f"(known: {', '.join(sorted(_SECTIONS))})"
            )
        if not isinstance(payload, dict):
            raise ConfigError(f"{section}: expected a table of keys")
        _apply_section(getattr(cfg, section), payload, section)
    return cfg.validate()


def load_config(path: str | None, overrides: list[str] = ()) -> ExperimentConfig:
    """Read TOML config (all-defaults when path is None), then apply
    key=value overrides such as ``run.duration_s=200``."""
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}")
    for item in overrides:
        _merge_override(data, item)
    return config_from_dict(data)


def _merge_override(data: dict, item: str) -> None:
    key, sep, raw = item.partition("=")
    if not sep:
        raise ConfigError(f"override {item!r}: expected section.key=value")
    parts = key.strip().split(".")
    if len(parts) != 2:
        raise ConfigError(f"override {item!r}: expected section.key=value")
    section, name = parts
    try:
        # Reuse the TOML value grammar so strings, numbers, booleans and
        # lists all parse the same way they would in the file.
        value = tomllib.loads(f"x = {raw}")["x"]
    except tomllib.TOMLDecodeError:
        value = raw  # bare word: treat as string (acp, poisson, ...)
    data.setdefault(section, {})[name] = value
