"""Epoch decision rule and rate mapping.

Once per epoch the source looks at how its time-average backlog and age
moved relative to the previous epoch (b_k packets, delta_k seconds) and
picks one of three actions:

* INC: ask for kappa more packets of backlog over the next epoch,
* DEC: ask for kappa fewer,
* MDEC(gamma): multiplicatively drain, targeting -(1 - 2**-gamma) of the
  current average backlog; gamma grows while consecutive drains keep
  failing to shrink the backlog fast enough.

The target b* converts to a send rate via lambda = 1/Z + b*/tau, where Z is
the smoothed inter-delivery estimate and tau = min(RTT, Z) is the feedback
timescale. All functions here are pure; the caller owns the state value.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .errors import EstimatorNotReadyError


class ActionKind(enum.Enum):
    INC = "INC"
    DEC = "DEC"
    MDEC = "MDEC"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    gamma: int | None = None  # only MDEC carries a depth

    def __post_init__(self):
        if self.kind is ActionKind.MDEC:
            if self.gamma is None or self.gamma < 1:
                raise ValueError("MDEC requires gamma >= 1")
        elif self.gamma is not None:
            raise ValueError(f"{self.kind.value} takes no gamma")

    @property
    def label(self) -> str:
        if self.kind is ActionKind.MDEC:
            return f"MDEC({self.gamma})"
        return self.kind.value


@dataclass(frozen=True)
class ControlConfig:
    kappa: float = 0.25  # additive step, packets
    lambda_min: float = 0.1  # updates/s
    lambda_max: float = 1e4  # updates/s
    epoch_multiplier: int = 10  # epoch length in units of tau
    gamma_cap: int = 30  # MDEC saturates here; 2**-30 is already noise
    # The drain guard |b_k| < 0.5*|reference| compares against the previous
    # commanded target by default; the alternative reading (previous
    # realized backlog change) is available but not the documented default.
    guard_uses_realized_change: bool = False

    def __post_init__(self):
        if not 0 < self.lambda_min <= self.lambda_max:
            raise ValueError("need 0 < lambda_min <= lambda_max")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.epoch_multiplier < 1:
            raise ValueError("epoch_multiplier must be >= 1")
        if self.gamma_cap < 1:
            raise ValueError("gamma_cap must be >= 1")

    def clamp(self, rate: float) -> float:
        return min(max(rate, self.lambda_min), self.lambda_max)


@dataclass(frozen=True)
class ControlState:
    """Controller memory carried across epochs."""

    lam: float  # current rate lambda_k, updates/s
    flag: bool = False
    gamma: int = 0
    prev_target: float = 0.0  # b* commanded at the previous epoch, packets
    prev_change: float = 0.0  # realized backlog change at the previous epoch
    epoch_index: int = 1


@dataclass(frozen=True)
class Decision:
    action: Action
    target: float  # b*_{k+1}, packets


def decide(
    state: ControlState,
    b_k: float,
    delta_k: float,
    avg_backlog_k: float,
    config: ControlConfig,
) -> tuple[ControlState, Decision]:
    """One step of the per-epoch action chain.

    Branches on the signs of b_k and delta_k; zero values fall through to
    the final branch because every test is a strict inequality. Total over
    all real inputs, pure, and deterministic.
    """
    flag = state.flag
    gamma = state.gamma

    if b_k > 0 and delta_k > 0:
        # Backlog and age both grew: sending too fast. First offense is an
        # additive step; a repeat escalates to multiplicative drain.
        if flag:
            gamma = min(gamma + 1, config.gamma_cap)
            action = Action(ActionKind.MDEC, gamma)
        else:
            action = Action(ActionKind.DEC)
        flag = True
    elif b_k > 0 and delta_k < 0:
        # Age improved but backlog still grew. If a drain is in progress
        # and the backlog barely moved relative to what was commanded,
        # keep draining harder; otherwise probe upward again.
        guard_ref = state.prev_change if config.guard_uses_realized_change else state.prev_target
        if flag and abs(b_k) < 0.5 * abs(guard_ref):
            gamma = min(gamma + 1, config.gamma_cap)
            action = Action(ActionKind.MDEC, gamma)
        else:
            action = Action(ActionKind.INC)
            flag = False
            gamma = 0
    elif b_k < 0 and delta_k > 0:
        # Backlog fell yet age rose: starving the monitor.
        action = Action(ActionKind.INC)
        flag = False
        gamma = 0
    else:
        # Remaining sign patterns, including exact zeros.
        if flag and gamma > 0:
            action = Action(ActionKind.MDEC, gamma)
        else:
            action = Action(ActionKind.DEC)
            flag = False
            gamma = 0

    if action.kind is ActionKind.INC:
        target = config.kappa
    elif action.kind is ActionKind.DEC:
        target = -config.kappa
    else:
        target = -(1.0 - 2.0 ** -action.gamma) * avg_backlog_k

    new_state = replace(
        state,
        flag=flag,
        gamma=gamma,
        prev_target=target,
        prev_change=b_k,
        epoch_index=state.epoch_index + 1,
    )
    return new_state, Decision(action=action, target=target)


def target_to_rate(
    z_bar: float, tau: float, target: float, config: ControlConfig
) -> float:
    """Map a backlog-change target to next epoch's send rate.

    rate = 1/z_bar + target/tau, clamped into [lambda_min, lambda_max].
    """
    if z_bar <= 0 or tau <= 0:
        raise EstimatorNotReadyError(
            f"need positive estimates, got z_bar={z_bar}, tau={tau}"
        )
    return config.clamp(1.0 / z_bar + target / tau)


def epoch_period(rtt_bar: float, z_bar: float, multiplier: int = 10) -> float:
    """Epoch length: multiplier times the feedback timescale min(RTT, Z)."""
    if rtt_bar <= 0 or z_bar <= 0:
        raise EstimatorNotReadyError(
            f"need positive estimates, got rtt_bar={rtt_bar}, z_bar={z_bar}"
        )
    if multiplier < 1:
        raise ValueError(f"multiplier must be >= 1, got {multiplier}")
    return multiplier * min(rtt_bar, z_bar)


def lazy_rate(rtt_bar: float, config: ControlConfig) -> float:
    """The no-feedback baseline: one update per smoothed round trip."""
    if rtt_bar <= 0:
        raise EstimatorNotReadyError(f"need positive rtt_bar, got {rtt_bar}")
    return config.clamp(1.0 / rtt_bar)
