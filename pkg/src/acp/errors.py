"""Exception hierarchy.

Everything raised on purpose by this package derives from AcpError so
callers can catch one base class at the CLI boundary.
"""


class AcpError(Exception):
    """Base class for all errors raised by this package."""


class SequencingError(AcpError):
    """An event violated send/ACK ordering rules (stale sequence, time going
    backwards relative to already-recorded events)."""


class ClockAnomalyError(AcpError):
    """An ACK arrived before the timestamp it echoes; the clock is broken or
    the peer echoed garbage."""


class DegenerateIntervalError(AcpError):
    """A time average was requested over an empty or negative interval."""


class EstimatorNotReadyError(AcpError):
    """A rate or period computation needs an estimator that has not seen a
    sample yet (or saw only non-positive garbage)."""


class ConnectionFailedError(AcpError):
    """The initialization phase finished without a single acknowledged probe."""


class MalformedPacketError(AcpError):
    """A datagram could not be parsed: short buffer, unknown version or kind,
    or a length field that disagrees with the actual payload."""


class EncodingError(AcpError):
    """A header field is out of range for the wire format."""


class InstabilityError(AcpError):
    """A simulated queue exceeded the configured backlog bound; the offered
    load is unsustainable for the topology."""

    def __init__(self, node_id: str, backlog: int, time_us: int):
        super().__init__(
            f"queue at node {node_id} reached {backlog} packets "
            f"at t={time_us / 1e6:.3f}s; offered load looks unstable"
        )
        self.node_id = node_id
        self.backlog = backlog
        self.time_us = time_us


class ConfigError(AcpError):
    """An experiment configuration is missing, malformed, or inconsistent."""


class SchemaError(AcpError):
    """A CSV input does not carry the schema tag the reader expects."""
