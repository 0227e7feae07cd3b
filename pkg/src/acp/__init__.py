"""Age Control Protocol.

A source sends status updates to a monitor over unreliable datagrams and
adapts its send rate so that the monitor's view stays fresh: the controller
minimizes the time-average age of the freshest update the monitor holds,
without knowing anything about the network in between.

The package splits into layers that can be used independently:

* ``acp.sample_path``: source-side reconstruction of the age and backlog
  processes from send and ACK events.
* ``acp.control``: the epoch decision rule and rate mapping.
* ``acp.wire``: the 16-byte datagram header codec.
* ``acp.endpoint``: event-driven source and monitor state machines,
  independent of any particular clock or socket.
* ``acp.netsim``: a deterministic discrete-event network simulator that can
  host the endpoints under virtual time.
* ``acp.analytics``: closed-form M/M/1 age expressions used as ground truth.
* ``acp.cli``: command line front end (``acp sim-sweep``, ``acp source``, ...).
"""

__version__ = "0.1.0"
