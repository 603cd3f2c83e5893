"""Scenario description for the session simulator."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Union

from ..endpoints import PEER_TO_PEER, PER_CLIENT_RELAY, SHARED_RELAY, TOPOLOGY_KINDS
from ..errors import ConfigInvalid

HOST = "host"
PARTICIPANT = "participant"
DETECTOR_QUIESCENCE = 1.0
SMALL_PACKET_LIMIT = 200

PLATFORM_MEDIA_PORTS = {"zoom": 8801, "webex": 9000, "meet": 19305}


@dataclass(frozen=True)
class Client:
    addr: str
    role: str = PARTICIPANT


@dataclass(frozen=True)
class Burst:
    count: int = 30
    payload_len: int = 1000
    gap: float = 0.001


@dataclass(frozen=True)
class Background:
    payload_len: int = 120
    rate: float = 200.0


@dataclass(frozen=True)
class Feedback:
    """Small upstream control packets every receiving client sends to its endpoint."""

    payload_len: int = 60
    rate: float = 10.0


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    duration: float = 120.0
    topology: str = SHARED_RELAY
    clients: tuple[Client, ...] = ()
    relay_assignment: Union[str, dict, None] = None
    path_delays: dict = field(default_factory=dict)
    default_delay: float = 0.010
    flash_period: Optional[float] = 2.0
    flash_phase: float = 1.0
    flash_burst: Burst = Burst()
    background: Background = Background()
    feedback: Feedback = Feedback()
    offered_rate: float = 0.0
    media_payload_len: int = 1000
    cap: Optional[float] = None
    queue_limit: float = 1.0
    jitter: float = 0.0
    loss: float = 0.0
    media_port: Optional[int] = 8801
    probes: int = 0
    probe_port: int = 443
    start_time: float = 1_620_000_000.0
    snaplen: int = 128

    @property
    def host(self) -> Client:
        return next(c for c in self.clients if c.role == HOST)

    @property
    def receivers(self) -> list[Client]:
        return [c for c in self.clients if c.role != HOST]

    def relay_for(self, addr: str) -> Optional[str]:
        if self.topology == PEER_TO_PEER:
            return None
        if isinstance(self.relay_assignment, str):
            return self.relay_assignment
        return self.relay_assignment[addr]

    @property
    def relays(self) -> list[str]:
        if self.topology == PEER_TO_PEER:
            return []
        return sorted({self.relay_for(c.addr) for c in self.clients})

    def delay(self, a: str, b: str) -> float:
        d = self.path_delays.get((a, b))
        if d is None:
            d = self.path_delays.get((b, a), self.default_delay)
        return d

    def validate(self) -> "SimConfig":
        def bad(msg):
            raise ConfigInvalid(msg)

        if self.topology not in TOPOLOGY_KINDS:
            bad(f"unknown topology {self.topology!r}")
        if self.duration <= 0:
            bad("duration must be positive")
        if len(self.clients) < 2:
            bad("a session needs a host and at least one receiver")
        addrs = [c.addr for c in self.clients]
        if len(set(addrs)) != len(addrs):
            bad("client addresses must be unique")
        if sum(c.role == HOST for c in self.clients) != 1:
            bad("exactly one client must have role 'host'")
        if self.topology == SHARED_RELAY and not isinstance(self.relay_assignment, str):
            bad("shared-relay needs a single relay address")
        if self.topology == PER_CLIENT_RELAY:
            if not isinstance(self.relay_assignment, dict) or set(self.relay_assignment) < set(addrs):
                bad("per-client-relay needs a relay for every client")
        if set(self.relays) & set(addrs):
            bad("relay addresses must not be client addresses")
        if not 0 <= self.loss < 1:
            bad("loss must lie in [0, 1)")
        if self.default_delay < 0 or any(d < 0 for d in self.path_delays.values()):
            bad("delays must be non-negative")
        if self.jitter < 0:
            bad("jitter must be non-negative")
        if self.cap is not None and self.cap <= 0:
            bad("cap must be positive")
        if self.queue_limit <= 0:
            bad("queue_limit must be positive")
        if self.flash_period is not None:
            if self.flash_period <= DETECTOR_QUIESCENCE:
                bad("flash_period must exceed the 1 s detector quiescence")
            b = self.flash_burst
            if b.count < 1 or b.payload_len <= SMALL_PACKET_LIMIT or b.gap < 0:
                bad("flash burst needs >= 1 packet larger than 200 B and a non-negative gap")
            if (b.count - 1) * b.gap >= self.flash_period - DETECTOR_QUIESCENCE:
                bad("flash burst is too long for the flash period")
        if self.background.rate < 0 or self.background.payload_len > SMALL_PACKET_LIMIT:
            bad("background packets must be at most 200 B at a non-negative rate")
        if self.feedback.rate < 0 or self.feedback.payload_len > SMALL_PACKET_LIMIT:
            bad("feedback packets must be at most 200 B at a non-negative rate")
        if self.offered_rate < 0:
            bad("offered_rate must be non-negative")
        if self.probes < 0:
            bad("probes must be non-negative")
        return self

    # --- JSON mapping -------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clients"] = [asdict(c) for c in self.clients]
        d["path_delays"] = [{"src": a, "dst": b, "delay": v} for (a, b), v in sorted(self.path_delays.items())]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        try:
            d["clients"] = tuple(Client(**c) for c in d.get("clients", ()))
            delays = d.get("path_delays", {})
            if isinstance(delays, list):
                delays = {(e["src"], e["dst"]): float(e["delay"]) for e in delays}
            d["path_delays"] = delays
            for key, typ in (("flash_burst", Burst), ("background", Background), ("feedback", Feedback)):
                if isinstance(d.get(key), dict):
                    d[key] = typ(**d[key])
            return cls(**d).validate()
        except (TypeError, KeyError) as exc:
            raise ConfigInvalid(f"bad scenario: {exc}") from exc

    @classmethod
    def build(cls, topology: str = SHARED_RELAY, n_clients: int = 2, seed: int = 0, **kw) -> "SimConfig":
        """Scenario with ``n_clients`` clients (the first is the host) and default relay addresses."""
        clients = tuple(Client(f"10.1.0.{i + 1}", HOST if i == 0 else PARTICIPANT) for i in range(n_clients))
        if "relay_assignment" not in kw:
            if topology == SHARED_RELAY:
                kw["relay_assignment"] = "203.0.113.10"
            elif topology == PER_CLIENT_RELAY:
                kw["relay_assignment"] = {c.addr: f"203.0.113.{20 + i}" for i, c in enumerate(clients)}
        return cls(seed=seed, topology=topology, clients=clients, **kw).validate()

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw).validate()
