"""Deterministic discrete-event simulation of verifiers on a ring road and
mobile members running full authentication sessions over a lossy,
queue-limited channel.

The channel model is explicit and parameterized (the reference experiment's
radio stack is not recoverable); defaults are calibrated so average delays
land in the same decade as the reference readings. Trends, not absolute
values, are the contract.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from typing import Optional

from . import keymgmt, protocol, zkp
from .envelopes import EciesSeal, StubEnvelope, StubSeal, generate_seal_keypair
from .numtheory import Rng, generate_blum_modulus
from .protocol import LogicalClock, Obu, Outcome, Rsu, SessionConfig

DEFAULT_GRID_LOADS = (5, 10, 15, 20, 25, 30, 35, 40)
DEFAULT_GRID_SPEEDS = (14.0, 17.0, 20.0, 22.0, 25.0, 27.0)
ALPHA_PACKET_BYTES = {2: 50, 4: 100, 5: 125}


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True)
class ChannelParams:
    base_loss: float = 0.002
    per_byte_service_s: float = 2.0e-5
    propagation_mps: float = 3.0e8
    queue_capacity: int = 50
    occupancy_loss_coeff: float = 0.05


@dataclass(frozen=True)
class SimConfig:
    rsu_count: int = 10
    rsu_spacing_m: float = 900.0
    comm_range_m: float = 500.0
    obus_per_rsu: int = 10
    speed_mps: float = 20.0
    alpha: int = 2
    duration_s: float = 40.0
    session_interval_s: float = 8.0
    channel: ChannelParams = field(default_factory=ChannelParams)
    # protocol parameters for in-sim sessions
    k: int = 2
    h: int = 2
    mu: int = 5
    n: int = 8
    modulus_bits: int = 32
    keep_transcripts: bool = False

    def __post_init__(self):
        if self.rsu_spacing_m <= 0 or self.comm_range_m <= 0:
            raise InvalidConfig("spacing and range must be positive")
        if self.alpha not in ALPHA_PACKET_BYTES:
            raise InvalidConfig(f"alpha={self.alpha} has no packet-size mapping")
        if self.alpha > self.mu:
            raise InvalidConfig("alpha must not exceed mu")


@dataclass
class SimMetrics:
    alpha: int
    load: int
    speed: float
    avg_delay_s: float
    packet_loss_ratio: float
    sessions_attempted: int
    sessions_accepted: int
    sessions_rejected: int
    sessions_lost: int
    packets_sent: int
    packets_lost: int
    transcripts: list = field(default_factory=list)

    def conservation_holds(self) -> bool:
        return self.sessions_attempted == (
            self.sessions_accepted + self.sessions_rejected + self.sessions_lost
        )


@dataclass
class _RsuNode:
    index: int
    position: float
    endpoint: Rsu
    busy_until: float = 0.0
    active_sessions: int = 0


@dataclass
class _ObuNode:
    index: int
    position0: float
    endpoint: Obu
    busy: bool = False


class _Sim:
    """One run: a heap of (time, seq, kind, payload) events."""

    def __init__(self, config: SimConfig, seed: int):
        self.config = config
        self.rng = Rng(seed)
        self.clock = LogicalClock()
        self.line_length = config.rsu_count * config.rsu_spacing_m
        self.events: list = []
        self._seq = 0
        self.metrics_packets_sent = 0
        self.metrics_packets_lost = 0
        self.delays: list[float] = []
        self.attempted = 0
        self.accepted = 0
        self.rejected = 0
        self.lost = 0
        self.transcripts: list = []
        # expected transmitters inside one verifier's range: member density
        # times covered length; this is what couples loss to offered load
        total_obus = config.rsu_count * config.obus_per_rsu
        covered = min(2 * config.comm_range_m, self.line_length)
        self.contention = total_obus * covered / self.line_length
        self._build_world()

    def _build_world(self):
        cfg = self.config
        modulus = generate_blum_modulus(cfg.modulus_bits, self.rng.randbits(63))
        kdc = keymgmt.Kdc(seed=self.rng.randbits(63))
        groups = keymgmt.form_groups(1, cfg.n, cfg.k, modulus, self.rng)
        # deterministic stub envelopes keep per-run crypto costs down while
        # the proof arithmetic stays real
        sym, seal = StubEnvelope(), StubSeal()
        self.rsus: list[_RsuNode] = []
        for i in range(cfg.rsu_count):
            priv, _pub = generate_seal_keypair(self.rng)
            cert = kdc.issue_certificate(i, priv)  # stub seal: pub == priv bytes
            cred = keymgmt.provision_rsu(groups, i, cert, priv, modulus)
            endpoint = Rsu(
                cred, self.rng.split(), clock=self.clock, sym=sym, seal=seal
            )
            self.rsus.append(
                _RsuNode(index=i, position=(i + 0.5) * cfg.rsu_spacing_m, endpoint=endpoint)
            )
        root = kdc.root_public_key()
        self.obus: list[_ObuNode] = []
        total_obus = cfg.rsu_count * cfg.obus_per_rsu
        for j in range(total_obus):
            cred = keymgmt.provision_obu(kdc, groups[0], j, iv=j + 1, modulus=modulus)
            endpoint = Obu(cred, root, self.rng.split(), clock=self.clock, sym=sym, seal=seal)
            pos = self.rng.random() * self.line_length
            self.obus.append(_ObuNode(index=j, position0=pos, endpoint=endpoint))
            phase = self.rng.random() * cfg.session_interval_s
            self.push(phase, "attempt", j)

    # ---------------------------------------------------------------- events

    def push(self, time: float, kind: str, payload) -> None:
        heapq.heappush(self.events, (time, self._seq, kind, payload))
        self._seq += 1

    def obu_position(self, node: _ObuNode, t: float) -> float:
        return (node.position0 + self.config.speed_mps * t) % self.line_length

    def ring_distance(self, a: float, b: float) -> float:
        d = abs(a - b) % self.line_length
        return min(d, self.line_length - d)

    def rsu_in_range(self, node: _ObuNode, t: float) -> Optional[_RsuNode]:
        pos = self.obu_position(node, t)
        best, best_d = None, None
        for rsu in self.rsus:
            d = self.ring_distance(pos, rsu.position)
            if d <= self.config.comm_range_m and (best_d is None or d < best_d):
                best, best_d = rsu, d
        return best

    def run(self) -> SimMetrics:
        cfg = self.config
        while self.events:
            t, _seq, kind, payload = heapq.heappop(self.events)
            if kind == "attempt":
                # stop opening sessions at the horizon; in-flight ones drain
                if t <= cfg.duration_s:
                    self._handle_attempt(t, payload)
            elif kind == "message":
                self._handle_message(t, payload)
        total = self.metrics_packets_sent
        avg_delay = sum(self.delays) / len(self.delays) if self.delays else 0.0
        return SimMetrics(
            alpha=cfg.alpha,
            load=cfg.obus_per_rsu,
            speed=cfg.speed_mps,
            avg_delay_s=avg_delay,
            packet_loss_ratio=self.metrics_packets_lost / total if total else 0.0,
            sessions_attempted=self.attempted,
            sessions_accepted=self.accepted,
            sessions_rejected=self.rejected,
            sessions_lost=self.lost,
            packets_sent=total,
            packets_lost=self.metrics_packets_lost,
            transcripts=self.transcripts,
        )

    def _handle_attempt(self, t: float, obu_index: int) -> None:
        cfg = self.config
        node = self.obus[obu_index]
        next_attempt = t + cfg.session_interval_s
        if next_attempt <= cfg.duration_s:
            self.push(next_attempt, "attempt", obu_index)
        if node.busy:
            return
        rsu = self.rsu_in_range(node, t)
        if rsu is None:
            return
        node.busy = True
        rsu.active_sessions += 1
        self.attempted += 1
        # request + sets + membership + mu bundle items + closing reply
        n_messages = 4 + cfg.mu
        self.push(t, "message", (obu_index, rsu.index, 0, n_messages))

    def _handle_message(self, t: float, payload) -> None:
        cfg = self.config
        obu_index, rsu_index, msg_idx, n_messages = payload
        node = self.obus[obu_index]
        rsu = self.rsus[rsu_index]
        pos = self.obu_position(node, t)
        dist = self.ring_distance(pos, rsu.position)
        if dist > cfg.comm_range_m:
            # moved out of range mid-session: remaining packets are lost
            self.metrics_packets_sent += n_messages - msg_idx
            self.metrics_packets_lost += n_messages - msg_idx
            self._finish_session(node, rsu, lost=True)
            return
        self.metrics_packets_sent += 1
        occupancy = min(
            1.0, (self.contention + rsu.active_sessions) / cfg.channel.queue_capacity
        )
        loss_p = min(1.0, cfg.channel.base_loss + cfg.channel.occupancy_loss_coeff * occupancy)
        if self.rng.random() < loss_p:
            self.metrics_packets_lost += 1
            self._finish_session(node, rsu, lost=True)
            return
        bytes_ = ALPHA_PACKET_BYTES[cfg.alpha]
        service = bytes_ * cfg.channel.per_byte_service_s
        wait = max(0.0, rsu.busy_until - t)
        rsu.busy_until = t + wait + service
        delay = wait + service + dist / cfg.channel.propagation_mps
        self.delays.append(delay)
        delivered_at = t + delay
        if msg_idx + 1 < n_messages:
            self.push(delivered_at, "message", (obu_index, rsu.index, msg_idx + 1, n_messages))
        else:
            self._complete_session(delivered_at, node, rsu)

    def _complete_session(self, t: float, node: _ObuNode, rsu: _RsuNode) -> None:
        cfg = self.config
        session_cfg = SessionConfig(
            alpha=cfg.alpha,
            mu=cfg.mu,
            k=cfg.k,
            h=cfg.h,
            n=cfg.n,
            serv_id="INFO",
            freshness_window=max(protocol.DEFAULT_FRESHNESS_WINDOW, cfg.duration_s),
        )
        result, transcript = protocol.run_full_session(
            node.endpoint, rsu.endpoint, session_cfg
        )
        if result.outcome is Outcome.ACCEPTED:
            self.accepted += 1
        else:
            self.rejected += 1
        if cfg.keep_transcripts:
            self.transcripts.append((node.index, transcript))
        self._finish_session(node, rsu, lost=False)

    def _finish_session(self, node: _ObuNode, rsu: _RsuNode, lost: bool) -> None:
        node.busy = False
        rsu.active_sessions -= 1
        if lost:
            self.lost += 1


def run_sim(config: SimConfig, seed: int) -> SimMetrics:
    """Deterministic for (config, seed)."""
    return _Sim(config, seed).run()


def sweep(
    config: SimConfig,
    dimension: str,
    values,
    seed: int,
    alphas=(2, 4, 5),
) -> list[SimMetrics]:
    """One metrics row per (alpha, value); one panel per alpha in the reference layout."""
    if dimension not in ("load", "speed"):
        raise InvalidConfig(f"unknown sweep dimension {dimension!r}")
    rows = []
    for alpha in alphas:
        for value in values:
            if dimension == "load":
                cfg = replace(config, alpha=alpha, obus_per_rsu=int(value))
            else:
                cfg = replace(config, alpha=alpha, speed_mps=float(value))
            rows.append(run_sim(cfg, seed))
    return rows


def sweep_csv(rows: list[SimMetrics], dimension: str) -> str:
    lines = ["alpha,sweep_value,avg_delay_s,loss_ratio,attempted,accepted"]
    for r in rows:
        value = r.load if dimension == "load" else r.speed
        lines.append(
            f"{r.alpha},{value},{r.avg_delay_s:.9f},{r.packet_loss_ratio:.9f},"
            f"{r.sessions_attempted},{r.sessions_accepted}"
        )
    return "\n".join(lines) + "\n"


def reverify_transcript(transcript, obu_credential, session_config: SessionConfig) -> bool:
    """Offline protocol-fidelity check: the logged verifier proofs must
    re-verify against the member's witnesses."""
    m = obu_credential.modulus
    if len(transcript.bundle_observations) != session_config.mu:
        return False
    for obs in transcript.bundle_observations:
        witnesses = [obu_credential.pool_witnesses[i - 1] for i in obs.secret_ids]
        for rd in obs.rounds:
            if not zkp.verify_round(rd.w, rd.challenge, rd.y, witnesses, m):
                return False
    return True
