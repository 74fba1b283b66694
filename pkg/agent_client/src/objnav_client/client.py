"""Synchronous client for the objnav evaluation wire protocol (version 1).

The protocol is step-locked (strict request/response alternation over
newline-delimited JSON on TCP), so a blocking client is all an agent needs:

    session = connect("127.0.0.1", 7788, agent_name="my-agent")
    metrics = run(session, MyPolicy())

A policy is any object with `act(observation) -> action name`; an optional
`on_reset(goal_category)` hook fires at every episode start. The observation
carries exactly what the server granted — the client adds nothing.
"""
from __future__ import annotations

import json
import socket
from dataclasses import dataclass, field
from typing import Any, Protocol

PROTOCOL_VERSION = 1

ACTION_NAMES = (
    "move-forward",
    "turn-left",
    "turn-right",
    "look-up",
    "look-down",
    "stop",
)

_KNOWN_OBSERVATION_KEYS = {"gps", "compass", "depth", "collided", "step"}


class ClientError(Exception):
    """Connection, protocol, or policy failures surfaced by the SDK."""


class ProtocolMismatch(ClientError):
    """The server speaks a protocol version this SDK does not."""


class ServerRefused(ClientError):
    """The server rejected the session during the handshake."""


@dataclass(frozen=True)
class ClientObservation:
    """One sensor packet, mirroring the wire exactly.

    Fields the server did not grant stay None; message keys this SDK does not
    know are preserved under `extra` and otherwise ignored.
    """

    gps: tuple[float, float] | None
    compass: float | None
    depth: tuple[float, ...] | None
    collided: bool
    step: int
    goal_category: str
    extra: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_wire(cls, payload: dict[str, Any], goal_category: str) -> "ClientObservation":
        gps = payload.get("gps")
        depth = payload.get("depth")
        return cls(
            gps=tuple(gps) if gps is not None else None,
            compass=payload.get("compass"),
            depth=tuple(depth) if depth is not None else None,
            collided=bool(payload.get("collided", False)),
            step=int(payload.get("step", 0)),
            goal_category=goal_category,
            extra={k: v for k, v in payload.items() if k not in _KNOWN_OBSERVATION_KEYS},
        )


class Policy(Protocol):
    def act(self, observation: ClientObservation) -> str: ...


@dataclass(frozen=True)
class EpisodeSummary:
    episode_id: str
    success: bool
    spl: float
    steps: int


class Session:
    """One evaluation session over an established connection."""

    def __init__(self, sock: socket.socket, handshake: dict[str, Any], agent_name: str):
        self._sock = sock
        self._reader = sock.makefile("r", encoding="utf-8", newline="\n")
        self._handshake = handshake
        self.agent_name = agent_name
        self.episode_summaries: list[EpisodeSummary] = []

    @property
    def episode_count(self) -> int:
        return int(self._handshake.get("episode_count", 0))

    @property
    def sensors(self) -> tuple[str, ...]:
        return tuple(self._handshake.get("sensors", ()))

    def send(self, message: dict[str, Any]) -> None:
        try:
            self._sock.sendall((json.dumps(message) + "\n").encode("utf-8"))
        except OSError as exc:
            raise ClientError(f"connection lost while sending: {exc}") from exc

    def send_action(self, name: str) -> None:
        if name not in ACTION_NAMES:
            raise ClientError(
                f"policy emitted unknown action {name!r}; must be one of {ACTION_NAMES}"
            )
        self.send({"type": "action", "name": name})

    def receive(self) -> dict[str, Any]:
        try:
            line = self._reader.readline()
        except OSError as exc:
            raise ClientError(f"connection lost while reading: {exc}") from exc
        if line == "":
            raise ClientError("server closed the connection")
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ClientError(f"server sent invalid JSON: {exc.msg}") from exc
        if not isinstance(message, dict):
            raise ClientError("server message is not an object")
        return message

    def close(self) -> None:
        for closer in (self._reader.close, self._sock.close):
            try:
                closer()
            except OSError:
                pass

    def __enter__(self) -> "Session":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def connect(
    host: str, port: int, agent_name: str = "agent", timeout: float = 60.0
) -> Session:
    """Open a session: TCP connect, validate the handshake, and say hello."""
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise ClientError(f"cannot connect to {host}:{port}: {exc}") from exc
    sock.settimeout(timeout)
    session = Session(sock, handshake={}, agent_name=agent_name)
    handshake = session.receive()
    if handshake.get("type") == "error":
        session.close()
        raise ServerRefused(
            f"server refused the session: {handshake.get('code')} "
            f"({handshake.get('detail')})"
        )
    if handshake.get("type") != "handshake":
        session.close()
        raise ClientError(f"expected a handshake, got {handshake.get('type')!r}")
    if handshake.get("protocol_version") != PROTOCOL_VERSION:
        session.close()
        raise ProtocolMismatch(
            f"server speaks protocol {handshake.get('protocol_version')!r}, "
            f"this client speaks {PROTOCOL_VERSION}"
        )
    session._handshake = handshake
    session.send(
        {
            "type": "hello",
            "protocol_version": PROTOCOL_VERSION,
            "agent_name": agent_name,
        }
    )
    return session


def run(session: Session, policy: Policy) -> dict[str, Any]:
    """Drive the request/response loop to session_end; returns the server's
    final metrics verbatim.

    A policy exception sends `stop` for the current episode and is re-raised
    once that episode's `episode_end` arrives; server `error` replies for a
    message this client sent raise immediately (the SDK never emits them).
    """
    goal_category = ""
    pending_exception: BaseException | None = None
    while True:
        message = session.receive()
        mtype = message.get("type")
        if mtype == "reset":
            goal_category = str(message.get("goal_category", ""))
            pending_exception = None
            on_reset = getattr(policy, "on_reset", None)
            try:
                if on_reset is not None:
                    on_reset(goal_category)
                observation = ClientObservation.from_wire(
                    message.get("observation", {}), goal_category
                )
                session.send_action(policy.act(observation))
            except ClientError:
                raise
            except Exception as exc:
                pending_exception = exc
                session.send_action("stop")
        elif mtype == "observation":
            try:
                observation = ClientObservation.from_wire(message, goal_category)
                session.send_action(policy.act(observation))
            except ClientError:
                raise
            except Exception as exc:
                pending_exception = exc
                session.send_action("stop")
        elif mtype == "episode_end":
            session.episode_summaries.append(
                EpisodeSummary(
                    episode_id=str(message.get("episode_id", "")),
                    success=bool(message.get("success")),
                    spl=float(message.get("spl", 0.0)),
                    steps=int(message.get("steps", 0)),
                )
            )
            if pending_exception is not None:
                exc = pending_exception
                pending_exception = None
                raise ClientError("policy raised during the episode") from exc
        elif mtype == "session_end":
            metrics = message.get("metrics")
            return metrics if isinstance(metrics, dict) else {}
        elif mtype == "error":
            raise ClientError(
                f"server error {message.get('code')!r}: {message.get('detail')}"
            )
        # Unknown message types are ignored (forward compatibility).
