"""Wire-protocol evaluation service for remotely connected agents.

Transport is TCP with newline-delimited UTF-8 JSON, one message per line, in
strict request/response alternation. The server speaks first:

  server -> {"type":"handshake","protocol_version":1,"episode_count":N,"sensors":[...]}
  client -> {"type":"hello","protocol_version":1,"agent_name":...}
  per episode:
    server -> {"type":"reset","episode_id":...,"goal_category":...,"observation":{...}}
    client -> {"type":"action","name":"move-forward"|...|"stop"}
    server -> {"type":"observation",...} | {"type":"episode_end",...}
  server -> {"type":"session_end","metrics":{...}}

Malformed client messages elicit {"type":"error",...}; the current episode is
voided and the session continues with the next one. A disconnect mid-episode
voids that episode and ends the session. Floats on the wire are quantized to
six decimals so transcripts are bit-stable across platforms.
"""
from __future__ import annotations

import hashlib
import json
import random
import socket
from dataclasses import dataclass
from typing import IO, Any, Sequence

from .episodes import Episode
from .evalserver import LocalRunner
from .goalzone import DEFAULT_VISIBILITY, VisibilityConfig
from .metrics import EvalConfig, EpisodeResult, MetricsReport, aggregate
from .scene import Scene, quantize
from .sim import Action, AgentConfig, Observation, SimulationError

PROTOCOL_VERSION = 1
ALL_SENSORS = ("gps_compass", "depth_scan")
DEFAULT_ACTION_TIMEOUT = 60.0


class ProtocolError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


class ClientDisconnected(Exception):
    pass


@dataclass
class SessionConfig:
    episodes: Sequence[Episode]
    scenes: dict[str, Scene]
    eval_config: EvalConfig = EvalConfig()
    agent_cfg: AgentConfig = AgentConfig()
    sensor_cfg: VisibilityConfig = DEFAULT_VISIBILITY
    host: str = "127.0.0.1"
    port: int = 0
    label: str = "test-standard"
    sensors: tuple[str, ...] = ALL_SENSORS
    shuffle_seed: int | None = None
    action_timeout: float = DEFAULT_ACTION_TIMEOUT

    def __post_init__(self) -> None:
        for sensor in self.sensors:
            if sensor not in ALL_SENSORS:
                raise ValueError(f"unknown sensor grant {sensor!r}")
        for episode in self.episodes:
            if episode.scene_id not in self.scenes:
                raise ValueError(
                    f"episode {episode.episode_id} references missing scene "
                    f"{episode.scene_id!r}"
                )


@dataclass
class SessionRecord:
    label: str
    agent_name: str
    results: tuple[EpisodeResult, ...]
    report: MetricsReport | None
    transcript_sha256: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "agent_name": self.agent_name,
            "results": [r.to_dict() for r in self.results],
            "metrics": self.report.to_dict() if self.report else None,
            "transcript_sha256": self.transcript_sha256,
        }

    def write(self, sink: str | IO[str]) -> None:
        text = json.dumps(self.to_dict(), separators=(",", ":")) + "\n"
        if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
            with open(sink, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sink.write(text)


def wire_observation(obs: Observation, sensors: Sequence[str]) -> dict[str, Any]:
    """Observation payload filtered by the sensor grant, 6-decimal floats."""
    payload: dict[str, Any] = {}
    if "gps_compass" in sensors:
        payload["gps"] = [quantize(obs.gps[0]), quantize(obs.gps[1])]
        payload["compass"] = quantize(obs.compass)
    if "depth_scan" in sensors:
        payload["depth"] = [quantize(d) for d in obs.depth]
    payload["collided"] = obs.collided
    payload["step"] = obs.step
    return payload


class _Connection:
    """Line transport over one accepted socket, hashing the transcript."""

    def __init__(self, sock: socket.socket, timeout: float):
        self.sock = sock
        self.sock.settimeout(timeout)
        self.reader = sock.makefile("r", encoding="utf-8", newline="\n")
        self.hash = hashlib.sha256()

    def send(self, message: dict[str, Any]) -> None:
        line = json.dumps(message, separators=(",", ":")) + "\n"
        self.hash.update(line.encode("utf-8"))
        try:
            self.sock.sendall(line.encode("utf-8"))
        except OSError as exc:
            raise ClientDisconnected(str(exc)) from exc

    def receive(self) -> dict[str, Any]:
        try:
            line = self.reader.readline()
        except (socket.timeout, TimeoutError) as exc:
            raise ProtocolError("timeout", "no message within the action timeout") from exc
        except OSError as exc:
            raise ClientDisconnected(str(exc)) from exc
        if line == "":
            raise ClientDisconnected("client closed the connection")
        self.hash.update(line.encode("utf-8"))
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError("bad_message", f"invalid JSON: {exc.msg}") from exc
        if not isinstance(message, dict) or "type" not in message:
            raise ProtocolError("bad_message", "message must be an object with a type")
        return message

    def close(self) -> None:
        try:
            self.reader.close()
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class EvalServer:
    """One evaluation session: exactly one client, episodes served in order.

    Simulation state is confined to this object; the client only ever sees
    granted sensor readings, never poses, fields, or viewpoints.
    """

    def __init__(self, config: SessionConfig):
        self.config = config
        self.runner = LocalRunner(
            config.scenes, config.eval_config, config.agent_cfg, config.sensor_cfg
        )
        order = list(config.episodes)
        if config.shuffle_seed is not None:
            random.Random(config.shuffle_seed).shuffle(order)
        self.episodes = order
        self._listener: socket.socket | None = None

    def __enter__(self) -> "EvalServer":
        self.open()
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def open(self) -> None:
        listener = socket.create_server(
            (self.config.host, self.config.port), reuse_port=False
        )
        listener.settimeout(self.config.action_timeout)
        self._listener = listener

    @property
    def address(self) -> tuple[str, int]:
        if self._listener is None:
            raise RuntimeError("server is not listening")
        return self._listener.getsockname()[:2]

    def close(self) -> None:
        if self._listener is not None:
            self._listener.close()
            self._listener = None

    def serve(self) -> SessionRecord:
        """Accept one client, run the whole session, and return its record."""
        if self._listener is None:
            self.open()
        sock, _ = self._listener.accept()
        conn = _Connection(sock, self.config.action_timeout)
        agent_name = "unknown"
        results: list[EpisodeResult] = []
        try:
            conn.send(
                {
                    "type": "handshake",
                    "protocol_version": PROTOCOL_VERSION,
                    "episode_count": len(self.episodes),
                    "sensors": list(self.config.sensors),
                }
            )
            hello = conn.receive()
            if hello.get("type") != "hello" or hello.get("protocol_version") != PROTOCOL_VERSION:
                conn.send(
                    {
                        "type": "error",
                        "code": "version_mismatch",
                        "detail": f"server speaks protocol {PROTOCOL_VERSION}",
                    }
                )
                return self._finish(agent_name, results, conn)
            agent_name = str(hello.get("agent_name", "unknown"))
            for episode in self.episodes:
                try:
                    results.append(self._run_episode(conn, episode))
                except ProtocolError as exc:
                    results.append(self._void_episode(episode))
                    conn.send({"type": "error", "code": exc.code, "detail": exc.detail})
                except ClientDisconnected:
                    # The interrupted episode is voided; the session ends here.
                    results.append(self._void_episode(episode))
                    return self._finish(agent_name, results, conn)
            record = self._finish(agent_name, results, conn)
            metrics = record.report.to_dict() if record.report else None
            conn.send({"type": "session_end", "metrics": metrics})
            return record
        except ClientDisconnected:
            return self._finish(agent_name, results, conn)
        finally:
            conn.close()
            self.close()

    def _void_episode(self, episode: Episode) -> EpisodeResult:
        sim, _ = self.runner.start_sim(episode)
        return self.runner.score(episode, sim, "error")

    def _run_episode(self, conn: _Connection, episode: Episode) -> EpisodeResult:
        sim, obs = self.runner.start_sim(episode)
        conn.send(
            {
                "type": "reset",
                "episode_id": episode.episode_id,
                "goal_category": episode.goal_category,
                "observation": wire_observation(obs, self.config.sensors),
            }
        )
        while True:
            message = conn.receive()
            if message.get("type") != "action":
                raise ProtocolError("bad_message", "expected an action message")
            name = message.get("name")
            try:
                action = Action.from_name(str(name))
            except SimulationError:
                raise ProtocolError("bad_action", f"unknown action {name!r}") from None
            obs = sim.step(action)
            if sim.stopped or sim.step_count >= sim.max_steps:
                termination = "stop" if sim.stopped else "budget"
                result = self.runner.score(episode, sim, termination)
                conn.send(
                    {
                        "type": "episode_end",
                        "episode_id": episode.episode_id,
                        "success": bool(result.success),
                        "spl": quantize(result.spl),
                        "steps": result.steps,
                    }
                )
                return result
            conn.send(
                {
                    "type": "observation",
                    **wire_observation(obs, self.config.sensors),
                }
            )

    def _finish(
        self, agent_name: str, results: list[EpisodeResult], conn: _Connection
    ) -> SessionRecord:
        report = aggregate(results) if results else None
        return SessionRecord(
            label=self.config.label,
            agent_name=agent_name,
            results=tuple(results),
            report=report,
            transcript_sha256=conn.hash.hexdigest(),
        )


def serve(config: SessionConfig) -> SessionRecord:
    """Run one complete session on the configured port and return its record."""
    with EvalServer(config) as server:
        return server.serve()
