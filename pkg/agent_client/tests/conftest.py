"""Fixtures: a scratch benchmark built once via the evaluator CLI."""
from __future__ import annotations

import json
import re
import subprocess
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def run_cli(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "objnav.cli", *args],
        capture_output=True,
        text=True,
        timeout=300,
    )


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory) -> dict:
    """Scenes + a small dataset generated through the evaluator CLI."""
    root = tmp_path_factory.mktemp("benchmark")
    scenes = root / "scenes"
    dataset = root / "dataset.jsonl"
    gen = run_cli(
        "scene", "gen", "--out", str(scenes), "--count", "2", "--seed", "41",
        "--width", "10", "--height", "10", "--rooms", "1",
        "--objects-min", "0", "--objects-max", "1",
    )
    assert gen.returncode == 0, gen.stderr
    eps = run_cli(
        "episodes", "gen", "--scenes", str(scenes), "--profile", "habitat",
        "--count-per-scene", "3", "--seed", "6", "--out", str(dataset),
    )
    assert eps.returncode == 0, eps.stderr
    return {"root": root, "scenes": scenes, "dataset": dataset}


class ServerProcess:
    """The evaluator's wire service running as a subprocess."""

    def __init__(self, benchmark: dict, out: Path, extra: tuple[str, ...] = ()):
        self.out = out
        self.proc = subprocess.Popen(
            [
                sys.executable, "-m", "objnav.cli", "eval", "--serve", "--port", "0",
                "--dataset", str(benchmark["dataset"]),
                "--scenes", str(benchmark["scenes"]),
                "--out", str(out), "--timeout", "30",
                *extra,
            ],
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        line = self.proc.stdout.readline()
        match = re.match(r"listening on (\S+):(\d+)", line)
        assert match, f"unexpected server banner: {line!r}"
        self.host = match.group(1)
        self.port = int(match.group(2))

    def wait(self) -> int:
        try:
            return self.proc.wait(timeout=120)
        finally:
            self.proc.kill()

    def record(self) -> dict:
        return json.loads((self.out / "session.json").read_text())


@pytest.fixture()
def server_factory(benchmark, tmp_path):
    made = []

    def make(extra: tuple[str, ...] = ()) -> ServerProcess:
        out = tmp_path / f"served-{len(made)}"
        server = ServerProcess(benchmark, out, extra)
        made.append(server)
        return server

    yield make
    for server in made:
        server.proc.kill()
