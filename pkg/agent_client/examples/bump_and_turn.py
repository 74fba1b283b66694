"""Evaluate the bump-and-turn wall bouncer against a running server.

Usage: python bump_and_turn.py HOST PORT
"""
import sys

from objnav_client import BumpAndTurnPolicy, connect, run


def main() -> None:
    host, port = sys.argv[1], int(sys.argv[2])
    with connect(host, port, agent_name="bump-and-turn") as session:
        metrics = run(session, BumpAndTurnPolicy())
    print(metrics)


if __name__ == "__main__":
    main()
