"""Evaluate a seeded random policy against a running server.

Usage: python random_agent.py HOST PORT [SEED]
"""
import sys

from objnav_client import RandomPolicy, connect, run


def main() -> None:
    host, port = sys.argv[1], int(sys.argv[2])
    seed = int(sys.argv[3]) if len(sys.argv) > 3 else 0
    with connect(host, port, agent_name=f"random-{seed}") as session:
        metrics = run(session, RandomPolicy(seed))
    print(metrics)


if __name__ == "__main__":
    main()
