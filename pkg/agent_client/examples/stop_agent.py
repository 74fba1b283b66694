"""Evaluate the stop baseline against a running server.

Usage: python stop_agent.py HOST PORT
"""
import sys

from objnav_client import StopPolicy, connect, run


def main() -> None:
    host, port = sys.argv[1], int(sys.argv[2])
    with connect(host, port, agent_name="stop-example") as session:
        print(f"evaluating {session.episode_count} episodes")
        metrics = run(session, StopPolicy())
    print(metrics)


if __name__ == "__main__":
    main()
