"""Run the heuristic schedulers side by side on one seeded workload.

Also contrasts the two test-phase routing modes: ``nearest`` serves each
request at its origin server, ``broadcast`` races all servers and keeps
the fastest answer.

    python demos/compare_policies.py
"""

import dataclasses

from edgesched.config import ExperimentConfig
from edgesched.harness import run_experiment

BASE = ExperimentConfig(
    seed=4,
    servers=3,
    dim=32,
    topics=400,
    train_slots=300,
    test_slots=300,
    window_size=300,
    nlist=32,
    paraphrase_sigma=0.1,
)

POLICIES = ("random", "greedy-0.1", "greedy-0.3", "greedy-llm")


def main():
    print(f"{'policy':<12s} {'reward':>8s} {'satisfaction':>13s} "
          f"{'delay':>7s} {'direct':>7s}")
    rows = {}
    for policy in POLICIES:
        report = run_experiment(dataclasses.replace(BASE, policy=policy))
        t = report.test
        rows[policy] = report
        print(f"{policy:<12s} {t.mean_reward:>+8.3f} "
              f"{t.mean_satisfaction:>+13.3f} {t.mean_delay:>6.2f}s "
              f"{t.llm_direct_freq:>7.2f}")

    print("\nrandom flips a coin; greedy-<t> serves any hit within distance "
          "t;\ngreedy-llm compares a predicted cache payoff against its "
          "recent cloud rewards.\ngreedy-0.3 and greedy-llm coincide here: "
          "the workload's hit distances are\nbimodal (close repeats vs "
          "distant strangers), and both cutoffs sit in the gap\n")

    print("same workload, broadcast test routing (fastest of all servers):")
    for policy in ("random", "greedy-llm"):
        report = run_experiment(
            dataclasses.replace(BASE, policy=policy, mode="broadcast")
        )
        near = rows[policy].test
        t = report.test
        print(f"  {policy:<12s} delay {near.mean_delay:.2f}s -> {t.mean_delay:.2f}s"
              f"   reward {near.mean_reward:+.3f} -> {t.mean_reward:+.3f}")
    print("racing every server always shaves delay, at the cost of running "
          "each request everywhere")


if __name__ == "__main__":
    main()
