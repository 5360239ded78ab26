"""Train the learned scheduler on a small workload and watch it improve.

Uses the plain shared-policy variant (no encoder, no demonstrations) at a
deliberately small scale so the whole run takes seconds.  The training
windows show the policy drifting away from coin-flipping; the frozen test
phase then compares it against the random baseline on the same seed.

    python demos/train_small.py
"""

import dataclasses

from edgesched.config import ExperimentConfig
from edgesched.harness import run_experiment

CFG = ExperimentConfig(
    seed=1,
    policy="mappo",
    servers=2,
    users=6,
    dim=16,
    topics=150,
    train_slots=400,
    test_slots=150,
    window_size=100,
    nlist=16,
    min_candidates=5,
    query_width=3,
    min_agent_batch=16,
    epochs=8,
)


def main():
    print("training the shared policy (two servers, 400 slots)...")
    report = run_experiment(CFG)

    print("\ntraining-phase windows (100 completions each):")
    for w in report.windows:
        if w.phase != "train":
            continue
        print(f"  window {w.index}: mean reward {w.mean_reward:+.3f}   "
              f"direct-cloud share {w.llm_direct_freq:.2f}   "
              f"per-server variance {w.reward_variance:.3f}")

    print("\nfrozen test phase (policy acts greedily, no more updates):")
    print(f"  learned: mean reward {report.test.mean_reward:+.3f}, "
          f"mean delay {report.test.mean_delay:.2f}s")

    rand = run_experiment(dataclasses.replace(CFG, policy="random"))
    print(f"  random:  mean reward {rand.test.mean_reward:+.3f}, "
          f"mean delay {rand.test.mean_delay:.2f}s")

    gain = (report.test.mean_reward - rand.test.mean_reward) / abs(
        rand.test.mean_reward
    )
    print(f"\nthe learned policy ends up {100 * gain:+.1f}% over random on "
          "this seed")
    print("the full-size variants add a question encoder and expert "
          "demonstrations (policies t-mappo, g-mappo, lrs)")


if __name__ == "__main__":
    main()
