"""Step-by-step walkthrough of the three ways a request can be served.

A single-server environment with delay jitter disabled, so every number
below is a clean hand-checkable value:

  cache serve   answer straight from the edge store   (fast, quality capped)
  direct cloud  forward to the cloud model            (slow, fresh answer)
  enhanced      retrieve from cache, then call cloud  (slowest, best when
                the retrieved content is relevant)

    python demos/actions_walkthrough.py
"""

import numpy as np

from edgesched.simenv import ActionChoice, AnswerModel, DelayModel, EdgeEnv
from edgesched.vecstore import VectorStore
from edgesched.workload import Request

DIM = 16
E = np.eye(DIM)


def sphere_point(base, other, dist):
    """Unit vector at chord distance ``dist`` from unit vector ``base``."""
    theta = 2.0 * np.arcsin(dist / 2.0)
    return np.cos(theta) * base + np.sin(theta) * other


def req(rid, question, reference):
    return Request(id=rid, user=0, server=0, slot=rid, question_vec=question,
                   reference_vec=reference, topic=0)


def show(label, t):
    print(f"  {label:<28s} resolved {t.resolved}   delay {t.d:5.2f}s   "
          f"satisfaction {t.q:+.3f}   reward {t.r:+.3f}")


def main():
    store = VectorStore(dim=DIM, nlist=1, seed=0)
    env = EdgeEnv(
        [store],
        delay_model=DelayModel(jitter_sigma=0.0),
        answer_model=AnswerModel(),
        evict_period=0,
        seed=0,
    )

    print("reward = 10 * (satisfaction - 0.1 * delay); higher is better\n")

    print("1. the cache is empty, so the first request must go to the cloud")
    t = env.step(req(0, E[0], E[1]), ActionChoice(1))
    show("direct cloud:", t)
    print(f"   the exchange is cached for later (store now holds {len(store)} "
          "records)\n")

    print("2. a close paraphrase (distance 0.05) can be served from cache")
    t = env.step(req(1, sphere_point(E[0], E[2], 0.05), E[1]), ActionChoice(0))
    show("cache serve:", t)
    print("   same answer quality as the cloud gave, at a quarter of the "
          "delay\n")

    print("3. a vaguer match (distance 0.30) enhances the cloud call instead")
    t = env.step(req(2, sphere_point(E[0], E[2], 0.30), E[1]), ActionChoice(0))
    show("cache enhanced:", t)
    print("   pays both delays, but the relevant retrieval sharpens the "
          "answer (noise 0.05 instead of 0.15)\n")

    print("4. enhancing with an unrelated retrieval backfires")
    t = env.step(req(3, E[5], E[6]), ActionChoice(0))
    show("misleading enhancement:", t)
    print("   the nearest cached content is far away (distance >= 0.5), so "
          "the extra context hurts quality\n")

    print("5. choosing the cloud is always available as a safe default")
    t = env.step(req(4, E[5], E[6]), ActionChoice(1))
    show("direct cloud again:", t)

    counts = dict(env.action_counts)
    print(f"\naction tally for this session: {counts}")
    print("a scheduling policy's whole job is making this three-way call "
          "well, request by request")


if __name__ == "__main__":
    main()
