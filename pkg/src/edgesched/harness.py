"""Experiment harness: seeded end-to-end runs, metric windows, reports, CLI.

A run has two phases sharing one environment and one set of stores: a
training phase where requests go to their origin server (and learned
policies update), then a frozen test phase in either ``nearest`` mode (same
routing) or ``broadcast`` mode (every request is served by all servers and
the fastest answer wins).  Metrics are aggregated into fixed-size windows of
completed requests and written as CSV or JSON lines.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass

import numpy as np

from .baselines import (
    BasePolicy,
    DecisionContext,
    LearnedPolicy,
    PayoffGreedyPolicy,
    RandomPolicy,
    ThresholdPolicy,
    ablation_spec,
)
from .config import ExperimentConfig, load_config, policy_kind
from .errors import ConfigError, ParseError
from .marl import (
    DemoSet,
    ExperienceBuffer,
    RolloutDriver,
    Trainer,
    correlation_features,
)
from .seeding import DOMAIN_DEMO, DOMAIN_POLICY, substream
from .simenv import ActionChoice, EdgeEnv, Transition
from .vecstore import VectorStore
from .workload import WorkloadGenerator, generate_topics, load_workload, save_workload

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricsWindow:
    """Aggregates over one window of completed requests."""

    phase: str
    index: int
    count: int
    mean_reward: float
    mean_satisfaction: float
    mean_delay: float
    llm_direct_freq: float  # fraction of completions served by direct cloud
    reward_variance: float  # population variance of per-agent mean rewards


@dataclass
class PhaseSummary:
    phase: str
    requests: int
    mean_reward: float
    mean_satisfaction: float
    mean_delay: float
    llm_direct_freq: float


class WindowAccumulator:
    """Folds completed transitions into fixed-size metric windows."""

    def __init__(self, phase: str, window_size: int, n_agents: int):
        self.phase = phase
        self.window_size = window_size
        self.n_agents = n_agents
        self.windows: list[MetricsWindow] = []
        self._reset()
        self.total_count = 0
        self.total_r = 0.0
        self.total_q = 0.0
        self.total_d = 0.0
        self.total_direct = 0

    def _reset(self):
        self._count = 0
        self._r = 0.0
        self._q = 0.0
        self._d = 0.0
        self._direct = 0
        self._agent_r = np.zeros(self.n_agents)
        self._agent_n = np.zeros(self.n_agents, dtype=int)

    def add(self, t: Transition) -> MetricsWindow | None:
        self._count += 1
        self._r += t.r
        self._q += t.q
        self._d += t.d
        self._direct += t.resolved == "B"
        self._agent_r[t.server] += t.r
        self._agent_n[t.server] += 1
        self.total_count += 1
        self.total_r += t.r
        self.total_q += t.q
        self.total_d += t.d
        self.total_direct += t.resolved == "B"
        if self._count == self.window_size:
            return self._close()
        return None

    def _close(self) -> MetricsWindow:
        active = self._agent_n > 0
        if active.sum() > 1:
            means = self._agent_r[active] / self._agent_n[active]
            variance = float(np.var(means))
        else:
            variance = 0.0
        win = MetricsWindow(
            phase=self.phase,
            index=len(self.windows),
            count=self._count,
            mean_reward=self._r / self._count,
            mean_satisfaction=self._q / self._count,
            mean_delay=self._d / self._count,
            llm_direct_freq=self._direct / self._count,
            reward_variance=variance,
        )
        self.windows.append(win)
        self._reset()
        return win

    def flush(self) -> MetricsWindow | None:
        """Close a partial tail window, if any completions are pending."""
        if self._count:
            return self._close()
        return None

    def summary(self) -> PhaseSummary:
        n = max(self.total_count, 1)
        return PhaseSummary(
            phase=self.phase,
            requests=self.total_count,
            mean_reward=self.total_r / n,
            mean_satisfaction=self.total_q / n,
            mean_delay=self.total_d / n,
            llm_direct_freq=self.total_direct / n,
        )


@dataclass
class MetricsReport:
    """Everything a finished run reports: provenance, windows, summaries."""

    policy: str
    mode: str
    seed: int
    config: dict[str, str]
    windows: list[MetricsWindow]
    train: PhaseSummary
    test: PhaseSummary


# ---------------------------------------------------------------------------
# report files

_WINDOW_FIELDS = (
    "phase",
    "index",
    "count",
    "mean_reward",
    "mean_satisfaction",
    "mean_delay",
    "llm_direct_freq",
    "reward_variance",
)


def _summaries_from_windows(windows: list[MetricsWindow]) -> dict[str, PhaseSummary]:
    """Exact phase totals rebuilt from count-weighted window means."""
    out = {}
    for phase in ("train", "test"):
        ws = [w for w in windows if w.phase == phase]
        n = sum(w.count for w in ws)
        if n == 0:
            out[phase] = PhaseSummary(phase, 0, 0.0, 0.0, 0.0, 0.0)
            continue
        out[phase] = PhaseSummary(
            phase=phase,
            requests=n,
            mean_reward=sum(w.mean_reward * w.count for w in ws) / n,
            mean_satisfaction=sum(w.mean_satisfaction * w.count for w in ws) / n,
            mean_delay=sum(w.mean_delay * w.count for w in ws) / n,
            llm_direct_freq=sum(w.llm_direct_freq * w.count for w in ws) / n,
        )
    return out


def emit_report(report: MetricsReport, path, fmt: str | None = None) -> None:
    """Write a report as CSV (default) or JSON lines (.jsonl/.json paths)."""
    fmt = fmt or _infer_format(path)
    if fmt == "jsonl":
        with open(path, "w") as fh:
            meta = {
                "kind": "meta",
                "policy": report.policy,
                "mode": report.mode,
                "seed": report.seed,
                "config": report.config,
            }
            fh.write(json.dumps(meta) + "\n")
            for w in report.windows:
                row = {"kind": "window"}
                row.update({f: getattr(w, f) for f in _WINDOW_FIELDS})
                fh.write(json.dumps(row) + "\n")
        return
    with open(path, "w", newline="") as fh:
        fh.write("# edgesched-report v1\n")
        fh.write(f"# policy = {report.policy}\n")
        fh.write(f"# mode = {report.mode}\n")
        fh.write(f"# seed = {report.seed}\n")
        for key, value in sorted(report.config.items()):
            fh.write(f"# config {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(_WINDOW_FIELDS)
        for w in report.windows:
            writer.writerow([str(getattr(w, f)) for f in _WINDOW_FIELDS])


def _infer_format(path) -> str:
    text = str(path)
    return "jsonl" if text.endswith((".jsonl", ".json")) else "csv"


def load_report(path, fmt: str | None = None) -> MetricsReport:
    """Read a report back; float fields round-trip exactly."""
    fmt = fmt or _infer_format(path)
    windows: list[MetricsWindow] = []
    if fmt == "jsonl":
        meta = None
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(
                        f"{path}: line {lineno}: invalid JSON: {exc}"
                    ) from exc
                if row.get("kind") == "meta":
                    meta = row
                elif row.get("kind") == "window":
                    windows.append(_window_from(row, f"{path}: line {lineno}"))
                else:
                    raise ParseError(f"{path}: line {lineno}: unknown row kind")
        if meta is None:
            raise ParseError(f"{path}: missing meta row")
        summaries = _summaries_from_windows(windows)
        return MetricsReport(
            policy=meta["policy"],
            mode=meta["mode"],
            seed=int(meta["seed"]),
            config=dict(meta.get("config", {})),
            windows=windows,
            train=summaries["train"],
            test=summaries["test"],
        )
    meta = {"policy": "", "mode": "", "seed": 0}
    config: dict[str, str] = {}
    rows: list[list[str]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("config "):
                    key, _, value = body[len("config "):].partition(" = ")
                    config[key.strip()] = value
                elif " = " in body:
                    key, _, value = body.partition(" = ")
                    meta[key.strip()] = value.strip()
                continue
            if line.strip():
                rows.append(next(csv.reader([line])))
    if not rows or tuple(rows[0]) != _WINDOW_FIELDS:
        raise ParseError(f"{path}: missing or malformed header row")
    for row in rows[1:]:
        if len(row) != len(_WINDOW_FIELDS):
            raise ParseError(f"{path}: window row has {len(row)} fields")
        windows.append(_window_from(dict(zip(_WINDOW_FIELDS, row)), path))
    summaries = _summaries_from_windows(windows)
    return MetricsReport(
        policy=str(meta["policy"]),
        mode=str(meta["mode"]),
        seed=int(meta["seed"]),
        config=config,
        windows=windows,
        train=summaries["train"],
        test=summaries["test"],
    )


def _window_from(row: dict, where: str) -> MetricsWindow:
    try:
        return MetricsWindow(
            phase=str(row["phase"]),
            index=int(row["index"]),
            count=int(row["count"]),
            mean_reward=float(row["mean_reward"]),
            mean_satisfaction=float(row["mean_satisfaction"]),
            mean_delay=float(row["mean_delay"]),
            llm_direct_freq=float(row["llm_direct_freq"]),
            reward_variance=float(row["reward_variance"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{where}: bad window row: {exc}") from exc


def write_transition_log(path, transitions: list[Transition]) -> int:
    """Dump a processing log as JSON lines; returns the row count."""
    with open(path, "w") as fh:
        for t in transitions:
            row = {
                "slot": t.slot,
                "server": t.server,
                "user": t.user,
                "request_id": t.request_id,
                "action": t.action,
                "resolved": t.resolved,
                "action_prob": t.action_prob,
                "q": t.q,
                "d": t.d,
                "r": t.r,
                "fallback": t.fallback,
                "topic": t.topic,
            }
            fh.write(json.dumps(row) + "\n")
    return len(transitions)


# ---------------------------------------------------------------------------
# experiment assembly


class _SlotSource:
    """Uniform per-slot request supply from a generator or a replay file."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        if cfg.workload_file:
            requests = load_workload(cfg.workload_file, dim=cfg.dim)
            if any(r.server >= cfg.servers for r in requests):
                raise ConfigError(
                    f"{cfg.workload_file}: request server index exceeds "
                    f"configured servers ({cfg.servers})"
                )
            by_slot: dict[int, list] = {}
            for r in requests:
                by_slot.setdefault(r.slot, []).append(r)
            self._slots = [by_slot[s] for s in sorted(by_slot)]
            for group in self._slots:
                if len(group) != cfg.servers:
                    raise ConfigError(
                        f"{cfg.workload_file}: slot {group[0].slot} has "
                        f"{len(group)} requests, expected {cfg.servers}"
                    )
            needed = cfg.train_slots + cfg.test_slots
            if len(self._slots) < needed:
                raise ConfigError(
                    f"{cfg.workload_file}: {len(self._slots)} slots in file, "
                    f"run needs {needed}"
                )
            self._gen = None
        else:
            topics = generate_topics(cfg.topics, cfg.dim, cfg.seed)
            self._gen = WorkloadGenerator(
                topics,
                cfg.servers,
                cfg.users,
                cfg.repeat_ratio,
                cfg.paraphrase_sigma,
                cfg.seed,
            )
            self._slots = None
        self._cursor = 0

    def next_slot(self) -> list:
        """Requests for the next slot, in server order."""
        i = self._cursor
        self._cursor += 1
        if self._gen is not None:
            return self._gen.slot_requests(i)
        return sorted(self._slots[i], key=lambda r: r.server)


def _make_heuristic(cfg: ExperimentConfig) -> BasePolicy:
    kind, threshold = policy_kind(cfg.policy)
    if kind == "random":
        return RandomPolicy()
    if kind == "greedy":
        return ThresholdPolicy(threshold)
    if kind == "greedy-llm":
        return PayoffGreedyPolicy(
            num_servers=cfg.servers,
            delay_model=cfg.delay_model(),
            answer_model=cfg.answer_model(),
            quality_weight=cfg.quality_weight,
            delay_weight=cfg.delay_weight,
            reward_scale=cfg.reward_scale,
        )
    raise ConfigError(f"{cfg.policy!r} is not a heuristic policy")


def _build_env(cfg: ExperimentConfig, seed: int) -> EdgeEnv:
    stores = [
        VectorStore(
            dim=cfg.dim,
            nlist=cfg.nlist,
            min_candidates=cfg.min_candidates,
            rebuild_every=cfg.rebuild_every,
            seed=seed,
            server=n,
        )
        for n in range(cfg.servers)
    ]
    return EdgeEnv(
        stores,
        delay_model=cfg.delay_model(),
        answer_model=cfg.answer_model(),
        quality_weight=cfg.quality_weight,
        delay_weight=cfg.delay_weight,
        reward_scale=cfg.reward_scale,
        filter_value_weight=cfg.filter_value_weight,
        filter_freq_weight=cfg.filter_freq_weight,
        query_width=cfg.query_width,
        tau_serve=cfg.tau_serve,
        evict_period=cfg.evict_period,
        seed=seed,
    )


def _observe_slot(env: EdgeEnv, reqs) -> tuple:
    """Correlation sets, feature matrix, and question matrix for one slot."""
    corrsets = [
        env.correlations(n, reqs[n].question_vec) for n in range(env.num_servers)
    ]
    feats = np.stack(
        [correlation_features(c.matrix(env.query_width)) for c in corrsets]
    )
    questions = np.stack([r.question_vec for r in reqs])
    return corrsets, feats, questions


def build_expert_demos(cfg: ExperimentConfig) -> DemoSet:
    """Record demonstration segments from the payoff-greedy expert.

    The expert runs on its own sibling copy of the experiment (fresh stores
    and workload under a demo-specific seed) so the main run's random
    streams stay untouched.  Recorded action probabilities are 1.0: the
    expert is deterministic.
    """
    demo_seed = int(substream(cfg.seed, DOMAIN_DEMO).integers(2**31))
    env = _build_env(cfg, demo_seed)
    source = _SlotSource(dataclasses.replace(cfg, workload_file=None, seed=demo_seed))
    expert = PayoffGreedyPolicy(
        num_servers=cfg.servers,
        delay_model=cfg.delay_model(),
        answer_model=cfg.answer_model(),
        quality_weight=cfg.quality_weight,
        delay_weight=cfg.delay_weight,
        reward_scale=cfg.reward_scale,
    )
    buffer = ExperienceBuffer(cfg.servers)
    segment_len = cfg.min_agent_batch
    for slot in range(cfg.demo_slots):
        reqs = source.next_slot()
        env.begin_slot(slot)
        corrsets, feats, questions = _observe_slot(env, reqs)
        if buffer.pending_steps >= segment_len:
            buffer.hand_off(feats, questions)
        actions = []
        for n in range(cfg.servers):
            ctx = DecisionContext(
                corr=corrsets[n],
                corr_features=feats[n],
                question_vec=reqs[n].question_vec,
                server=n,
                slot=slot,
                rng=substream(demo_seed, DOMAIN_POLICY, reqs[n].id, n),
            )
            choice, _ = expert.decide(ctx)
            actions.append(choice)
        rewards = np.zeros(cfg.servers)
        for n in range(cfg.servers):
            t = env.step(reqs[n], actions[n], corrsets[n], 1.0)
            rewards[n] = t.r
            expert.observe(t)
        buffer.record_slot(
            feats,
            questions,
            np.array([c.a for c in actions]),
            np.ones(cfg.servers),
            rewards,
        )
    # Bootstrap observation for the final partial segment.
    reqs = source.next_slot()
    env.begin_slot(cfg.demo_slots)
    _, feats, questions = _observe_slot(env, reqs)
    buffer.hand_off(feats, questions)
    return DemoSet(buffer.segments)


# ---------------------------------------------------------------------------
# the run itself


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    """Execute one full seeded experiment and return its report."""
    cfg.validate()
    kind, _ = policy_kind(cfg.policy)
    env = _build_env(cfg, cfg.seed)
    source = _SlotSource(cfg)

    driver = None
    heuristic = None
    if kind == "learned":
        spec = ablation_spec(cfg.policy)
        demos = build_expert_demos(cfg) if spec.use_demos else None
        trainer = Trainer(
            n_agents=cfg.servers,
            corr_dim=3 * cfg.query_width,
            question_dim=cfg.dim,
            cfg=cfg.trainer_config(),
            encoder_cfg=cfg.encoder_config() if spec.use_encoder else None,
            demos=demos,
            seed=cfg.seed,
        )
        driver = RolloutDriver(trainer)
    else:
        heuristic = _make_heuristic(cfg)

    acc_train = WindowAccumulator("train", cfg.window_size, cfg.servers)

    # -- training phase: origin-server routing, learned policies update ----
    for slot in range(cfg.train_slots):
        reqs = source.next_slot()
        env.begin_slot(slot)
        corrsets, feats, questions = _observe_slot(env, reqs)
        if driver is not None:
            driver.begin_slot(feats, questions)
            keys = [r.id for r in reqs]
            actions_arr, probs_arr, _ = driver.choose(feats, questions, keys)
            choices = [ActionChoice(int(a)) for a in actions_arr]
        else:
            choices, probs_arr = [], np.ones(cfg.servers)
            for n in range(cfg.servers):
                ctx = DecisionContext(
                    corr=corrsets[n],
                    corr_features=feats[n],
                    question_vec=reqs[n].question_vec,
                    server=n,
                    slot=slot,
                    rng=substream(cfg.seed, DOMAIN_POLICY, reqs[n].id, n),
                )
                choice, prob = heuristic.decide(ctx)
                choices.append(choice)
                probs_arr[n] = prob
        rewards = np.zeros(cfg.servers)
        for n in range(cfg.servers):
            t = env.step(reqs[n], choices[n], corrsets[n], float(probs_arr[n]))
            rewards[n] = t.r
            acc_train.add(t)
            if heuristic is not None:
                heuristic.observe(t)
        if driver is not None:
            driver.record(
                feats,
                questions,
                np.array([c.a for c in choices]),
                probs_arr,
                rewards,
            )
    acc_train.flush()

    # -- frozen test phase -------------------------------------------------
    if driver is not None:
        test_policy: BasePolicy = LearnedPolicy(
            driver.trainer.snapshot(), deterministic=True
        )
    else:
        test_policy = heuristic

    acc_test = WindowAccumulator("test", cfg.window_size, cfg.servers)
    for i in range(cfg.test_slots):
        slot = cfg.train_slots + i
        reqs = source.next_slot()
        env.begin_slot(slot)
        if cfg.mode == "nearest":
            corrsets, feats, _ = _observe_slot(env, reqs)
            for n in range(cfg.servers):
                ctx = DecisionContext(
                    corr=corrsets[n],
                    corr_features=feats[n],
                    question_vec=reqs[n].question_vec,
                    server=n,
                    slot=slot,
                    rng=substream(cfg.seed, DOMAIN_POLICY, reqs[n].id, n),
                )
                choice, prob = test_policy.decide(ctx)
                t = env.step(reqs[n], choice, corrsets[n], prob)
                acc_test.add(t)
                test_policy.observe(t)
        else:  # broadcast: every server races on every request
            for req in reqs:
                corrsets = [
                    env.correlations(n, req.question_vec)
                    for n in range(cfg.servers)
                ]
                choices, probs = [], []
                for n in range(cfg.servers):
                    ctx = DecisionContext(
                        corr=corrsets[n],
                        corr_features=correlation_features(
                            corrsets[n].matrix(cfg.query_width)
                        ),
                        question_vec=req.question_vec,
                        server=n,
                        slot=slot,
                        rng=substream(cfg.seed, DOMAIN_POLICY, req.id, n),
                    )
                    choice, prob = test_policy.decide(ctx)
                    choices.append(choice)
                    probs.append(prob)
                winner = env.broadcast_step(req, choices, corrsets, probs)
                acc_test.add(winner)
                for t in env.last_broadcast:
                    test_policy.observe(t)
    acc_test.flush()

    if cfg.transitions_out:
        write_transition_log(cfg.transitions_out, env.log)

    return MetricsReport(
        policy=cfg.policy,
        mode=cfg.mode,
        seed=cfg.seed,
        config=cfg.flat_dict(),
        windows=acc_train.windows + acc_test.windows,
        train=acc_train.summary(),
        test=acc_test.summary(),
    )


# ---------------------------------------------------------------------------
# self-checks


def run_invariant_checks(out=sys.stdout) -> bool:
    """Fast deterministic self-diagnostics; True when everything passes."""
    from .nn.gradcheck import finite_difference_grads, gradient_relative_error
    from .nn.models import MlpNet
    from .nn.params import ParamSet
    from .marl import compute_gae
    from .simenv import reward, qos_cost

    ok = True

    def check(name: str, passed: bool):
        nonlocal ok
        ok = ok and passed
        print(f"{'ok' if passed else 'FAIL'}: {name}", file=out)

    # Reward is exactly the negated, scaled QoS cost.
    r = reward(-0.2, 1.5, 1.0, 0.1, 10.0)
    check("reward equals -scale * qos_cost", r == -10.0 * qos_cost(-0.2, 1.5, 1.0, 0.1))

    # GAE on a hand-solvable two-step segment: deltas are both 1, so the
    # earlier advantage carries gamma * lambda * 1 on top of its delta.
    adv = compute_gae(np.array([1.0, 1.0]), np.array([0.0, 0.0]), 0.0, 0.5, 1.0)
    check("gae matches hand computation", np.allclose(adv, [1.5, 1.0]))

    # Gradients of a tiny MLP agree with finite differences.
    net = MlpNet(3, (4,), 2, prefix="t", zero_final=False)
    rng = np.random.default_rng(0)
    params = ParamSet(net.init_params(rng))
    x = rng.normal(size=(5, 3))
    w = rng.normal(size=(5, 2))

    def loss_of(p: ParamSet) -> float:
        y, _ = net.forward(p, x)
        return float((w * y).sum())

    y, cache = net.forward(params, x)
    _, grads = net.backward(params, cache, w)
    numeric = finite_difference_grads(loss_of, params, step=1e-5)
    err = gradient_relative_error(grads, numeric)
    check(f"mlp gradients match finite differences (rel err {err:.2e})", err < 1e-6)

    # Store round-trip through search.
    store = VectorStore(dim=8, nlist=1, seed=1)
    v = np.zeros(8)
    v[0] = 1.0
    store.insert_qa(v, -v, slot=0, initial_cache_value=-1.0)
    hit = store.query(v, 1).best()
    check("store returns an inserted vector exactly", hit is not None and hit.distance == 0.0)

    return ok


# ---------------------------------------------------------------------------
# CLI


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgesched",
        description="Run a cloud-edge request-scheduling experiment.",
    )
    parser.add_argument("--config", help="INI experiment config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument(
        "--policy",
        help="override the scheduling policy "
        "(random, greedy-llm, greedy-<threshold>, mappo, g-mappo, t-mappo, lrs)",
    )
    parser.add_argument(
        "--mode", choices=("nearest", "broadcast"), help="test-phase routing mode"
    )
    parser.add_argument(
        "--out",
        help="report file; .jsonl/.json selects JSON lines, anything else CSV",
    )
    parser.add_argument(
        "--export-workload",
        metavar="PATH",
        help="generate the configured workload, write it as JSON lines, and exit",
    )
    parser.add_argument(
        "--check",
        action="store_true",
        help="run built-in invariant self-checks and exit",
    )
    return parser


def cli_main(argv=None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)

    if args.check:
        return 0 if run_invariant_checks() else 1

    if not args.config:
        print("error: --config is required (or use --check)", file=sys.stderr)
        return 2

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.policy is not None:
            cfg.policy = args.policy
        if args.mode is not None:
            cfg.mode = args.mode
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.export_workload:
        try:
            topics = generate_topics(cfg.topics, cfg.dim, cfg.seed)
            gen = WorkloadGenerator(
                topics,
                cfg.servers,
                cfg.users,
                cfg.repeat_ratio,
                cfg.paraphrase_sigma,
                cfg.seed,
            )
            count = save_workload(
                args.export_workload,
                list(gen.stream(cfg.train_slots + cfg.test_slots)),
            )
        except (ConfigError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {count} requests to {args.export_workload}")
        return 0

    try:
        report = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    for phase in (report.train, report.test):
        print(
            f"{phase.phase}: {phase.requests} requests, "
            f"mean reward {phase.mean_reward:.4f}, "
            f"mean delay {phase.mean_delay:.4f}s, "
            f"direct-cloud share {phase.llm_direct_freq:.3f}"
        )
    if args.out:
        emit_report(report, args.out)
        print(f"report written to {args.out}")
    return 0


def main() -> None:
    logging.basicConfig(level=logging.WARNING)
    sys.exit(cli_main())
