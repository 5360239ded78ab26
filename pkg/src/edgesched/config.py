"""Experiment configuration: defaults, INI loading, and validation.

Config files use INI sections ([experiment], [workload], [store], [env],
[trainer], [encoder]); every option must name a known field and parse to the
field's type, otherwise loading fails with a :class:`ConfigError` pointing
at the offending entry.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import re
from dataclasses import dataclass

from .errors import ConfigError
from .nn.models import EncoderConfig
from .marl import TrainerConfig
from .simenv import AnswerModel, DelayModel

MODES = ("nearest", "broadcast")

# Interface names for the learned variants:
#   mappo    - raw observations, no demonstrations
#   g-mappo  - raw observations plus demonstrations
#   t-mappo  - encoded observations, no demonstrations
#   lrs      - encoded observations plus demonstrations (the full scheduler)
LEARNED_POLICIES = ("mappo", "g-mappo", "t-mappo", "lrs")

_GREEDY_RE = re.compile(r"^greedy-(\d+(?:\.\d+)?)$")


def policy_kind(name: str) -> tuple[str, float | None]:
    """Classify a policy name.

    Returns one of ``("random", None)``, ``("greedy-llm", None)``,
    ``("greedy", threshold)``, or ``("learned", None)``.
    """
    if name == "random":
        return "random", None
    if name == "greedy-llm":
        return "greedy-llm", None
    if name in LEARNED_POLICIES:
        return "learned", None
    m = _GREEDY_RE.match(name)
    if m:
        threshold = float(m.group(1))
        if threshold <= 0:
            raise ConfigError(f"greedy threshold must be positive, got {name!r}")
        return "greedy", threshold
    raise ConfigError(
        f"unknown policy {name!r}; expected random, greedy-llm, "
        f"greedy-<threshold>, or one of {', '.join(LEARNED_POLICIES)}"
    )


@dataclass
class ExperimentConfig:
    """Everything one experiment run depends on.

    ``train_slots`` and ``test_slots`` count requests per server: each slot
    issues one request to every server.
    """

    # [experiment]
    seed: int = 0
    policy: str = "lrs"
    mode: str = "nearest"
    servers: int = 3
    users: int = 9
    dim: int = 64
    train_slots: int = 4500
    test_slots: int = 150
    window_size: int = 300
    transitions_out: str | None = None

    # [workload]
    topics: int = 3000
    repeat_ratio: float = 0.4
    paraphrase_sigma: float = 0.05
    workload_file: str | None = None

    # [store]
    nlist: int = 128
    min_candidates: int = 10
    rebuild_every: int = 1000
    query_width: int = 5

    # [env]
    quality_weight: float = 1.0
    delay_weight: float = 0.1
    reward_scale: float = 10.0
    filter_value_weight: float = 1.0
    filter_freq_weight: float = 0.1
    tau_serve: float = 0.15
    evict_period: int = 500
    edge_delay: float = 0.81
    cloud_delay: float = 3.34
    jitter_sigma: float = 0.05
    sigma_llm: float = 0.15
    sigma_enhance: float = 0.05
    sigma_mislead: float = 0.10
    relevance_radius: float = 0.5

    # [trainer]
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    value_coeff: float = 0.5
    entropy_coeff: float = 0.01
    lr_policy: float = 3e-4
    lr_value: float = 1e-3
    min_agent_batch: int = 128
    min_demo_quota: int = 16
    epochs: int = 4
    minibatch_size: int = 64
    demo_slots: int = 400

    # [encoder]
    num_patches: int = 8
    num_blocks: int = 2
    num_heads: int = 4
    model_dim: int = 64
    feature_dim: int = 32
    use_positional: bool = True

    # ------------------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        if self.servers < 1:
            raise ConfigError(f"servers must be >= 1, got {self.servers}")
        if self.users < self.servers:
            raise ConfigError(
                f"users ({self.users}) must be >= servers ({self.servers})"
            )
        if self.dim < 8:
            raise ConfigError(f"dim must be >= 8, got {self.dim}")
        if self.train_slots < 0 or self.test_slots < 0:
            raise ConfigError("slot counts must be >= 0")
        if self.window_size < 1:
            raise ConfigError(f"window_size must be >= 1, got {self.window_size}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.repeat_ratio <= 1.0:
            raise ConfigError(f"repeat_ratio must lie in [0, 1], got {self.repeat_ratio}")
        if self.topics < self.servers and self.workload_file is None:
            raise ConfigError(
                f"topics ({self.topics}) must cover every server ({self.servers})"
            )
        kind, _ = policy_kind(self.policy)  # raises on unknown names
        if kind == "learned" and self.demo_slots < 1:
            from .baselines import ablation_spec

            if ablation_spec(self.policy).use_demos:
                raise ConfigError("demo_slots must be >= 1 for demo-using policies")
        # Constructing the model objects runs their own validation.
        self.delay_model()
        self.answer_model()
        self.trainer_config()
        if kind == "learned":
            from .baselines import ablation_spec

            if ablation_spec(self.policy).use_encoder:
                self.encoder_config()
        return self

    # -- sub-configs -------------------------------------------------------

    def delay_model(self) -> DelayModel:
        return DelayModel(
            edge_query=self.edge_delay,
            cloud_llm=self.cloud_delay,
            jitter_sigma=self.jitter_sigma,
        )

    def answer_model(self) -> AnswerModel:
        return AnswerModel(
            sigma_llm=self.sigma_llm,
            sigma_enhance=self.sigma_enhance,
            sigma_mislead=self.sigma_mislead,
            relevance_radius=self.relevance_radius,
        )

    def trainer_config(self) -> TrainerConfig:
        return TrainerConfig(
            gamma=self.gamma,
            gae_lambda=self.gae_lambda,
            clip_epsilon=self.clip_epsilon,
            value_coeff=self.value_coeff,
            entropy_coeff=self.entropy_coeff,
            lr_policy=self.lr_policy,
            lr_value=self.lr_value,
            min_agent_batch=self.min_agent_batch,
            min_demo_quota=self.min_demo_quota,
            epochs=self.epochs,
            minibatch_size=self.minibatch_size,
        )

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            input_dim=self.dim,
            num_patches=self.num_patches,
            num_blocks=self.num_blocks,
            num_heads=self.num_heads,
            model_dim=self.model_dim,
            feature_dim=self.feature_dim,
            use_positional=self.use_positional,
        )

    def flat_dict(self) -> dict[str, str]:
        """Stable string form of every field, for report echoing."""
        out = {}
        for sect, names in sorted(_SECTIONS.items()):
            for name in names:
                value = getattr(self, name)
                out[f"{sect}.{name}"] = "" if value is None else str(value)
        return out


_SECTIONS: dict[str, tuple[str, ...]] = {
    "experiment": (
        "seed",
        "policy",
        "mode",
        "servers",
        "users",
        "dim",
        "train_slots",
        "test_slots",
        "window_size",
        "transitions_out",
    ),
    "workload": ("topics", "repeat_ratio", "paraphrase_sigma", "workload_file"),
    "store": ("nlist", "min_candidates", "rebuild_every", "query_width"),
    "env": (
        "quality_weight",
        "delay_weight",
        "reward_scale",
        "filter_value_weight",
        "filter_freq_weight",
        "tau_serve",
        "evict_period",
        "edge_delay",
        "cloud_delay",
        "jitter_sigma",
        "sigma_llm",
        "sigma_enhance",
        "sigma_mislead",
        "relevance_radius",
    ),
    "trainer": (
        "gamma",
        "gae_lambda",
        "clip_epsilon",
        "value_coeff",
        "entropy_coeff",
        "lr_policy",
        "lr_value",
        "min_agent_batch",
        "min_demo_quota",
        "epochs",
        "minibatch_size",
        "demo_slots",
    ),
    "encoder": (
        "num_patches",
        "num_blocks",
        "num_heads",
        "model_dim",
        "feature_dim",
        "use_positional",
    ),
}

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_OPTIONAL_STR = {"workload_file", "transitions_out"}


def _convert(section: str, option: str, raw: str):
    ftype = _FIELD_TYPES[option]
    raw = raw.strip()
    if option in _OPTIONAL_STR:
        return raw or None
    try:
        if ftype == "int":
            return int(raw)
        if ftype == "float":
            return float(raw)
        if ftype == "bool":
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw
    except ValueError as exc:
        raise ConfigError(f"[{section}] {option}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Read an INI config file into an :class:`ExperimentConfig`."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(
                f"{path}: unknown section [{section}]; known: {sorted(_SECTIONS)}"
            )
        allowed = _SECTIONS[section]
        for option, raw in parser.items(section):
            if option not in allowed:
                raise ConfigError(
                    f"{path}: unknown option {option!r} in [{section}]"
                )
            setattr(cfg, option, _convert(section, option, raw))
    return cfg
