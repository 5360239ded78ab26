"""Named-tensor parameter sets, the Adam optimizer, and checkpoint files.

Parameters are plain dicts of float64 arrays wrapped in a :class:`ParamSet`
with a version counter.  Optimizer steps never mutate their input: they
return a fresh set with the version bumped, so any snapshot handed to a
worker stays frozen while training continues.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import GradientError, ParseError


class ParamSet:
    """An immutable-by-convention bundle of named float64 tensors."""

    def __init__(self, tensors: dict[str, np.ndarray], version: int = 0):
        self.tensors = {k: np.asarray(v, dtype=float) for k, v in tensors.items()}
        self.version = version

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __len__(self) -> int:
        return len(self.tensors)

    def size(self) -> int:
        """Total scalar parameter count."""
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "ParamSet":
        return ParamSet({k: v.copy() for k, v in self.tensors.items()}, self.version)

    def flat(self) -> np.ndarray:
        """All entries concatenated in sorted-name order."""
        return np.concatenate([self.tensors[k].ravel() for k in self.names()])

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def replaced(self, tensors: dict[str, np.ndarray]) -> "ParamSet":
        """A new set with the given tensors and the version bumped."""
        return ParamSet(tensors, self.version + 1)


def accumulate_grads(
    total: dict[str, np.ndarray], part: dict[str, np.ndarray]
) -> dict[str, np.ndarray]:
    """Add ``part`` into ``total`` in place (creating missing entries)."""
    for k, g in part.items():
        if k in total:
            total[k] = total[k] + g
        else:
            total[k] = np.array(g, dtype=float)
    return total


class Adam:
    """Adam with per-tensor moments; ``step`` is purely functional on params."""

    def __init__(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: ParamSet, grads: dict[str, np.ndarray]) -> ParamSet:
        """One update; rejects non-finite gradients before touching state."""
        missing = set(params.tensors) - set(grads)
        if missing:
            raise KeyError(f"gradients missing for tensors: {sorted(missing)}")
        for name in params.names():
            if not np.all(np.isfinite(grads[name])):
                raise GradientError(
                    f"non-finite gradient in tensor {name!r}; step aborted"
                )
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        out = {}
        for name in params.names():
            g = np.asarray(grads[name], dtype=float)
            m = self._m.get(name)
            v = self._v.get(name)
            m = (1.0 - b1) * g if m is None else b1 * m + (1.0 - b1) * g
            v = (1.0 - b2) * g * g if v is None else b2 * v + (1.0 - b2) * g * g
            self._m[name] = m
            self._v[name] = v
            step = self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            out[name] = params[name] - step
        return params.replaced(out)


_CHECKPOINT_FORMAT = "edgesched-params"


def save_params(path, params: ParamSet) -> None:
    """Write a parameter set as JSON lines (header + one line per tensor)."""
    with open(path, "w") as fh:
        header = {
            "format": _CHECKPOINT_FORMAT,
            "version": params.version,
            "count": len(params),
        }
        fh.write(json.dumps(header) + "\n")
        for name in params.names():
            t = params[name]
            row = {
                "name": name,
                "shape": list(t.shape),
                "data": [float(x) for x in t.ravel()],
            }
            fh.write(json.dumps(row) + "\n")


def load_params(path) -> ParamSet:
    """Read a checkpoint written by :func:`save_params`."""
    with open(path) as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line 1: invalid JSON: {exc}") from exc
        if not isinstance(header, dict) or header.get("format") != _CHECKPOINT_FORMAT:
            raise ParseError(f"{path}: line 1: not a parameter checkpoint")
        tensors = {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            try:
                data = np.asarray(row["data"], dtype=float).reshape(row["shape"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}: line {lineno}: bad tensor: {exc}") from exc
            tensors[row["name"]] = data
    if len(tensors) != header.get("count"):
        raise ParseError(
            f"{path}: header promises {header.get('count')} tensors, "
            f"found {len(tensors)}"
        )
    return ParamSet(tensors, version=int(header.get("version", 0)))
