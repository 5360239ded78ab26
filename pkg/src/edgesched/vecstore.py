"""Per-server semantic vector store.

Each edge server keeps question and answer vectors from past requests in a
store searched through an IVF-flat index: a seeded k-means partitions the
vectors into inverted lists, queries probe the nearest lists until enough
candidates are gathered, and the candidates are then scored exactly.  With a
single list the index degenerates to an exact scan.

Every record carries a cache value — a running estimate of the quality-minus-
delay payoff of reusing it — which drives both retrieval filtering and the
periodic eviction sweep that drops below-average records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EmptyCorrelationError, ParseError
from .seeding import DOMAIN_INDEX, substream

__all__ = [
    "RecordKind",
    "VectorRecord",
    "CorrelationEntry",
    "CorrelationSet",
    "IvfIndex",
    "VectorStore",
    "filter_best",
    "clamp_negative",
    "write_snapshot",
    "read_snapshot",
]


class RecordKind(IntEnum):
    QUESTION = 1
    ANSWER = 2


def clamp_negative(x: float, floor: float = -1e-6) -> float:
    """Force ``x`` strictly below zero; non-negative inputs become ``floor``."""
    return x if x < 0.0 else floor


@dataclass(eq=False)
class VectorRecord:
    """A stored vector plus its bookkeeping fields."""

    rid: int
    vec: np.ndarray
    kind: RecordKind
    freq: int
    cache_value: float  # strictly negative
    inserted_at: int
    pair_id: int  # links the question/answer halves of one exchange


@dataclass(frozen=True)
class CorrelationEntry:
    """One search hit: the record and its distance to the query."""

    record: VectorRecord
    distance: float

    @property
    def similarity(self) -> float:
        """Bounded similarity in (0, 1]: 1 / (1 + distance)."""
        return 1.0 / (1.0 + self.distance)


class CorrelationSet:
    """Search results for one query, ordered by ascending distance."""

    def __init__(self, entries: Sequence[CorrelationEntry]):
        self.entries = list(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i) -> CorrelationEntry:
        return self.entries[i]

    def best(self) -> CorrelationEntry | None:
        """Nearest entry, or None when empty."""
        return self.entries[0] if self.entries else None

    def matrix(self, width: int) -> np.ndarray:
        """A (3, width) summary: similarity, kind code, and use count per hit.

        Missing columns (fewer hits than ``width``) are zero, which no real
        record can produce (similarity > 0, kind >= 1).
        """
        out = np.zeros((3, width))
        for j, entry in enumerate(self.entries[:width]):
            out[0, j] = entry.similarity
            out[1, j] = float(entry.record.kind)
            out[2, j] = float(entry.record.freq)
        return out


def filter_best(
    correlations: CorrelationSet, value_weight: float, freq_weight: float
) -> CorrelationEntry:
    """Pick the entry maximizing ``value_weight * similarity + freq_weight * freq``.

    Ties go to the entry nearest the query (the set is distance-ordered and
    argmax keeps the first maximum).  Raises :class:`EmptyCorrelationError`
    on an empty set.
    """
    if not correlations.entries:
        raise EmptyCorrelationError("cannot filter an empty correlation set")
    scores = np.array(
        [
            value_weight * e.similarity + freq_weight * e.record.freq
            for e in correlations.entries
        ]
    )
    return correlations.entries[int(np.argmax(scores))]


def _nearest_centroid(centroids: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Index of the closest centroid for each row of ``vecs``."""
    # ||v - c||^2 = ||v||^2 - 2 v.c + ||c||^2; the ||v||^2 term is constant per row.
    d2 = (centroids * centroids).sum(axis=1)[None, :] - 2.0 * vecs @ centroids.T
    return np.argmin(d2, axis=1)


def _lloyd_kmeans(
    vecs: np.ndarray, k: int, rng: np.random.Generator, iters: int = 25
) -> tuple[np.ndarray, np.ndarray]:
    """Plain Lloyd's k-means with seeded initialization from k data points.

    Empty clusters keep their previous centroid.  Returns (centroids,
    assignments).
    """
    n = vecs.shape[0]
    if k > n:
        raise ValueError(f"cannot build {k} clusters from {n} vectors")
    start = rng.choice(n, size=k, replace=False)
    centroids = vecs[start].copy()
    assign = _nearest_centroid(centroids, vecs)
    for _ in range(iters):
        new_centroids = centroids.copy()
        for j in range(k):
            members = vecs[assign == j]
            if members.shape[0]:
                new_centroids[j] = members.mean(axis=0)
        new_assign = _nearest_centroid(new_centroids, vecs)
        moved = not np.array_equal(new_assign, assign)
        centroids, assign = new_centroids, new_assign
        if not moved:
            break
    return centroids, assign


@dataclass
class IvfIndex:
    """Inverted-list index state: coarse centroids and per-list record ids."""

    centroids: np.ndarray  # (nlist, dim)
    lists: list[list[int]]  # record ids per inverted list

    @property
    def nlist(self) -> int:
        return self.centroids.shape[0]

    def add(self, rid: int, vec: np.ndarray) -> None:
        """Assign one new record to its nearest list."""
        li = int(_nearest_centroid(self.centroids, vec[None, :])[0])
        self.lists[li].append(rid)

    def probe_order(self, query: np.ndarray) -> np.ndarray:
        """List indices sorted by ascending centroid distance to ``query``."""
        d2 = ((self.centroids - query[None, :]) ** 2).sum(axis=1)
        return np.argsort(d2, kind="stable")


class VectorStore:
    """One server's record store with IVF search and cache-value upkeep."""

    def __init__(
        self,
        dim: int,
        nlist: int = 128,
        min_candidates: int = 10,
        rebuild_every: int = 1000,
        seed: int = 0,
        server: int = 0,
    ):
        if dim < 1:
            raise ConfigError(f"dim must be >= 1, got {dim}")
        if nlist < 1:
            raise ConfigError(f"nlist must be >= 1, got {nlist}")
        if min_candidates < 1:
            raise ConfigError(f"min_candidates must be >= 1, got {min_candidates}")
        if rebuild_every < 1:
            raise ConfigError(f"rebuild_every must be >= 1, got {rebuild_every}")
        self.dim = dim
        self.nlist = nlist
        self.min_candidates = min_candidates
        self.rebuild_every = rebuild_every
        self.seed = seed
        self.server = server
        self._records: dict[int, VectorRecord] = {}
        self._pairs: dict[int, dict[RecordKind, int]] = {}
        self._next_rid = 0
        self._next_pair = 0
        self._index: IvfIndex | None = None
        self._inserts_since_build = 0
        self._builds = 0
        self.eviction_log: list[tuple[int, int]] = []  # (slot, dropped)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, rid: int) -> bool:
        return rid in self._records

    @property
    def index_builds(self) -> int:
        """How many times the coarse quantizer has been retrained."""
        return self._builds

    def record(self, rid: int) -> VectorRecord:
        return self._records[rid]

    def records(self) -> Iterable[VectorRecord]:
        return self._records.values()

    # -- insertion ---------------------------------------------------------

    def insert_qa(
        self,
        question_vec: np.ndarray,
        answer_vec: np.ndarray,
        slot: int,
        initial_cache_value: float,
    ) -> tuple[int, int]:
        """Store a question/answer pair; returns the two record ids.

        Both records share a pair id and start with the same strictly
        negative cache value and a use count of zero.
        """
        for name, vec in (("question", question_vec), ("answer", answer_vec)):
            if vec.shape != (self.dim,):
                raise ConfigError(
                    f"{name} vector shape {vec.shape} != ({self.dim},)"
                )
        value = clamp_negative(float(initial_cache_value))
        pair = self._next_pair
        self._next_pair += 1
        rids = []
        for vec, kind in (
            (question_vec, RecordKind.QUESTION),
            (answer_vec, RecordKind.ANSWER),
        ):
            rec = VectorRecord(
                rid=self._next_rid,
                vec=np.array(vec, dtype=float),
                kind=kind,
                freq=0,
                cache_value=value,
                inserted_at=slot,
                pair_id=pair,
            )
            self._records[rec.rid] = rec
            self._pairs.setdefault(pair, {})[kind] = rec.rid
            self._next_rid += 1
            rids.append(rec.rid)
            if self._index is not None:
                self._index.add(rec.rid, rec.vec)
        self._inserts_since_build += 2
        if self._index is None or self._inserts_since_build >= self.rebuild_every:
            self.rebuild_index()
        return rids[0], rids[1]

    # -- pair lookups ------------------------------------------------------

    def pair_partner(self, record: VectorRecord) -> VectorRecord | None:
        """The other half of the record's pair, if it still exists."""
        want = (
            RecordKind.ANSWER
            if record.kind == RecordKind.QUESTION
            else RecordKind.QUESTION
        )
        return self.pair_record(record.pair_id, want)

    def pair_record(self, pair_id: int, kind: RecordKind) -> VectorRecord | None:
        rid = self._pairs.get(pair_id, {}).get(kind)
        return self._records.get(rid) if rid is not None else None

    # -- search ------------------------------------------------------------

    def _score(self, rids: Sequence[int], query: np.ndarray, width: int) -> CorrelationSet:
        if not rids:
            return CorrelationSet([])
        rid_arr = np.asarray(rids)
        vecs = np.stack([self._records[r].vec for r in rids])
        dists = np.linalg.norm(vecs - query[None, :], axis=1)
        order = np.lexsort((rid_arr, dists))[:width]  # distance ties break by rid
        entries = [
            CorrelationEntry(record=self._records[int(rid_arr[i])], distance=float(dists[i]))
            for i in order
        ]
        return CorrelationSet(entries)

    def exact_knn(self, query: np.ndarray, width: int) -> CorrelationSet:
        """Exact nearest neighbours by full scan; the reference for the index."""
        self._check_query(query, width)
        return self._score(list(self._records.keys()), query, width)

    def query(self, query: np.ndarray, width: int) -> CorrelationSet:
        """Approximate nearest neighbours through the IVF index.

        Probes inverted lists in ascending centroid distance until at least
        ``max(min_candidates, width)`` candidates are collected, then scores
        those candidates exactly.
        """
        self._check_query(query, width)
        if not self._records:
            return CorrelationSet([])
        index = self._index
        if index is None:  # no insert yet since construction/restore
            return self._score(list(self._records.keys()), query, width)
        target = max(self.min_candidates, width)
        candidates: list[int] = []
        for li in index.probe_order(query):
            candidates.extend(index.lists[li])
            if len(candidates) >= target:
                break
        return self._score(candidates, query, width)

    def _check_query(self, query: np.ndarray, width: int) -> None:
        if query.shape != (self.dim,):
            raise ConfigError(f"query shape {query.shape} != ({self.dim},)")
        if width < 1:
            raise ConfigError(f"width must be >= 1, got {width}")

    # -- index maintenance -------------------------------------------------

    def rebuild_index(self) -> IvfIndex | None:
        """Re-cluster all records into fresh inverted lists."""
        self._inserts_since_build = 0
        if not self._records:
            self._index = None
            return None
        rids = list(self._records.keys())
        vecs = np.stack([self._records[r].vec for r in rids])
        k = min(self.nlist, len(rids))
        rng = substream(self.seed, DOMAIN_INDEX, self.server, self._builds)
        self._builds += 1
        centroids, assign = _lloyd_kmeans(vecs, k, rng)
        lists: list[list[int]] = [[] for _ in range(k)]
        for rid, li in zip(rids, assign):
            lists[int(li)].append(rid)
        self._index = IvfIndex(centroids=centroids, lists=lists)
        return self._index

    # -- cache-value dynamics ----------------------------------------------

    def update_cache_value(self, record: VectorRecord, q: float, d: float) -> float:
        """Refresh a record after a cache hit: halve-toward ``q - d``, bump freq.

        The new value is the mean of the old value and the observed payoff
        ``q - d``, so the value decays geometrically toward the recent payoff.
        """
        if self._records.get(record.rid) is not record:
            raise KeyError(f"record {record.rid} is not in this store")
        if q >= 0.0:
            raise ValueError(f"satisfaction must be strictly negative, got {q}")
        if d <= 0.0:
            raise ValueError(f"delay must be strictly positive, got {d}")
        record.cache_value = (record.cache_value + (q - d)) / 2.0
        record.freq += 1
        return record.cache_value

    def mean_cache_value(self) -> float:
        if not self._records:
            raise EmptyCorrelationError("store is empty")
        return float(np.mean([r.cache_value for r in self._records.values()]))

    def evict(self, slot: int) -> int:
        """Drop records with below-mean cache value; returns how many fell.

        Records exactly at the mean survive.  The index is rebuilt from the
        survivors.
        """
        if not self._records:
            return 0
        mean = self.mean_cache_value()
        doomed = [r for r in self._records.values() if r.cache_value < mean]
        for rec in doomed:
            del self._records[rec.rid]
            kinds = self._pairs.get(rec.pair_id)
            if kinds is not None:
                kinds.pop(rec.kind, None)
                if not kinds:
                    del self._pairs[rec.pair_id]
        self.rebuild_index()
        self.eviction_log.append((slot, len(doomed)))
        return len(doomed)


# -- snapshots -------------------------------------------------------------

_SNAPSHOT_FORMAT = "edgesched-store"


def write_snapshot(store: VectorStore, path) -> int:
    """Persist a store's records as JSON lines; returns the record count."""
    with open(path, "w") as fh:
        header = {
            "format": _SNAPSHOT_FORMAT,
            "dim": store.dim,
            "next_rid": store._next_rid,
            "next_pair": store._next_pair,
        }
        fh.write(json.dumps(header) + "\n")
        for rec in store.records():
            row = {
                "rid": rec.rid,
                "vec": [float(x) for x in rec.vec],
                "kind": int(rec.kind),
                "freq": rec.freq,
                "cache_value": rec.cache_value,
                "inserted_at": rec.inserted_at,
                "pair_id": rec.pair_id,
            }
            fh.write(json.dumps(row) + "\n")
    return len(store)


def read_snapshot(
    path,
    nlist: int = 128,
    min_candidates: int = 10,
    rebuild_every: int = 1000,
    seed: int = 0,
    server: int = 0,
) -> VectorStore:
    """Restore a store from :func:`write_snapshot` output and rebuild its index."""
    with open(path) as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line 1: invalid JSON: {exc}") from exc
        if not isinstance(header, dict) or header.get("format") != _SNAPSHOT_FORMAT:
            raise ParseError(f"{path}: line 1: not a store snapshot header")
        store = VectorStore(
            dim=int(header["dim"]),
            nlist=nlist,
            min_candidates=min_candidates,
            rebuild_every=rebuild_every,
            seed=seed,
            server=server,
        )
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            try:
                vec = np.asarray(row["vec"], dtype=float)
                rec = VectorRecord(
                    rid=int(row["rid"]),
                    vec=vec,
                    kind=RecordKind(int(row["kind"])),
                    freq=int(row["freq"]),
                    cache_value=float(row["cache_value"]),
                    inserted_at=int(row["inserted_at"]),
                    pair_id=int(row["pair_id"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}: line {lineno}: bad record: {exc}") from exc
            if vec.shape != (store.dim,):
                raise ParseError(
                    f"{path}: line {lineno}: vector dimension {vec.shape} "
                    f"!= ({store.dim},)"
                )
            if rec.cache_value >= 0.0:
                raise ParseError(
                    f"{path}: line {lineno}: cache_value must be negative"
                )
            store._records[rec.rid] = rec
            store._pairs.setdefault(rec.pair_id, {})[rec.kind] = rec.rid
    store._next_rid = int(header["next_rid"])
    store._next_pair = int(header["next_pair"])
    store.rebuild_index()
    return store
