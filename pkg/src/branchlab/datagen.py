"""Imitation dataset collection: pseudocost-driven episodes with a strong
branching expert queried at random nodes, plus dataset file io and top-k
accuracy.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from .bnb import Episode, EpisodeConfig, Observation
from .features import BipartiteState
from .gcnn import GcnnParams, forward
from .milp import GeneratorConfig, MilpInstance, generate, serialize_native
from .policies import PseudocostPolicy, strong_branching_scores

_MAGIC = b"BLDS"
_VERSION = 1


class EmptyDatasetError(RuntimeError):
    """Collection produced no samples (e.g. every root solved integrally)."""


@dataclass
class CollectionConfig:
    time_limit: float
    p_sb: float
    target_samples: int
    seed: int
    instances: list[MilpInstance] | None = None
    generator: GeneratorConfig | None = None
    generator_count: int = 10
    clock: str = "virtual"  # virtual keeps collection byte-reproducible
    node_limit: int | None = None
    max_passes: int = 1000

    def __post_init__(self):
        if not (0.0 <= self.p_sb <= 1.0):
            raise ValueError("p_sb must lie in [0, 1]")
        if self.target_samples < 1:
            raise ValueError("target_samples must be at least 1")
        if self.instances is None and self.generator is None:
            raise ValueError("provide instances or a generator config")

    def resolve_instances(self) -> list[MilpInstance]:
        if self.instances is not None:
            return list(self.instances)
        cfg = self.generator
        return [
            generate(replace(cfg, seed=cfg.seed + i))
            for i in range(self.generator_count)
        ]

    def digest(self, instances) -> str:
        payload = {
            "time_limit": self.time_limit,
            "p_sb": self.p_sb,
            "target_samples": self.target_samples,
            "seed": self.seed,
            "clock": self.clock,
            "node_limit": self.node_limit,
            "instances": [
                hashlib.sha256(serialize_native(i).encode()).hexdigest()
                for i in instances
            ],
        }
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()
        ).hexdigest()


@dataclass
class Sample:
    state: BipartiteState
    candidates: list[int]
    expert_action: int
    sb_scores: np.ndarray | None
    provenance: dict

    def __post_init__(self):
        if self.expert_action not in self.candidates:
            raise ValueError("expert action must be one of the candidates")


@dataclass
class Dataset:
    samples: list[Sample]
    train_idx: np.ndarray
    valid_idx: np.ndarray
    config_digest: str
    node_visits: int = 0

    def train_samples(self):
        return [self.samples[i] for i in self.train_idx]

    def valid_samples(self):
        return [self.samples[i] for i in self.valid_idx]

    def __len__(self):
        return len(self.samples)


def _split_indices(n: int, rng: np.random.Generator):
    """Deterministic shuffle, then a 99/1 train/valid split."""
    order = rng.permutation(n)
    n_valid = max(1, int(round(0.01 * n))) if n > 1 else 0
    return np.sort(order[n_valid:]), np.sort(order[:n_valid])


def collect(config: CollectionConfig) -> Dataset:
    """Run collection episodes round-robin until the sample target is met."""
    instances = config.resolve_instances()
    digest = config.digest(instances)
    coin = np.random.default_rng(config.seed)
    samples: list[Sample] = []
    node_visits = 0
    passes = 0
    while len(samples) < config.target_samples and passes < config.max_passes:
        collected_this_pass = 0
        for idx, inst in enumerate(instances):
            if len(samples) >= config.target_samples:
                break
            episode_seed = config.seed + 1000 * passes + idx
            got, visits = _collect_episode(
                inst, config, coin, episode_seed, digest, samples
            )
            collected_this_pass += got
            node_visits += visits
        passes += 1
        if collected_this_pass == 0:
            break
    if not samples:
        raise EmptyDatasetError(
            f"no samples collected (p_sb={config.p_sb}, "
            f"{len(instances)} instances, {node_visits} node visits)"
        )
    samples = samples[: config.target_samples]
    split_rng = np.random.default_rng(int(digest[:16], 16))
    train_idx, valid_idx = _split_indices(len(samples), split_rng)
    return Dataset(
        samples=samples,
        train_idx=train_idx,
        valid_idx=valid_idx,
        config_digest=digest,
        node_visits=node_visits,
    )


def _collect_episode(instance, config, coin, episode_seed, digest, sink):
    driver = PseudocostPolicy()
    driver.begin_episode(instance, episode_seed)
    episode = Episode(instance, EpisodeConfig(
        time_limit=config.time_limit,
        node_limit=config.node_limit,
        seed=episode_seed,
        clock=config.clock,
    ))
    outcome = episode.reset()
    got = visits = 0
    while isinstance(outcome, Observation):
        visits += 1
        node = episode.nodes[outcome.focus_node_id]
        if coin.random() < config.p_sb:
            scored = strong_branching_scores(episode, node, outcome.candidates)
            action = scored.chosen
            sink.append(Sample(
                state=outcome.state,
                candidates=list(outcome.candidates),
                expert_action=action,
                sb_scores=np.asarray(scored.scores, dtype=np.float64),
                provenance={"instance": instance.name, "node": node.id,
                            "config": digest},
            ))
            got += 1
        else:
            action = driver.select(episode, outcome)
        outcome = episode.step(action)
        if episode.last_branch_info:
            driver.observe_branch(episode.last_branch_info)
        if len(sink) >= config.target_samples:
            break
    return got, visits


# ---------------------------------------------------------------------------
# top-k accuracy
# ---------------------------------------------------------------------------


def top_k_accuracy(params: GcnnParams, dataset, ks=(1, 3, 5, 10)) -> dict:
    """Percentage of samples whose expert action ranks in the top k logits.

    Ties rank by lower candidate index; k beyond the candidate count always
    hits. ``dataset`` may be a Dataset or any iterable of samples.
    """
    samples = dataset.samples if isinstance(dataset, Dataset) else list(dataset)
    if not samples:
        raise ValueError("no samples to score")
    hits = {k: 0 for k in ks}
    for s in samples:
        logits = forward(params, s.state)
        scores = logits[np.asarray(s.candidates, dtype=np.int64)]
        pos = s.candidates.index(s.expert_action)
        rank = 0
        for q, sc in enumerate(scores):
            if sc > scores[pos] or (sc == scores[pos] and q < pos):
                rank += 1
        for k in ks:
            if rank < k:
                hits[k] += 1
    return {k: 100.0 * hits[k] / len(samples) for k in ks}


# ---------------------------------------------------------------------------
# dataset file io
# ---------------------------------------------------------------------------


def _pack_array(arr, dtype) -> bytes:
    return np.ascontiguousarray(arr, dtype=dtype).tobytes()


def write_dataset(dataset: Dataset, path: str):
    body = bytearray()
    body += _MAGIC
    body += struct.pack("<IIII", _VERSION, len(dataset.samples),
                        len(dataset.train_idx), len(dataset.valid_idx))
    body += bytes.fromhex(dataset.config_digest)
    body += _pack_array(dataset.train_idx, "<u4")
    body += _pack_array(dataset.valid_idx, "<u4")
    for s in dataset.samples:
        rec = bytearray()
        name = s.provenance.get("instance", "").encode()
        rec += struct.pack("<H", len(name)) + name
        rec += struct.pack("<I", int(s.provenance.get("node", 0)))
        st = s.state
        has_sb = s.sb_scores is not None
        rec += struct.pack("<IIIIB", st.m, st.n, st.nnz, len(s.candidates),
                           1 if has_sb else 0)
        rec += _pack_array(st.C, "<f8")
        rec += _pack_array(st.edge_row, "<u4")
        rec += _pack_array(st.edge_col, "<u4")
        rec += _pack_array(st.edge_val, "<f8")
        rec += _pack_array(st.V, "<f8")
        rec += _pack_array(np.asarray(s.candidates), "<u4")
        rec += struct.pack("<I", s.expert_action)
        if has_sb:
            rec += _pack_array(s.sb_scores, "<f8")
        body += struct.pack("<Q", len(rec)) + rec
    body += hashlib.sha256(bytes(body)).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(body))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise ValueError("dataset file is truncated")
        out = self.blob[self.off:self.off + n]
        self.off += n
        return out

    def array(self, dtype, count):
        item = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(item * count), dtype=dtype).copy()


def read_dataset(path: str) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 + 16 + 32 + 32 or blob[:4] != _MAGIC:
        raise ValueError("not a dataset file (bad magic)")
    if hashlib.sha256(blob[:-32]).digest() != blob[-32:]:
        raise ValueError("dataset file is corrupt (digest mismatch)")
    r = _Reader(blob[4:-32])
    version, n_samples, n_train, n_valid = struct.unpack("<IIII", r.take(16))
    if version != _VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    digest = r.take(32).hex()
    train_idx = r.array("<u4", n_train).astype(np.int64)
    valid_idx = r.array("<u4", n_valid).astype(np.int64)
    samples = []
    for _ in range(n_samples):
        (rec_len,) = struct.unpack("<Q", r.take(8))
        rec = _Reader(r.take(rec_len))
        (name_len,) = struct.unpack("<H", rec.take(2))
        name = rec.take(name_len).decode()
        (node_id,) = struct.unpack("<I", rec.take(4))
        m, n, nnz, ncand, has_sb = struct.unpack("<IIIIB", rec.take(17))
        C = rec.array("<f8", m * 5).reshape(m, 5)
        erow = rec.array("<u4", nnz).astype(np.int64)
        ecol = rec.array("<u4", nnz).astype(np.int64)
        eval_ = rec.array("<f8", nnz)
        V = rec.array("<f8", n * 19).reshape(n, 19)
        cands = rec.array("<u4", ncand).astype(np.int64).tolist()
        (expert,) = struct.unpack("<I", rec.take(4))
        sb = rec.array("<f8", ncand) if has_sb else None
        samples.append(Sample(
            state=BipartiteState(C=C, edge_row=erow, edge_col=ecol,
                                 edge_val=eval_, V=V),
            candidates=[int(c) for c in cands],
            expert_action=int(expert),
            sb_scores=sb,
            provenance={"instance": name, "node": int(node_id),
                        "config": digest},
        ))
    if r.off != len(r.blob):
        raise ValueError("dataset file has trailing bytes")
    return Dataset(samples=samples, train_idx=train_idx, valid_idx=valid_idx,
                   config_digest=digest)
