"""Desk-scale synthetic ground truth for source selection.

A world is a family of Gaussian-cluster classification domains plus a frozen
random rectified affine map standing in for the reference feature extractor.
Every domain is split four ways (source-train / source-val / target-train /
target-val, with the target split a small fraction of its partition), and a
tiny linear-representation + softmax-head model trained by mini-batch SGD
produces real transfer outcomes:

    improvement = accuracy(fine-tuned from source) - accuracy(from scratch)

Fine-tuning replaces the head and trains it at the full learn rate while the
representation layer moves at a reduced multiple of it. Everything is a pure
function of (seed, configs): each training run draws from its own RNG stream
derived from the world seed and the run's names, so results are independent
of scheduling order. Negative transfer is possible and intentionally not
clamped away.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .calibrate import (
    EvaluationConfig,
    gain_table,
    picks_to_best,
    spearman_or_zero,
)
from .core import (
    DatasetProfile,
    DivergenceKind,
    EmbeddingMatrix,
    EstimatorConfig,
    ImprovementRecord,
    Summarizer,
)
from .errors import BadSpec, UnknownName
from .estimator import (
    baseline_ranking,
    merge_profiles,
    profile_distance,
    score_sources,
    select,
)
from .io import fmt, write_improvements_csv
from .summarize import profile_from_matrix


def _stream(seed: int, *tags) -> np.random.Generator:
    """Independent generator for one run, stable across platforms and order."""
    keys = [int(seed)]
    for tag in tags:
        digest = hashlib.sha256(repr(tag).encode()).digest()[:8]
        keys.append(int.from_bytes(digest, "little"))
    return np.random.default_rng(np.random.SeedSequence(keys))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


# -- world ------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleConfig:
    """Split and trainer hyperparameters."""

    target_fraction: float = 0.1
    finetune_multiplier: float = 0.1
    learn_rate: float = 0.1
    epochs: int = 10
    batch: int = 32
    hidden_dim: int = 8
    source_epochs: int | None = None  # defaults to epochs

    def __post_init__(self):
        if not (0.0 < self.target_fraction <= 1.0):
            raise ValueError("target_fraction must lie in (0, 1]")
        if not (0.0 <= self.finetune_multiplier <= 1.0):
            raise ValueError("finetune_multiplier must lie in [0, 1]")
        if self.learn_rate <= 0.0:
            raise ValueError("learn_rate must be > 0")
        if self.epochs < 0 or (self.source_epochs is not None and self.source_epochs < 0):
            raise ValueError("epoch counts must be >= 0")
        if self.batch < 1 or self.hidden_dim < 1:
            raise ValueError("batch and hidden_dim must be >= 1")

    @property
    def effective_source_epochs(self) -> int:
        return self.epochs if self.source_epochs is None else self.source_epochs


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """One domain: class centroids in feature space plus an item budget."""

    name: str
    n_classes: int
    n_items: int
    centroids: np.ndarray  # (n_classes, feature_dim)
    spread: float = 1.0

    def __post_init__(self):
        arr = _frozen(np.array(self.centroids, dtype=np.float64, copy=True))
        if arr.ndim != 2 or arr.shape[0] != self.n_classes:
            raise BadSpec(f"domain {self.name!r}: centroids must be "
                          f"(n_classes, feature_dim), got {arr.shape}")
        object.__setattr__(self, "centroids", arr)
        if self.spread <= 0.0:
            raise BadSpec(f"domain {self.name!r}: spread must be > 0")


@dataclass(frozen=True, eq=False)
class WorldSpec:
    """Domain layout: the first n_sources domains are the source pool.

    The remaining domains are the evaluation targets; when every domain is a
    source, every domain is also a target. All domains get all four splits
    either way, so self-transfer stays expressible.
    """

    domains: tuple[DomainSpec, ...]
    feature_dim: int = 16
    embed_dim: int = 32
    n_sources: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "domains", tuple(self.domains))
        if self.feature_dim < 1 or self.embed_dim < 1:
            raise BadSpec("feature_dim and embed_dim must be >= 1")
        n_sources = len(self.domains) if self.n_sources is None else self.n_sources
        if not (1 <= n_sources <= len(self.domains)):
            raise BadSpec("n_sources must lie in [1, number of domains]")
        object.__setattr__(self, "n_sources", n_sources)


@dataclass(frozen=True, eq=False)
class ReferenceExtractor:
    """Frozen random affine map into embedding space, negatives clamped to 0."""

    weights: np.ndarray  # (feature_dim, embed_dim)
    offset: np.ndarray   # (embed_dim,)
    extractor_id: str

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x @ self.weights + self.offset, 0.0)


@dataclass(frozen=True, eq=False)
class SplitData:
    x: np.ndarray
    y: np.ndarray

    @property
    def items(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True, eq=False)
class DomainData:
    spec: DomainSpec
    source_train: SplitData
    source_val: SplitData
    target_train: SplitData
    target_val: SplitData


@dataclass(frozen=True, eq=False)
class OracleWorld:
    """Fully realized world; identical seeds give bit-identical worlds."""

    seed: int
    spec: WorldSpec
    domains: tuple[DomainData, ...]
    extractor: ReferenceExtractor
    target_fraction: float

    @cached_property
    def _by_name(self) -> dict[str, DomainData]:
        return {d.spec.name: d for d in self.domains}

    def domain(self, name: str) -> DomainData:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownName(f"no domain named {name!r}") from None

    def source_names(self) -> list[str]:
        return [d.spec.name for d in self.domains[:self.spec.n_sources]]

    def target_names(self) -> list[str]:
        if self.spec.n_sources == len(self.domains):
            return [d.spec.name for d in self.domains]
        return [d.spec.name for d in self.domains[self.spec.n_sources:]]


def generate_world(seed: int, spec: WorldSpec,
                   cfg: OracleConfig | None = None) -> OracleWorld:
    """Sample items for every domain and split them four ways.

    Per domain: items are Gaussian clusters around the class centroids,
    shuffled, then cut into four equal partitions. Partition 1 trains the
    source model, partition 2 validates it, the first target_fraction of
    partition 3 is the transfer target's training set, and partition 4 is the
    target validation set.
    """
    cfg = cfg if cfg is not None else OracleConfig()
    if len(spec.domains) < 2:
        raise BadSpec("world needs at least two domains")
    names = [d.name for d in spec.domains]
    if len(set(names)) != len(names):
        raise BadSpec("domain names must be distinct")
    tf = cfg.target_fraction
    domains = []
    for dom in spec.domains:
        if dom.n_classes < 2:
            raise BadSpec(f"domain {dom.name!r} needs at least two classes")
        if dom.centroids.shape[1] != spec.feature_dim:
            raise BadSpec(f"domain {dom.name!r}: centroid dim "
                          f"{dom.centroids.shape[1]} != feature_dim {spec.feature_dim}")
        quarter = dom.n_items // 4
        target_items = math.floor(tf * quarter)
        if target_items < 1:
            raise BadSpec(f"domain {dom.name!r}: {dom.n_items} items leave an "
                          "empty target split at this target_fraction")
        rng = _stream(seed, "domain", dom.name)
        labels = np.arange(dom.n_items) % dom.n_classes
        x = dom.centroids[labels] + dom.spread * rng.standard_normal(
            (dom.n_items, spec.feature_dim))
        perm = rng.permutation(dom.n_items)
        x, labels = x[perm], labels[perm]

        def cut(lo, hi):
            y = labels[lo:hi].copy()
            y.flags.writeable = False
            return SplitData(x=_frozen(x[lo:hi]), y=y)

        domains.append(DomainData(
            spec=dom,
            source_train=cut(0, quarter),
            source_val=cut(quarter, 2 * quarter),
            target_train=cut(2 * quarter, 2 * quarter + target_items),
            target_val=cut(3 * quarter, 4 * quarter),
        ))

    ext_rng = _stream(seed, "extractor")
    weights = ext_rng.normal(0.0, 1.0 / math.sqrt(spec.feature_dim),
                             (spec.feature_dim, spec.embed_dim))
    offset = ext_rng.normal(0.0, 0.5, spec.embed_dim)
    extractor = ReferenceExtractor(weights=_frozen(weights), offset=_frozen(offset),
                                   extractor_id=f"oracle-ref-{seed}")
    return OracleWorld(seed=seed, spec=spec, domains=tuple(domains),
                       extractor=extractor, target_fraction=tf)


def default_world_spec(seed: int, n_sources: int = 6, n_targets: int = 8,
                       feature_dim: int = 16, embed_dim: int = 32,
                       n_groups: int = 2, min_items: int = 240,
                       max_items: int = 9600, group_scale: float = 2.0,
                       domain_scale: float = 1.0, class_scale: float = 1.0,
                       spread: float = 1.6) -> WorldSpec:
    """Random world layout: disjoint source and target domains in shared groups.

    Domains in the same group share jittered class anchors, so in-group
    transfer works broadly and source size decides among usable candidates,
    while cross-group transfer tends to hurt. Source sizes are log-spaced and
    dealt round-robin so every group spans tiny to large (shuffled within a
    group per seed); that keeps both failure modes alive: the largest source
    is in the wrong group for some targets, and the nearest source is
    sometimes the tiny one.
    """
    rng = _stream(seed, "worldspec")
    groups = []
    for _ in range(n_groups):
        center = rng.normal(0.0, group_scale, feature_dim)
        n_classes = int(rng.integers(5, 9))
        anchors = center + rng.normal(0.0, class_scale, (n_classes, feature_dim))
        groups.append(anchors)

    n_domains = n_sources + n_targets
    sizes = np.empty(n_domains, dtype=int)
    source_sizes = np.geomspace(min_items, max_items, n_sources).astype(int)
    for g in range(n_groups):
        members = [i for i in range(n_sources) if i % n_groups == g]
        ranks = [g + j * n_groups for j in range(len(members))]
        rng.shuffle(ranks)
        for i, rank in zip(members, ranks):
            sizes[i] = source_sizes[rank]
    target_sizes = np.geomspace(min_items, max_items, n_targets).astype(int)
    target_sizes = target_sizes[rng.permutation(n_targets)]
    sizes[n_sources:] = target_sizes

    domains = []
    for i in range(n_domains):
        anchors = groups[i % n_groups]
        # Per-domain jitter magnitude varies, so group-mates sit at genuinely
        # different distances from a target instead of one indistinct blob.
        jitter = rng.uniform(0.3, domain_scale)
        centroids = anchors + rng.normal(0.0, jitter, anchors.shape)
        domains.append(DomainSpec(name=f"dom{i:02d}", n_classes=anchors.shape[0],
                                  n_items=int(sizes[i]), centroids=centroids,
                                  spread=spread))
    return WorldSpec(domains=tuple(domains), feature_dim=feature_dim,
                     embed_dim=embed_dim, n_sources=n_sources)


def default_world(seed: int, cfg: OracleConfig | None = None,
                  **spec_kwargs) -> OracleWorld:
    return generate_world(seed, default_world_spec(seed, **spec_kwargs), cfg)


# -- profiles ------------------------------------------------------------------------


def embed_split(world: OracleWorld, split: SplitData) -> EmbeddingMatrix:
    return EmbeddingMatrix(world.extractor(split.x), world.extractor.extractor_id)


def build_profiles(world: OracleWorld,
                   ) -> tuple[list[DatasetProfile], dict[str, DatasetProfile]]:
    """Source profiles (from source-train splits) and per-name target profiles.

    Target profiles exist for every domain since every domain carries a
    target split.
    """
    sources = []
    for name in world.source_names():
        data = world.domain(name)
        sources.append(profile_from_matrix(
            name, embed_split(world, data.source_train), Summarizer.mean(),
            role="source"))
    targets = {}
    for data in world.domains:
        targets[data.spec.name] = profile_from_matrix(
            data.spec.name, embed_split(world, data.target_train),
            Summarizer.mean(), role="target")
    return sources, targets


# -- tiny trainer ---------------------------------------------------------------------


@dataclass
class ModelParams:
    """Linear representation layer then a softmax classification head."""

    w1: np.ndarray  # (in_dim, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, n_classes)
    b2: np.ndarray  # (n_classes,)

    def copy(self) -> "ModelParams":
        return ModelParams(self.w1.copy(), self.b1.copy(),
                           self.w2.copy(), self.b2.copy())


def init_params(rng: np.random.Generator, in_dim: int, hidden_dim: int,
                n_classes: int) -> ModelParams:
    return ModelParams(
        w1=rng.normal(0.0, 1.0 / math.sqrt(in_dim), (in_dim, hidden_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.normal(0.0, 1.0 / math.sqrt(hidden_dim), (hidden_dim, n_classes)),
        b2=np.zeros(n_classes),
    )


def loss_and_grads(params: ModelParams, x: np.ndarray, y: np.ndarray,
                   ) -> tuple[float, ModelParams]:
    """Mean softmax cross-entropy and its analytic gradients."""
    m = x.shape[0]
    h = x @ params.w1 + params.b1
    logits = h @ params.w2 + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    loss = -float(log_probs[np.arange(m), y].mean())

    g = exp / denom
    g[np.arange(m), y] -= 1.0
    g /= m
    dh = g @ params.w2.T
    grads = ModelParams(w1=x.T @ dh, b1=dh.sum(axis=0),
                        w2=h.T @ g, b2=g.sum(axis=0))
    return loss, grads


def sgd_train(params: ModelParams, x: np.ndarray, y: np.ndarray,
              rng: np.random.Generator, learn_rate: float, epochs: int,
              batch: int, rep_scale: float = 1.0) -> ModelParams:
    """Plain mini-batch gradient descent, in place; no momentum, fixed budget.

    The representation layer moves at rep_scale times the learn rate; the
    head always moves at the full rate.
    """
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            _, g = loss_and_grads(params, x[idx], y[idx])
            params.w1 -= learn_rate * rep_scale * g.w1
            params.b1 -= learn_rate * rep_scale * g.b1
            params.w2 -= learn_rate * g.w2
            params.b2 -= learn_rate * g.b2
    return params


def accuracy(params: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
    logits = (x @ params.w1 + params.b1) @ params.w2 + params.b2
    return float((logits.argmax(axis=1) == y).mean())


# -- transfer runs --------------------------------------------------------------------


def train_source_model(world: OracleWorld, source_name: str,
                       cfg: OracleConfig) -> ModelParams:
    data = world.domain(source_name)
    rng = _stream(world.seed, "source", source_name)
    params = init_params(rng, world.spec.feature_dim, cfg.hidden_dim,
                         data.spec.n_classes)
    return sgd_train(params, data.source_train.x, data.source_train.y, rng,
                     cfg.learn_rate, cfg.effective_source_epochs, cfg.batch)


def _train_pooled_model(world: OracleWorld, source_names: Sequence[str],
                        cfg: OracleConfig, tag: str) -> ModelParams:
    """One model over the union of several source-train splits.

    Labels are offset per domain so the pooled model classifies the combined
    label space.
    """
    xs, ys, offset = [], [], 0
    for name in source_names:
        data = world.domain(name)
        xs.append(data.source_train.x)
        ys.append(data.source_train.y + offset)
        offset += data.spec.n_classes
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    rng = _stream(world.seed, "pooled", tag)
    params = init_params(rng, world.spec.feature_dim, cfg.hidden_dim, offset)
    return sgd_train(params, x, y, rng, cfg.learn_rate,
                     cfg.effective_source_epochs, cfg.batch)


def _finetune_from(world: OracleWorld, source_params: ModelParams,
                   source_tag: str, target_name: str, cfg: OracleConfig) -> float:
    """Keep the representation layer, new head, train on the target split."""
    data = world.domain(target_name)
    rng = _stream(world.seed, "transfer", source_tag, target_name)
    params = source_params.copy()
    params.w2 = rng.normal(0.0, 1.0 / math.sqrt(cfg.hidden_dim),
                           (cfg.hidden_dim, data.spec.n_classes))
    params.b2 = np.zeros(data.spec.n_classes)
    sgd_train(params, data.target_train.x, data.target_train.y, rng,
              cfg.learn_rate, cfg.epochs, cfg.batch,
              rep_scale=cfg.finetune_multiplier)
    return accuracy(params, data.target_val.x, data.target_val.y)


def train_scratch(world: OracleWorld, target_name: str, cfg: OracleConfig) -> float:
    data = world.domain(target_name)
    rng = _stream(world.seed, "scratch", target_name)
    params = init_params(rng, world.spec.feature_dim, cfg.hidden_dim,
                         data.spec.n_classes)
    sgd_train(params, data.target_train.x, data.target_train.y, rng,
              cfg.learn_rate, cfg.epochs, cfg.batch)
    return accuracy(params, data.target_val.x, data.target_val.y)


def train_transfer(world: OracleWorld, source_name: str | None,
                   target_name: str, cfg: OracleConfig) -> float:
    """Top-1 accuracy on the target validation split, in [0, 1].

    A None source means training from random initialization on the target
    only. Non-convergence is not an error; the accuracy stands as measured.
    """
    world.domain(target_name)
    if source_name is None:
        return train_scratch(world, target_name, cfg)
    model = train_source_model(world, source_name, cfg)
    return _finetune_from(world, model, source_name, target_name, cfg)


def ground_truth(world: OracleWorld, cfg: OracleConfig) -> list[ImprovementRecord]:
    """Real improvements for every (target, source) pair in the world.

    Source models are trained once and reused across targets; results are
    identical to independent train_transfer calls because every run owns its
    RNG stream.
    """
    models = {name: train_source_model(world, name, cfg)
              for name in world.source_names()}
    records = []
    for target in world.target_names():
        scratch = train_scratch(world, target, cfg)
        for source in world.source_names():
            perf = _finetune_from(world, models[source], source, target, cfg)
            records.append(ImprovementRecord.from_perfs(target, source,
                                                        perf, scratch))
    return records


def calibration_tasks(world: OracleWorld,
                      records: Sequence[ImprovementRecord],
                      ) -> tuple[list[tuple[DatasetProfile, list[ImprovementRecord]]],
                                 list[DatasetProfile]]:
    """(target profile, its records) pairs plus the source pool, in world order."""
    sources, targets = build_profiles(world)
    by_target: dict[str, list[ImprovementRecord]] = {}
    for r in records:
        by_target.setdefault(r.target_name, []).append(r)
    tasks = [(targets[name], by_target[name]) for name in world.target_names()
             if name in by_target]
    return tasks, sources


# -- studies ------------------------------------------------------------------------


@dataclass
class StudyReport:
    """Per-pair ground truth plus per-method selection quality."""

    seed: int
    estimator: EstimatorConfig
    records: list[ImprovementRecord]
    per_target_rho: dict[str, float]
    mean_rho: float
    best_true: dict[str, str]
    selections: dict[str, dict[str, str | None]]  # method -> target -> source
    mean_accuracy: dict[str, float]
    hit_rate: dict[str, float]
    picks: dict[str, dict[str, int]]              # method -> target -> position
    mean_picks: dict[str, float]
    gains: dict[str, dict[str, float]]            # target -> method -> gain


def run_study(world: OracleWorld, cfg: OracleConfig,
              estimator_cfg: EstimatorConfig,
              eval_cfg: EvaluationConfig | None = None,
              records: Sequence[ImprovementRecord] | None = None,
              reference_name: str | None = None,
              rng_seed: int | None = None) -> StudyReport:
    """Score every target against every source and compare selection methods.

    Emits per-target rank correlation between scores and improvements, each
    method's mean accuracy, top-T hit rate (T from eval_cfg, default 1) and
    picks-to-best, and per-target gain tables relative to our selection. B2
    joins only when a reference is named, B3 only when rng_seed is given.
    """
    eval_cfg = eval_cfg if eval_cfg is not None else EvaluationConfig()
    source_names = world.source_names()
    target_names = world.target_names()
    if len(source_names) < 3:
        raise BadSpec("study needs at least three source domains")
    if len(target_names) < 2:
        raise BadSpec("study needs at least two targets")
    if records is None:
        records = ground_truth(world, cfg)
    records = list(records)
    perf = {(r.target_name, r.source_name): r.perf_transfer for r in records}
    scratch = {r.target_name: r.perf_scratch for r in records}
    by_target: dict[str, list[ImprovementRecord]] = {}
    for r in records:
        by_target.setdefault(r.target_name, []).append(r)

    source_profiles, target_profiles = build_profiles(world)

    methods = ["P2L", "B1"]
    if reference_name is not None:
        methods.append("B2")
    if rng_seed is not None:
        methods.append("B3")
    methods += ["B4", "B5"]

    per_target_rho: dict[str, float] = {}
    best_true: dict[str, str] = {}
    selections: dict[str, dict[str, str | None]] = {m: {} for m in methods}
    picks: dict[str, dict[str, int]] = {m: {} for m in methods if m != "B4"}
    hits: dict[str, list[bool]] = {m: [] for m in methods if m != "B4"}
    gains: dict[str, dict[str, float]] = {}

    for target in target_names:
        recs = by_target[target]
        profile = target_profiles[target]
        scored = score_sources(profile, source_profiles, estimator_cfg)
        escore = {s.source_name: s.score for s in scored}
        per_target_rho[target] = spearman_or_zero(
            [escore[r.source_name] for r in recs],
            [r.improvement for r in recs])
        best = sorted(recs, key=lambda r: (-r.improvement, r.source_name))[0]
        best_true[target] = best.source_name

        rankings: dict[str, list[str] | None] = {
            "P2L": [s.source_name for s in scored]}
        for m in methods:
            if m == "P2L":
                continue
            rankings[m] = baseline_ranking(
                m, profile, source_profiles, estimator_cfg,
                reference_name=reference_name, rng_seed=rng_seed)
        for m in methods:
            ranking = rankings[m]
            selections[m][target] = None if ranking is None else ranking[0]
            if ranking is not None:
                picks[m][target] = picks_to_best(ranking, best_true[target])
                hits[m].append(best_true[target] in ranking[:eval_cfg.top_T])
        gains[target] = gain_table(recs, {m: selections[m][target] for m in methods})

    def method_perf(m: str, t: str) -> float:
        chosen = selections[m][t]
        return scratch[t] if chosen is None else perf[(t, chosen)]

    mean_accuracy = {m: float(np.mean([method_perf(m, t) for t in target_names]))
                     for m in methods}
    hit_rate = {m: float(np.mean(hits[m])) for m in hits}
    mean_picks = {m: float(np.mean(list(picks[m].values()))) for m in picks}
    mean_rho = float(np.mean(list(per_target_rho.values())))

    return StudyReport(seed=world.seed, estimator=estimator_cfg, records=records,
                       per_target_rho=per_target_rho, mean_rho=mean_rho,
                       best_true=best_true, selections=selections,
                       mean_accuracy=mean_accuracy, hit_rate=hit_rate,
                       picks=picks, mean_picks=mean_picks, gains=gains)


@dataclass(frozen=True)
class MergedOutcome:
    target_name: str
    divergence_from_reference: float
    perf_reference: float
    perf_merged: float
    predicted: str  # which source the estimator itself would pick
    winner: str     # "reference" | "merged" | "tie"


@dataclass
class MergedStudyReport:
    seed: int
    reference_name: str
    reference_profile: DatasetProfile
    merged_profile: DatasetProfile
    outcomes: list[MergedOutcome]  # ascending divergence from the reference


def merged_source_study(world: OracleWorld, cfg: OracleConfig,
                        reference_name: str | None = None,
                        estimator_cfg: EstimatorConfig | None = None,
                        ) -> MergedStudyReport:
    """Does pooling every source beat the single reference source?

    Trains one model on the union of all source domains and one on the
    reference domain alone, fine-tunes both on every target, and reports
    wins ordered by the target's divergence from the reference. Merging
    grows size but also grows divergence, so the reference tends to keep
    near targets while the merged model takes far ones. The reference
    defaults to the largest source.
    """
    source_names = world.source_names()
    if reference_name is None:
        reference = max(source_names,
                        key=lambda n: (world.domain(n).source_train.items, n))
    else:
        reference = reference_name
    if reference not in source_names:
        raise UnknownName(f"reference {reference!r} is not a source domain")
    if len(source_names) < 3:
        raise BadSpec("merged study needs the reference plus at least two others")
    est = estimator_cfg if estimator_cfg is not None else EstimatorConfig()

    source_profiles, target_profiles = build_profiles(world)
    ref_profile = next(p for p in source_profiles if p.name == reference)
    merged_profile = merge_profiles(source_profiles, name="merged")

    ref_model = train_source_model(world, reference, cfg)
    merged_model = _train_pooled_model(world, source_names, cfg, tag="merged")

    # The target family spans every domain's target split, the reference's
    # own included, so divergence from the reference covers near to far.
    outcomes = []
    for target in (d.spec.name for d in world.domains):
        profile = target_profiles[target]
        div = profile_distance(profile, ref_profile, est)
        perf_ref = _finetune_from(world, ref_model, reference, target, cfg)
        perf_merged = _finetune_from(world, merged_model, "merged", target, cfg)
        predicted = select(score_sources(profile, [ref_profile, merged_profile], est))
        if perf_ref > perf_merged:
            winner = "reference"
        elif perf_merged > perf_ref:
            winner = "merged"
        else:
            winner = "tie"
        outcomes.append(MergedOutcome(
            target_name=target, divergence_from_reference=div,
            perf_reference=perf_ref, perf_merged=perf_merged,
            predicted=predicted, winner=winner))
    outcomes.sort(key=lambda o: (o.divergence_from_reference, o.target_name))
    return MergedStudyReport(seed=world.seed, reference_name=reference,
                             reference_profile=ref_profile,
                             merged_profile=merged_profile, outcomes=outcomes)


# -- report files --------------------------------------------------------------------


def write_study_files(study: StudyReport, outdir) -> None:
    """CSV tables plus a plain-text summary; byte-identical for equal inputs."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_improvements_csv(outdir / "ground_truth.csv", study.records)

    lines = ["target,spearman_rho,best_source"]
    for target, rho in study.per_target_rho.items():
        lines.append(f"{target},{fmt(rho)},{study.best_true[target]}")
    (outdir / "per_target.csv").write_text("\n".join(lines) + "\n")

    lines = ["target,method,selection,perf,gain_vs_p2l,picks_to_best"]
    perf = {(r.target_name, r.source_name): r.perf_transfer for r in study.records}
    scratch = {r.target_name: r.perf_scratch for r in study.records}
    for target in study.per_target_rho:
        for method in study.selections:
            chosen = study.selections[method][target]
            p = scratch[target] if chosen is None else perf[(target, chosen)]
            gain = 0.0 if method == "P2L" else study.gains[target][method]
            pick = study.picks.get(method, {}).get(target)
            lines.append(
                f"{target},{method},{'' if chosen is None else chosen},"
                f"{fmt(p)},{fmt(gain)},{'' if pick is None else pick}")
    (outdir / "selections.csv").write_text("\n".join(lines) + "\n")

    lines = ["method,mean_accuracy,top1_hit_rate,mean_picks_to_best"]
    for method in study.selections:
        acc = fmt(study.mean_accuracy[method])
        hit = "" if method == "B4" else fmt(study.hit_rate[method])
        mp = "" if method not in study.mean_picks else fmt(study.mean_picks[method])
        lines.append(f"{method},{acc},{hit},{mp}")
    (outdir / "methods.csv").write_text("\n".join(lines) + "\n")

    text = [
        f"seed: {study.seed}",
        f"estimator: distance={study.estimator.distance.value} "
        f"k={fmt(study.estimator.k)} epsilon={fmt(study.estimator.epsilon)}",
        f"targets: {len(study.per_target_rho)}",
        f"mean spearman rho (score vs improvement): {fmt(study.mean_rho)}",
    ]
    for method in study.selections:
        part = [f"mean accuracy {fmt(study.mean_accuracy[method])}"]
        if method in study.hit_rate:
            part.append(f"top-1 hit rate {fmt(study.hit_rate[method])}")
        if method in study.mean_picks:
            part.append(f"mean picks-to-best {fmt(study.mean_picks[method])}")
        text.append(f"{method}: " + ", ".join(part))
    (outdir / "summary.txt").write_text("\n".join(text) + "\n")


def write_merged_csv(report: MergedStudyReport, path) -> None:
    lines = ["target,divergence_from_reference,perf_reference,perf_merged,"
             "predicted,winner"]
    for o in report.outcomes:
        lines.append(f"{o.target_name},{fmt(o.divergence_from_reference)},"
                     f"{fmt(o.perf_reference)},{fmt(o.perf_merged)},"
                     f"{o.predicted},{o.winner}")
    Path(path).write_text("\n".join(lines) + "\n")
