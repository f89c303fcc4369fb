"""End-to-end acceptance gate.

Each test prints one pass/fail line (visible with pytest -s). The synthetic
study criteria run the default world on seeds 1..5; seed 1 is the canonical
world for the curve-shape check.
"""
import functools
import math

import numpy as np
import pytest

from p2l import oracle
from p2l.calibrate import (
    EvaluationConfig,
    spearman_rho,
    tune_k,
)
from p2l.cli import main as cli_main
from p2l.core import (
    DivergenceKind,
    EmbeddingMatrix,
    EstimatorConfig,
    Summarizer,
    SummaryVector,
)
from p2l.divergence import distance
from p2l.estimator import (
    baseline_ranking,
    merge_profiles,
    score_sources,
    score_table,
    zscale,
)
from p2l.io import (
    ProfileRegistry,
    read_embeddings_bin,
    read_embeddings_csv,
    write_embeddings_bin,
    write_embeddings_csv,
)
from p2l.summarize import profile_from_matrix

SEEDS = (1, 2, 3, 4, 5)
CANONICAL_SEED = 1


def report(number, label, ok):
    print(f"\nacceptance criterion {number} ({label}): {'PASS' if ok else 'FAIL'}")
    assert ok, f"criterion {number} ({label}) failed"


def random_summary(rng, dim):
    values = rng.uniform(0.05, 1.0, dim)
    return SummaryVector(values=values / values.sum(), raw_mean=values,
                         summarizer=Summarizer.mean())


@functools.lru_cache(maxsize=None)
def world_and_truth(seed):
    cfg = oracle.OracleConfig()
    world = oracle.default_world(seed, cfg)
    records = oracle.ground_truth(world, cfg)
    return cfg, world, tuple(records)


@functools.lru_cache(maxsize=None)
def calibrated(seed):
    cfg, world, records = world_and_truth(seed)
    tasks, sources = oracle.calibration_tasks(world, list(records))
    return tune_k(tasks, sources, EvaluationConfig())


def test_criterion_1_property_suite():
    rng = np.random.default_rng(20240917)
    ok = True

    # divergence: non-negativity, identity, symmetry, triangle, bounds
    metric_kinds = (DivergenceKind.JSD, DivergenceKind.EUC,
                    DivergenceKind.CITYBLOCK)
    symmetric_kinds = metric_kinds + (DivergenceKind.CHI2,)
    for _ in range(1000):
        dim = int(rng.integers(2, 12))
        p, q, r = (random_summary(rng, dim) for _ in range(3))
        for kind in DivergenceKind:
            d_pq = distance(kind, p, q)
            ok &= d_pq >= 0.0 and math.isfinite(d_pq)
            ok &= distance(kind, p, p) <= 1e-12
        for kind in symmetric_kinds:
            ok &= abs(distance(kind, p, q) - distance(kind, q, p)) <= 1e-12
        for kind in metric_kinds:
            ok &= (distance(kind, p, r)
                   <= distance(kind, p, q) + distance(kind, q, r) + 1e-9)
        ok &= distance(DivergenceKind.JSD, p, q) <= math.sqrt(math.log(2.0)) + 1e-9
        ok &= distance(DivergenceKind.CHI2, p, q) <= 1.0 + 1e-9
        ok &= distance(DivergenceKind.CITYBLOCK, p, q) <= 2.0 + 1e-9

    # zscale contracts
    for _ in range(200):
        n = int(rng.integers(2, 30))
        values = rng.uniform(-100.0, 100.0, n)
        z = zscale(values)
        ok &= abs(float(z.mean())) < 1e-9
        ok &= abs(float(z.std()) - 1.0) < 1e-9
    ok &= bool(np.all(zscale(np.full(5, 3.7)) == 0.0))
    ok &= bool(np.all(zscale([42.0]) == 0.0))

    # Spearman vs the classical tie-free closed form, 1000 permutations
    for _ in range(1000):
        n = int(rng.integers(3, 40))
        a = rng.permutation(n).astype(float)
        b = rng.permutation(n).astype(float)
        d = (np.argsort(np.argsort(a)) - np.argsort(np.argsort(b))).astype(float)
        closed = 1.0 - 6.0 * float(d @ d) / (n * (n * n - 1))
        ok &= abs(spearman_rho(a, b) - closed) <= 1e-9

    # merge equals concatenation, 1000 random matrix pairs
    for _ in range(1000):
        d = int(rng.integers(1, 8))
        n1, n2 = (int(x) for x in rng.integers(1, 40, 2))
        x = rng.uniform(0.0, 3.0, (n1, d)) + 1e-9
        y = rng.uniform(0.0, 3.0, (n2, d)) + 1e-9
        merged = merge_profiles(
            [profile_from_matrix("x", EmbeddingMatrix(x, "e")),
             profile_from_matrix("y", EmbeddingMatrix(y, "e"))], "xy")
        concat = profile_from_matrix("xy", EmbeddingMatrix(np.vstack([x, y]), "e"))
        ok &= merged.size == concat.size
        ok &= bool(np.all(np.abs(merged.summary.values
                                 - concat.summary.values) < 1e-12))

    report(1, "math-core property suite", ok)


def test_criterion_2_estimator_degenerations():
    rng = np.random.default_rng(811)
    ok = True

    # k = 0 reproduces B1 and k -> -inf reproduces B5, through the real
    # profile-scoring path, on 100 random candidate sets
    for trial in range(100):
        n = int(rng.integers(2, 10))
        dim = int(rng.integers(2, 8))
        target = profile_from_matrix(
            "t", EmbeddingMatrix(rng.uniform(0.05, 1.0, (3, dim)), "e"),
            role="target")
        sources = [profile_from_matrix(
            f"s{i:02d}", EmbeddingMatrix(rng.uniform(0.05, 1.0, (3, dim)), "e"),
            size=int(rng.integers(1, 10 ** 6)))
            for i in range(n)]
        cfg0 = EstimatorConfig(distance=DivergenceKind.KL, k=0.0)
        ranking0 = [s.source_name for s in score_sources(target, sources, cfg0)]
        ok &= ranking0 == baseline_ranking("B1", target, sources)
        cfg_inf = EstimatorConfig(distance=DivergenceKind.KL, k=-1e15)
        ranking_inf = [s.source_name for s in score_sources(target, sources, cfg_inf)]
        ok &= ranking_inf == baseline_ranking("B5", target, sources, cfg_inf)

    # ranking invariance under positive affine maps of distances / log sizes
    for trial in range(100):
        n = int(rng.integers(2, 12))
        names = [f"s{i}" for i in range(n)]
        sizes = rng.uniform(1.0, 1e6, n)
        dists = rng.uniform(0.0, 5.0, n)
        k = float(rng.uniform(-3.0, 0.0))
        base = [s.source_name for s in score_table(names, sizes, dists, k)]
        a = float(rng.uniform(0.01, 100.0))
        b = float(rng.uniform(0.0, 10.0))
        moved = [s.source_name
                 for s in score_table(names, sizes, a * dists + b, k)]
        ok &= moved == base
        a2 = float(rng.uniform(0.1, 3.0))
        b2 = float(rng.uniform(-2.0, 2.0))
        resized = np.exp(a2 * np.log(sizes) + b2)
        moved2 = [s.source_name for s in score_table(names, resized, dists, k)]
        ok &= moved2 == base

    report(2, "estimator degenerations and affine invariance", ok)


def test_criterion_3_desk_scale_headline():
    a_wins = b_wins = 0
    picks_ours, picks_largest = [], []
    for seed in SEEDS:
        cfg, world, records = world_and_truth(seed)
        rep = calibrated(seed)
        best = EstimatorConfig(distance=rep.best_distance, k=rep.best_k)
        size_only = EstimatorConfig(distance=rep.best_distance, k=0.0)
        study = oracle.run_study(world, cfg, best, records=list(records))
        study0 = oracle.run_study(world, cfg, size_only, records=list(records))
        a_wins += study.mean_rho >= study0.mean_rho + 0.05
        b_wins += (study.hit_rate["P2L"] >= study.hit_rate["B1"]
                   and study.hit_rate["P2L"] >= study.hit_rate["B5"])
        picks_ours.extend(study.picks["P2L"].values())
        picks_largest.extend(study.picks["B1"].values())
    ok_a = a_wins >= 4
    ok_b = b_wins >= 4
    ok_c = float(np.mean(picks_ours)) <= float(np.mean(picks_largest))
    print(f"\n  (a) calibrated rho beats size-only by 0.05 on {a_wins}/5 seeds"
          f"\n  (b) top-1 hit rate >= B1 and B5 on {b_wins}/5 seeds"
          f"\n  (c) mean picks-to-best {np.mean(picks_ours):.3f} (ours) vs "
          f"{np.mean(picks_largest):.3f} (largest)")
    report(3, "desk-scale headline study", ok_a and ok_b and ok_c)


def test_criterion_4_calibration_curve_shape():
    rep = calibrated(CANONICAL_SEED)
    curve = dict(rep.curve(rep.best_distance))
    rho_best = rep.best_point().mean_rho
    ok = (rep.best_k < 0.0
          and rho_best > curve[0.0]
          and rho_best > curve[-3.0])
    print(f"\n  best k {rep.best_k} ({rep.best_distance.value}); "
          f"rho(best) {rho_best:.3f}, rho(0) {curve[0.0]:.3f}, "
          f"rho(-3) {curve[-3.0]:.3f}")
    report(4, "calibration curve has an interior maximum", ok)


def test_criterion_5_merged_dataset_effect():
    near_wins = far_wins = 0
    for seed in SEEDS:
        cfg, world, _ = world_and_truth(seed)
        merged = oracle.merged_source_study(world, cfg)
        outcomes = merged.outcomes
        half = len(outcomes) // 2
        near_wins += any(o.winner == "reference" for o in outcomes[:half])
        far_wins += any(o.winner == "merged" for o in outcomes[half:])
    print(f"\n  near-target reference wins on {near_wins}/5 seeds; "
          f"far-target merged wins on {far_wins}/5 seeds")
    report(5, "merged source does not always win", near_wins >= 4 and far_wins >= 4)


def test_criterion_6_gradient_check():
    rng = np.random.default_rng(606)
    ok = True
    h = 1e-6
    for _ in range(20):
        n = int(rng.integers(4, 16))
        d = int(rng.integers(2, 7))
        hid = int(rng.integers(2, 6))
        c = int(rng.integers(2, 5))
        params = oracle.init_params(rng, d, hid, c)
        x = rng.normal(0.0, 1.0, (n, d))
        y = rng.integers(0, c, n)
        _, grads = oracle.loss_and_grads(params, x, y)
        for field in ("w1", "b1", "w2", "b2"):
            theta = getattr(params, field).reshape(-1)
            analytic = getattr(grads, field).reshape(-1)
            for idx in range(theta.size):
                orig = theta[idx]
                theta[idx] = orig + h
                up, _ = oracle.loss_and_grads(params, x, y)
                theta[idx] = orig - h
                down, _ = oracle.loss_and_grads(params, x, y)
                theta[idx] = orig
                numeric = (up - down) / (2.0 * h)
                # relative tolerance with a unit floor for near-zero entries
                ok &= abs(analytic[idx] - numeric) <= 1e-5 * max(1.0, abs(numeric))
    report(6, "trainer gradients match finite differences", ok)


def test_criterion_7_format_round_trips(tmp_path):
    rng = np.random.default_rng(707)
    ok = True

    # profile save/load is bit-exact (pi included for the classic witness)
    registry = ProfileRegistry.open(tmp_path / "registry")
    for i in range(20):
        raw = rng.uniform(0.0, 4.0, int(rng.integers(1, 12))) + 1e-9
        raw[0] = math.pi
        sv = SummaryVector(values=raw / raw.sum(), raw_mean=raw,
                           summarizer=Summarizer.mean())
        from p2l.core import DatasetProfile
        p = DatasetProfile(f"prof{i:02d}", int(rng.integers(1, 10 ** 9)), sv, "e")
        registry.save(p)
        q = registry.load(p.name)
        ok &= q.summary.values.tobytes() == p.summary.values.tobytes()
        ok &= q.summary.raw_mean.tobytes() == p.summary.raw_mean.tobytes()
        ok &= (q.size, q.role, q.extractor_id) == (p.size, p.role, p.extractor_id)

    # CSV and binary readers agree within 32-bit precision
    for i in range(10):
        m = EmbeddingMatrix(rng.uniform(0.0, 2.0, (int(rng.integers(1, 30)),
                                                   int(rng.integers(1, 10)))), "e")
        write_embeddings_csv(tmp_path / "m.csv", m)
        write_embeddings_bin(tmp_path / "m.bin", m)
        a = read_embeddings_csv(tmp_path / "m.csv")
        b = read_embeddings_bin(tmp_path / "m.bin")
        ok &= bool(np.allclose(a.values, b.values, rtol=1e-6, atol=0.0))

    # simulate twice with one seed: byte-identical report directory
    out1, out2 = tmp_path / "sim1", tmp_path / "sim2"
    for out in (out1, out2):
        code = cli_main(["simulate", "--seed", "11", "--sources", "4",
                         "--targets", "4", "--out", str(out)])
        ok &= code == 0
    names1 = sorted(p.name for p in out1.iterdir())
    names2 = sorted(p.name for p in out2.iterdir())
    ok &= names1 == names2
    for name in names1:
        ok &= (out1 / name).read_bytes() == (out2 / name).read_bytes()

    report(7, "format round-trips and simulate determinism", ok)
