import numpy as np
import pytest

from p2l import oracle
from p2l.core import DivergenceKind, EstimatorConfig
from p2l.errors import BadSpec, UnknownName
from p2l.estimator import merge_profiles, profile_distance


def two_cluster_spec(feature_dim=8, n_items=400, gap=8.0, n_classes=5,
                     spread=1.6, seed=0):
    """Two well-separated domains of overlapping Gaussian classes."""
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 1.0, (n_classes, feature_dim))
    b = a + gap
    return oracle.WorldSpec(domains=(
        oracle.DomainSpec("aaa", n_classes, n_items, a, spread=spread),
        oracle.DomainSpec("bbb", n_classes, n_items, b, spread=spread),
    ), feature_dim=feature_dim, embed_dim=16)


class TestWorldGeneration:
    def test_same_seed_identical_worlds(self):
        spec = two_cluster_spec()
        w1 = oracle.generate_world(11, spec)
        w2 = oracle.generate_world(11, spec)
        for d1, d2 in zip(w1.domains, w2.domains):
            np.testing.assert_array_equal(d1.source_train.x, d2.source_train.x)
            np.testing.assert_array_equal(d1.target_val.y, d2.target_val.y)
        np.testing.assert_array_equal(w1.extractor.weights, w2.extractor.weights)

    def test_different_seeds_differ(self):
        spec = two_cluster_spec()
        w1 = oracle.generate_world(11, spec)
        w2 = oracle.generate_world(12, spec)
        assert not np.array_equal(w1.domains[0].source_train.x,
                                  w2.domains[0].source_train.x)

    def test_split_sizes(self):
        cfg = oracle.OracleConfig(target_fraction=0.1)
        world = oracle.generate_world(5, two_cluster_spec(n_items=403), cfg)
        for dom in world.domains:
            quarter = 403 // 4
            assert dom.source_train.items == quarter
            assert dom.source_val.items == quarter
            assert dom.target_train.items == int(np.floor(0.1 * quarter))
            assert dom.target_val.items == quarter

    def test_bad_specs(self):
        spec = two_cluster_spec()
        with pytest.raises(BadSpec):
            oracle.generate_world(1, oracle.WorldSpec(domains=spec.domains[:1]))
        with pytest.raises(BadSpec):
            oracle.generate_world(1, spec, oracle.OracleConfig(target_fraction=0.001))
        one_class = oracle.DomainSpec("c", 2, 100, np.zeros((2, 8)))
        with pytest.raises(BadSpec):
            oracle.DomainSpec("c", 3, 100, np.zeros((2, 8)))
        assert one_class.n_classes == 2

    def test_unknown_domain(self):
        world = oracle.generate_world(1, two_cluster_spec())
        with pytest.raises(UnknownName):
            world.domain("nope")
        with pytest.raises(UnknownName):
            oracle.train_transfer(world, None, "nope", oracle.OracleConfig())

    def test_separated_domains_beat_resample_distance(self):
        # distance(A, B) must exceed distance(A, A') for a fresh sample A'
        # of the same domain; A' here is A's own target split.
        est = EstimatorConfig(distance=DivergenceKind.KL, k=-1.0)
        wins = 0
        for seed in range(1, 6):
            world = oracle.generate_world(seed, two_cluster_spec())
            sources, targets = oracle.build_profiles(world)
            a_src = sources[0]
            b_src = sources[1]
            a_resample = targets["aaa"]
            d_ab = profile_distance(a_resample, b_src, est)
            d_aa = profile_distance(a_resample, a_src, est)
            wins += d_ab > 2.0 * d_aa
        assert wins >= 5

    def test_default_world_shape(self):
        world = oracle.default_world(1)
        assert len(world.source_names()) == 6
        assert len(world.target_names()) == 8
        assert len(world.domains) == 14
        assert world.spec.feature_dim == 16
        assert world.extractor.extractor_id == "oracle-ref-1"


class TestTrainer:
    def random_instance(self, seed):
        rng = np.random.default_rng(seed)
        n, d, h, c = 12, 5, 4, 3
        params = oracle.init_params(rng, d, h, c)
        x = rng.normal(0.0, 1.0, (n, d))
        y = rng.integers(0, c, n)
        return params, x, y

    def test_gradients_match_finite_differences(self):
        for seed in range(5):
            params, x, y = self.random_instance(seed)
            _, grads = oracle.loss_and_grads(params, x, y)
            for field in ("w1", "b1", "w2", "b2"):
                theta = getattr(params, field)
                analytic = getattr(grads, field)
                flat = theta.reshape(-1)
                for idx in range(0, flat.size, max(1, flat.size // 5)):
                    h = 1e-6
                    orig = flat[idx]
                    flat[idx] = orig + h
                    up, _ = oracle.loss_and_grads(params, x, y)
                    flat[idx] = orig - h
                    down, _ = oracle.loss_and_grads(params, x, y)
                    flat[idx] = orig
                    numeric = (up - down) / (2 * h)
                    assert analytic.reshape(-1)[idx] == pytest.approx(
                        numeric, rel=1e-5, abs=1e-8)

    def test_training_reduces_loss(self):
        params, x, y = self.random_instance(99)
        before, _ = oracle.loss_and_grads(params, x, y)
        oracle.sgd_train(params, x, y, np.random.default_rng(0), 0.1, 50, 4)
        after, _ = oracle.loss_and_grads(params, x, y)
        assert after < before

    def test_rep_scale_zero_freezes_representation(self):
        params, x, y = self.random_instance(7)
        w1_before = params.w1.copy()
        oracle.sgd_train(params, x, y, np.random.default_rng(0), 0.1, 5, 4,
                         rep_scale=0.0)
        np.testing.assert_array_equal(params.w1, w1_before)


class TestTransferRuns:
    def test_deterministic(self):
        world = oracle.generate_world(3, two_cluster_spec())
        cfg = oracle.OracleConfig(epochs=5)
        a = oracle.train_transfer(world, "aaa", "bbb", cfg)
        b = oracle.train_transfer(world, "aaa", "bbb", cfg)
        assert a == b
        s1 = oracle.train_transfer(world, None, "bbb", cfg)
        s2 = oracle.train_scratch(world, "bbb", cfg)
        assert s1 == s2

    def test_self_transfer_usually_helps(self):
        cfg = oracle.OracleConfig(epochs=30)
        wins = 0
        for seed in range(1, 6):
            world = oracle.generate_world(seed, two_cluster_spec(n_items=1600))
            transfer = oracle.train_transfer(world, "aaa", "aaa", cfg)
            scratch = oracle.train_transfer(world, None, "aaa", cfg)
            wins += transfer >= scratch
        assert wins >= 4

    def test_f_one_zero_source_epochs_like_scratch(self):
        cfg = oracle.OracleConfig(epochs=10, finetune_multiplier=1.0, source_epochs=0)
        gaps = []
        for seed in range(1, 6):
            world = oracle.generate_world(seed, two_cluster_spec(n_items=1600))
            transfer = oracle.train_transfer(world, "bbb", "aaa", cfg)
            scratch = oracle.train_transfer(world, None, "aaa", cfg)
            gaps.append(abs(transfer - scratch))
        assert float(np.mean(gaps)) < 0.05

    def test_ground_truth_bookkeeping(self):
        world = oracle.generate_world(2, two_cluster_spec(n_items=400))
        cfg = oracle.OracleConfig(epochs=4)
        records = oracle.ground_truth(world, cfg)
        assert len(records) == 4  # 2 sources x 2 targets
        scratch = {}
        for r in records:
            assert r.improvement == r.perf_transfer - r.perf_scratch
            scratch.setdefault(r.target_name, r.perf_scratch)
            assert scratch[r.target_name] == r.perf_scratch
            assert r.perf_transfer == oracle.train_transfer(
                world, r.source_name, r.target_name, cfg)

    def test_monotone_size_effect(self):
        # same distribution, growing size; median transfer accuracy over five
        # seeds must not decrease
        rng = np.random.default_rng(42)
        centroids = rng.normal(0.0, 1.0, (5, 8))
        sizes = (160, 1600, 16000)
        cfg = oracle.OracleConfig(epochs=10)
        perfs = {n: [] for n in sizes}
        for seed in range(1, 6):
            domains = [oracle.DomainSpec(f"src{n}", 5, n, centroids, spread=1.6)
                       for n in sizes]
            domains.append(oracle.DomainSpec("tgt", 5, 2000, centroids, spread=1.6))
            spec = oracle.WorldSpec(domains=tuple(domains), feature_dim=8,
                                    embed_dim=16, n_sources=3)
            world = oracle.generate_world(seed, spec)
            for n in sizes:
                perfs[n].append(oracle.train_transfer(world, f"src{n}", "tgt", cfg))
        medians = [float(np.median(perfs[n])) for n in sizes]
        assert medians[0] <= medians[1] + 1e-12
        assert medians[1] <= medians[2] + 1e-12


class TestStudies:
    def test_run_study_shapes_and_consistency(self):
        cfg = oracle.OracleConfig()
        world = oracle.default_world(1, cfg, n_sources=4, n_targets=4)
        records = oracle.ground_truth(world, cfg)
        est = EstimatorConfig(distance="KL", k=-1.0)
        study = oracle.run_study(world, cfg, est, records=records,
                                 rng_seed=123)
        targets = world.target_names()
        assert set(study.per_target_rho) == set(targets)
        assert set(study.selections) == {"P2L", "B1", "B3", "B4", "B5"}
        for t in targets:
            assert study.selections["B4"][t] is None
            assert study.picks["P2L"][t] >= 1
        assert study.mean_picks["P2L"] == pytest.approx(
            float(np.mean(list(study.picks["P2L"].values()))))
        # gains for B4 reproduce the no-transfer formula
        perf = {(r.target_name, r.source_name): r.perf_transfer for r in records}
        scratch = {r.target_name: r.perf_scratch for r in records}
        for t in targets:
            ours = perf[(t, study.selections["P2L"][t])]
            assert study.gains[t]["B4"] == pytest.approx(
                (ours - scratch[t]) / scratch[t])

    def test_equal_sizes_shared_anchor_source_wins_selection(self):
        # one source shares the target's centroids; sizes equal, so both the
        # estimator and the least-divergent baseline should pick it
        rng = np.random.default_rng(5)
        anchors = rng.normal(0.0, 1.5, (3, 8))
        far1 = anchors + 8.0
        far2 = anchors - 8.0
        domains = (
            oracle.DomainSpec("twin", 3, 400, anchors),
            oracle.DomainSpec("far1", 3, 400, far1),
            oracle.DomainSpec("far2", 3, 400, far2),
            oracle.DomainSpec("tgt", 3, 400, anchors),
        )
        spec = oracle.WorldSpec(domains=domains, feature_dim=8, embed_dim=16,
                                n_sources=3)
        cfg = oracle.OracleConfig()
        est = EstimatorConfig(distance="KL", k=-1.0)
        for seed in (1, 2, 3):
            world = oracle.generate_world(seed, spec, cfg)
            sources, targets = oracle.build_profiles(world)
            from p2l.estimator import baseline_select, score_sources, select
            tgt = targets["tgt"]
            assert select(score_sources(tgt, sources, est)) == "twin"
            assert baseline_select("B5", tgt, sources, est) == "twin"

    def test_merged_study_profile_delegation_and_order(self):
        cfg = oracle.OracleConfig()
        world = oracle.default_world(2, cfg, n_sources=4, n_targets=4)
        report = oracle.merged_source_study(world, cfg)
        sources, _ = oracle.build_profiles(world)
        expected = merge_profiles(sources, "merged")
        np.testing.assert_array_equal(report.merged_profile.summary.values,
                                      expected.summary.values)
        assert report.merged_profile.size == expected.size
        divs = [o.divergence_from_reference for o in report.outcomes]
        assert divs == sorted(divs)
        assert len(report.outcomes) == len(world.domains)
        ref_sizes = {n: world.domain(n).source_train.items
                     for n in world.source_names()}
        assert ref_sizes[report.reference_name] == max(ref_sizes.values())

    def test_study_report_files(self, tmp_path):
        cfg = oracle.OracleConfig()
        world = oracle.default_world(1, cfg, n_sources=4, n_targets=4)
        records = oracle.ground_truth(world, cfg)
        est = EstimatorConfig(distance="KL", k=-1.0)
        study = oracle.run_study(world, cfg, est, records=records)
        oracle.write_study_files(study, tmp_path)
        for name in ("ground_truth.csv", "per_target.csv", "selections.csv",
                     "methods.csv", "summary.txt"):
            assert (tmp_path / name).exists()
        header = (tmp_path / "ground_truth.csv").read_text().splitlines()[0]
        assert header == "target,source,perf_transfer,perf_scratch"
