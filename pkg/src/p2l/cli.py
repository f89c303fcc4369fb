"""Command-line surface: profile, rank, calibrate, evaluate, merge, simulate.

stdout carries machine-parseable CSV only; human prose goes to stderr.
Exit codes: 0 ok, 2 input error, 3 state conflict, 4 referential error.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import oracle
from .calibrate import (
    DEFAULT_K_GRID,
    EvaluationConfig,
    gain_table,
    picks_to_best,
    tune_k,
    write_grid_csv,
)
from .core import DivergenceKind, EstimatorConfig, Summarizer
from .errors import (
    BadHeader,
    BadMagic,
    BadSpec,
    DegenerateConstantInput,
    DimensionMismatch,
    DuplicateSourceName,
    EmptyCandidates,
    EmptyMatrix,
    InvalidName,
    LengthMismatch,
    MissingRecord,
    MissingReference,
    MissingSeed,
    MixedExtractors,
    MixedSummarizers,
    NameCollision,
    NegativeComponent,
    NegativeMass,
    NonFiniteValue,
    NonPositiveComponent,
    NonPositiveEpsilon,
    NotFound,
    RaggedRow,
    TooFewSources,
    TruncatedFile,
    UnknownName,
    UnknownSource,
    UnsupportedVersion,
    ZeroDenominator,
)
from .estimator import baseline_ranking, baseline_select, merge_profiles, score_sources
from .io import (
    ProfileRegistry,
    fmt,
    group_records_by_target,
    read_improvements_csv,
    sniff_and_read_embeddings,
)
from .summarize import profile_from_matrix

INPUT_ERRORS = (BadHeader, BadMagic, TruncatedFile, UnsupportedVersion, RaggedRow,
                NonFiniteValue, EmptyMatrix, NegativeMass, NegativeComponent,
                NonPositiveComponent, NonPositiveEpsilon, DimensionMismatch,
                DuplicateSourceName, EmptyCandidates, MixedExtractors,
                MixedSummarizers, MissingSeed, LengthMismatch,
                DegenerateConstantInput, TooFewSources, InvalidName,
                MissingRecord, ZeroDenominator, BadSpec, ValueError)
STATE_ERRORS = (NameCollision,)
REFERENTIAL_ERRORS = (NotFound, UnknownSource, UnknownName, MissingReference)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_STATE = 3
EXIT_REFERENTIAL = 4


def _fail(message: str, code: int) -> int:
    print(f"p2l: error: {message}", file=sys.stderr)
    return code


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def _registry(args) -> ProfileRegistry:
    return ProfileRegistry.open(args.registry)


def _parse_grid(text: str | None) -> tuple[float, ...]:
    if text is None:
        return DEFAULT_K_GRID
    lo, hi, step = (float(x) for x in text.split(":"))
    if step <= 0 or hi < lo:
        raise ValueError(f"bad grid spec {text!r}")
    n = int(round((hi - lo) / step))
    return tuple(round(lo + i * step, 12) for i in range(n + 1))


def _parse_kinds(text: str | None) -> tuple[DivergenceKind, ...]:
    if text is None:
        return tuple(DivergenceKind)
    return tuple(DivergenceKind(part.strip().upper()) for part in text.split(","))


def cmd_profile(args) -> int:
    registry = _registry(args)
    matrix = sniff_and_read_embeddings(args.input)
    summarizer = Summarizer.parse(args.summarizer)
    size = matrix.items if args.size == "auto" else int(args.size)
    profile = profile_from_matrix(args.name, matrix, summarizer,
                                  role=args.role, size=size)
    registry.save(profile, overwrite=args.force)
    print("dim,size,extractor_id")
    print(f"{matrix.dim},{profile.size},{profile.extractor_id}")
    _note(f"wrote profile {profile.name!r} to {registry.root}")
    return EXIT_OK


def _load_target(args, registry: ProfileRegistry):
    path = Path(args.target)
    if path.exists():
        matrix = sniff_and_read_embeddings(path)
        name = path.name.split(".")[0] or "target"
        return profile_from_matrix(name, matrix, Summarizer.mean(), role="target")
    return registry.load(args.target)


def cmd_rank(args) -> int:
    registry = _registry(args)
    target = _load_target(args, registry)
    candidates = [p for p in registry.load_all()
                  if p.role == "source" and p.name != target.name]
    cfg = EstimatorConfig(distance=DivergenceKind(args.distance.upper()), k=args.k,
                          epsilon=args.epsilon)
    scored = score_sources(target, candidates, cfg,
                           allow_mixed_extractors=args.allow_mixed_extractors)
    sizes = {p.name: p.size for p in candidates}
    rows = scored if args.top is None else scored[:args.top]
    print("name,size,distance,z_log_size,z_distance,score")
    for s in rows:
        print(f"{s.source_name},{sizes[s.source_name]},{fmt(s.distance_value)},"
              f"{fmt(s.z_log_size)},{fmt(s.z_distance)},{fmt(s.score)}")
    if args.baselines:
        for kind in ("B1", "B2", "B3", "B5"):
            if kind == "B2" and args.reference is None:
                pick = ""
            elif kind == "B3" and args.seed is None:
                pick = ""
            else:
                pick = baseline_select(
                    kind, target, candidates, cfg,
                    reference_name=args.reference, rng_seed=args.seed,
                    allow_mixed_extractors=args.allow_mixed_extractors)
            print(f"baseline,{kind},{pick}")
    return EXIT_OK


def _tasks_from_truth(registry: ProfileRegistry, records):
    grouped = group_records_by_target(records)
    tasks = [(registry.load(name), recs) for name, recs in grouped.items()]
    sources = [p for p in registry.load_all() if p.role == "source"]
    return tasks, sources


def cmd_calibrate(args) -> int:
    registry = _registry(args)
    records = read_improvements_csv(args.truth)
    if not records:
        return _fail("ground-truth file has no records", EXIT_INPUT)
    tasks, sources = _tasks_from_truth(registry, records)
    cfg = EvaluationConfig(top_T=args.top, k_grid=_parse_grid(args.grid),
                           distance_kinds=_parse_kinds(args.kinds),
                           epsilon=args.epsilon)
    report = tune_k(tasks, sources, cfg)
    write_grid_csv(report, args.out)
    print("k,distance,mean_rho")
    print(f"{fmt(report.best_k)},{report.best_distance.value},"
          f"{fmt(report.best_point().mean_rho)}")
    _note(f"wrote grid ({len(report.grid)} points) to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    registry = _registry(args)
    records = read_improvements_csv(args.truth)
    if not records:
        return _fail("ground-truth file has no records", EXIT_INPUT)
    grouped = group_records_by_target(records)
    sources = {p.name: p for p in registry.load_all() if p.role == "source"}
    cfg = EstimatorConfig(distance=DivergenceKind(args.distance.upper()), k=args.k,
                          epsilon=args.epsilon)

    print("target,method,selection,perf,gain_vs_p2l,picks_to_best")
    for target_name, recs in grouped.items():
        target = registry.load(target_name)
        for r in recs:
            if r.source_name not in sources:
                raise UnknownSource(
                    f"ground truth references unknown source {r.source_name!r}")
        candidates = [sources[r.source_name] for r in recs]
        scored = score_sources(target, candidates, cfg,
                               allow_mixed_extractors=args.allow_mixed_extractors)
        ranking = [s.source_name for s in scored]
        best_true = sorted(recs, key=lambda r: (-r.improvement, r.source_name))[0].source_name

        methods: dict[str, str | None] = {"P2L": ranking[0]}
        rankings: dict[str, list[str] | None] = {"P2L": ranking}
        for kind in ("B1", "B2", "B3", "B4", "B5"):
            if kind == "B2" and args.reference is None:
                continue
            if kind == "B3" and args.seed is None:
                continue
            rk = baseline_ranking(kind, target, candidates, cfg,
                                  reference_name=args.reference, rng_seed=args.seed,
                                  allow_mixed_extractors=args.allow_mixed_extractors)
            rankings[kind] = rk
            methods[kind] = None if rk is None else rk[0]
        gains = gain_table(recs, methods)
        perf = {r.source_name: r.perf_transfer for r in recs}
        scratch = recs[0].perf_scratch
        for method, selection in methods.items():
            p = scratch if selection is None else perf[selection]
            gain = 0.0 if method == "P2L" else gains[method]
            rk = rankings.get(method)
            pick = "" if rk is None else picks_to_best(rk, best_true)
            print(f"{target_name},{method},{'' if selection is None else selection},"
                  f"{fmt(p)},{fmt(gain)},{pick}")
    return EXIT_OK


def cmd_merge(args) -> int:
    registry = _registry(args)
    members = [registry.load(name) for name in args.members.split(",")]
    merged = merge_profiles(members, args.name)
    registry.save(merged, overwrite=args.force)
    print("name,size,dim")
    print(f"{merged.name},{merged.size},{merged.summary.dim}")
    _note(f"merged {len(members)} profiles into {merged.name!r}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = oracle.OracleConfig(epochs=args.epochs, learn_rate=args.learn_rate)
    world = oracle.default_world(args.seed, cfg, n_sources=args.sources,
                                 n_targets=args.targets,
                                 feature_dim=args.feature_dim,
                                 embed_dim=args.embed_dim)
    records = oracle.ground_truth(world, cfg)
    tasks, sources = oracle.calibration_tasks(world, records)
    eval_cfg = EvaluationConfig()
    report = tune_k(tasks, sources, eval_cfg)
    est = EstimatorConfig(distance=report.best_distance, k=report.best_k,
                          epsilon=eval_cfg.epsilon)
    study = oracle.run_study(world, cfg, est, eval_cfg, records=records)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_grid_csv(report, outdir / "grid.csv")
    oracle.write_study_files(study, outdir)
    print("seed,best_k,best_distance,mean_rho")
    print(f"{args.seed},{fmt(report.best_k)},{report.best_distance.value},"
          f"{fmt(study.mean_rho)}")
    _note(f"study report written to {outdir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="p2l",
        description="Rank candidate source datasets for transfer learning.")
    sub = parser.add_subparsers(dest="command", required=True)
    default_registry = os.environ.get("P2L_REGISTRY")

    def add_registry(p):
        p.add_argument("--registry", default=default_registry,
                       required=default_registry is None,
                       help="profile registry directory (default: $P2L_REGISTRY)")

    p = sub.add_parser("profile", help="summarize an embeddings file into the registry")
    p.add_argument("--input", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--size", default="auto", help="item count, or 'auto' for row count")
    p.add_argument("--summarizer", default="mean", help="mean or trimmed:<fraction>")
    p.add_argument("--role", default="source", choices=("source", "target"))
    p.add_argument("--force", action="store_true")
    add_registry(p)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("rank", help="rank registry sources for a target")
    p.add_argument("--target", required=True, help="embeddings file or profile name")
    p.add_argument("--distance", default="KL")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--top", type=int, default=None)
    p.add_argument("--baselines", action="store_true")
    p.add_argument("--reference", default=None, help="reference source for B2")
    p.add_argument("--seed", type=int, default=None, help="seed for the B3 baseline")
    p.add_argument("--allow-mixed-extractors", action="store_true")
    add_registry(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("calibrate", help="grid-search k and the distance kind")
    p.add_argument("--truth", required=True,
                   help="CSV: target,source,perf_transfer,perf_scratch")
    p.add_argument("--out", required=True, help="grid CSV output path")
    p.add_argument("--grid", default=None, help="k grid as min:max:step")
    p.add_argument("--kinds", default=None, help="comma-separated distance kinds")
    p.add_argument("--top", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=1e-6)
    add_registry(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="selection quality against ground truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--distance", default="KL")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--reference", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--allow-mixed-extractors", action="store_true")
    add_registry(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("merge", help="merge registry profiles into one")
    p.add_argument("--name", required=True)
    p.add_argument("--members", required=True, help="comma-separated profile names")
    p.add_argument("--force", action="store_true")
    add_registry(p)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("simulate", help="run the synthetic end-to-end study")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--sources", type=int, default=6)
    p.add_argument("--targets", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--learn-rate", type=float, default=0.1)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except STATE_ERRORS as exc:
        return _fail(str(exc), EXIT_STATE)
    except REFERENTIAL_ERRORS as exc:
        return _fail(str(exc), EXIT_REFERENTIAL)
    except INPUT_ERRORS as exc:
        return _fail(str(exc), EXIT_INPUT)
    except OSError as exc:
        return _fail(str(exc), EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
