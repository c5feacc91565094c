"""Command-line entry point: scrape -> features -> label -> evaluate -> classify -> report.

Every artifact-writing subcommand drops a metadata sidecar next to its
output (tool version + full effective config, no timestamps) so runs are
auditable and reproducible. Only `scrape` mutates records/audio and only
`label` mutates the labels file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
from pathlib import Path

import numpy as np

from . import __version__, cache, figures, report as report_mod
from .archive import Archive, open_archive
from .audio import read_wav
from .dsp import EXPECTED_SAMPLE_RATE, MfccParams, compute_mfcc, truncate
from .errors import CacheError, EscapeError
from .hmm import DEFAULT_N_STATES, SimilarityMatrix, similarity_matrix
from .labeling import (
    DEFAULT_LABEL_SET,
    DEFAULT_THRESHOLD,
    LabelStore,
    LabelingSession,
    propagate,
)
from .learn import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_INNER_FOLDS,
    DEFAULT_N_REPEATS,
    DEFAULT_TEST_FRACTION,
    nested_cv_evaluate,
    pca,
    standardize_apply,
    standardize_fit,
    train_final_and_classify,
)
from .scraper import ScrapeConfig, scrape
from .server import serve_labeling
from .signatures import fit_gaussian

log = logging.getLogger("escape")

COOKIE_ENV_VAR = "ESCAPE_COOKIE"


def _write_sidecar(path: Path, command: str, config: dict) -> None:
    sidecar = {"tool": "escape", "version": __version__, "command": command, "config": config}
    path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _mfcc_params(args: argparse.Namespace) -> MfccParams:
    return MfccParams(
        window_length=args.window_length,
        window_step=args.window_step,
        n_filters=args.n_filters,
        n_cepstra=args.n_cepstra,
        fft_size=args.fft_size,
        pre_emphasis=args.pre_emphasis,
        lifter=args.lifter,
        energy_floor=args.energy_floor,
        max_duration=args.max_duration,
    )


def _add_mfcc_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("mfcc parameters")
    group.add_argument("--window-length", type=float, default=MfccParams.window_length)
    group.add_argument("--window-step", type=float, default=MfccParams.window_step)
    group.add_argument("--n-filters", type=int, default=MfccParams.n_filters)
    group.add_argument("--n-cepstra", type=int, default=MfccParams.n_cepstra)
    group.add_argument("--fft-size", type=int, default=MfccParams.fft_size)
    group.add_argument("--pre-emphasis", type=float, default=MfccParams.pre_emphasis)
    group.add_argument("--lifter", type=float, default=MfccParams.lifter)
    group.add_argument("--energy-floor", type=float, default=MfccParams.energy_floor)
    group.add_argument("--max-duration", type=float, default=MfccParams.max_duration)


def _parse_alpha_grid(text: str | None) -> tuple[float, ...]:
    if not text:
        return DEFAULT_ALPHA_GRID
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise EscapeError(f"--alpha-grid must be comma-separated numbers: {exc}") from exc
    if not values:
        raise EscapeError("--alpha-grid is empty")
    return values


def _features_path(args: argparse.Namespace) -> Path:
    if args.features:
        return Path(args.features)
    return Path(args.archive) / "features.npz"


def _load_features(args: argparse.Namespace) -> dict:
    path = _features_path(args)
    try:
        return cache.load_features(path)
    except CacheError as exc:
        raise EscapeError(f"{exc}\nhint: run `escape features --archive {args.archive}` first") from exc


def _labeled_ids(store: LabelStore) -> dict[str, str]:
    """Human-curated labels only (manual + propagated); classifier output is excluded."""
    return {cid: rec.label for cid, rec in store.records().items() if rec.source in ("manual", "propagated")}


def _build_similarity(args: argparse.Namespace, mfccs: dict, clip_ids: list[str]) -> SimilarityMatrix:
    """Load the similarity cache when it matches (ids, seed, states); rebuild otherwise."""
    path = Path(args.similarity) if args.similarity else Path(args.archive) / "similarity.npz"
    wanted = {"seed": args.seed, "n_states": args.n_states, "clip_ids": clip_ids}
    if path.exists():
        try:
            sim, params = cache.load_similarity(path)
            if params == wanted:
                log.info("similarity cache hit: %s", path)
                return sim
            log.info("similarity cache stale (parameters changed); rebuilding")
        except CacheError as exc:
            log.warning("ignoring unreadable similarity cache: %s", exc)
    log.info("fitting %d models and scoring %d pairs", len(clip_ids), len(clip_ids) ** 2)
    sim = similarity_matrix(
        [mfccs[cid] for cid in clip_ids],
        n_states=args.n_states,
        seed=args.seed,
        jobs=args.jobs,
    )
    cache.save_similarity(path, sim, params=wanted)
    return sim


def cmd_scrape(args: argparse.Namespace) -> int:
    cookie = ""
    if args.cookie_file:
        cookie = Path(args.cookie_file).read_text(encoding="utf-8").strip()
    elif os.environ.get(COOKIE_ENV_VAR):
        cookie = os.environ[COOKIE_ENV_VAR].strip()
    config = ScrapeConfig(
        base_url=args.base_url,
        cookie=cookie,
        page_size=args.page_size,
        activities_template=args.activities_template,
        audio_template=args.audio_template,
        max_retries=args.max_retries,
        backoff_ms=args.backoff_ms,
        jobs=args.jobs,
    )
    archive = Archive.create(args.archive)
    result = scrape(config, archive)
    _write_sidecar(
        archive.root / "scrape.meta.json",
        "scrape",
        {
            "base_url": config.base_url,
            "cookie": "<redacted>",
            "page_size": config.page_size,
            "activities_template": config.activities_template,
            "audio_template": config.audio_template,
            "max_retries": config.max_retries,
            "backoff_ms": config.backoff_ms,
        },
    )
    print(
        f"scraped {result.pages} page(s): {result.new_records} new record(s), "
        f"{result.audio_files} audio file(s), {result.skipped_existing} already present, "
        f"{result.skipped_malformed} malformed skipped"
    )
    for message in result.errors:
        print(f"  skipped: {message}", file=sys.stderr)
    return 0


def cmd_features(args: argparse.Namespace) -> int:
    archive = open_archive(args.archive)
    params = _mfcc_params(args)
    out_path = _features_path(args)
    mfccs = {}
    failures: list[tuple[str, str]] = []
    for record in archive.records_with_audio():
        try:
            clip = read_wav(archive.audio_path(record), clip_id=record.id)
            clip = truncate(clip, params.max_duration)
            mfccs[record.id] = compute_mfcc(clip, params)
        except EscapeError as exc:
            failures.append((record.id, str(exc)))
    if mfccs:
        cache.save_features(out_path, mfccs, params=vars(params) | {"sample_rate": EXPECTED_SAMPLE_RATE})
        _write_sidecar(
            Path(str(out_path) + ".meta.json"),
            "features",
            {"archive": str(args.archive), "params": vars(params)},
        )
    print(f"extracted features for {len(mfccs)} clip(s) -> {out_path}")
    if failures:
        print(f"{len(failures)} clip(s) failed:", file=sys.stderr)
        for clip_id, message in failures:
            print(f"  {clip_id}: {message}", file=sys.stderr)
    if failures and (args.strict or not mfccs):
        return 1
    return 0


def cmd_label(args: argparse.Namespace) -> int:
    archive = open_archive(args.archive)
    store = LabelStore(archive.labels_path, label_set=args.labels.split(","))

    if args.apply_classified:
        applied = skipped = 0
        with open(args.apply_classified, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                data = json.loads(line)
                if store.add_classified(data["clip_id"], data["label"]) is not None:
                    applied += 1
                else:
                    skipped += 1
        _write_sidecar(archive.root / "label.meta.json", "label", {"apply_classified": str(args.apply_classified)})
        print(f"applied {applied} classified label(s), {skipped} skipped (manual/propagated take precedence)")
        return 0

    mfccs = _load_features(args)
    signatures = {cid: fit_gaussian(m, epsilon=args.epsilon) for cid, m in mfccs.items()}

    if args.serve:
        host, _, port = args.serve.rpartition(":")
        session = LabelingSession(archive, signatures, store, threshold=args.threshold)
        server = serve_labeling(session, host=host or "127.0.0.1", port=int(port), static_dir=args.static_dir)
        print(f"labeling API on {server.url} (Ctrl-C to stop)")
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
        return 0

    result = propagate(signatures, store, threshold=args.threshold)
    _write_sidecar(
        archive.root / "label.meta.json",
        "label",
        {"threshold": args.threshold, "labels": list(store.label_set), "epsilon": args.epsilon},
    )
    print(f"propagated {result.newly_propagated} label(s); {len(result.queued_ids)} clip(s) queued for review")
    return 0


def _evaluation_csv(reports, out_path: Path) -> dict:
    train = [r.train_accuracy for r in reports]
    test = [r.test_accuracy for r in reports]
    summary = {
        "splits": len(reports),
        "median_train_accuracy": statistics.median(train),
        "median_test_accuracy": statistics.median(test),
        "mean_train_accuracy": statistics.fmean(train),
        "mean_test_accuracy": statistics.fmean(test),
        "perfect_test_splits": sum(1 for value in test if value == 1.0),
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("split_index,chosen_alpha,train_accuracy,test_accuracy\n")
        for r in reports:
            fh.write(f"{r.split_index},{r.chosen_alpha:.10g},{r.train_accuracy:.6f},{r.test_accuracy:.6f}\n")
        for key, value in summary.items():
            formatted = f"{value:.6f}" if isinstance(value, float) else str(value)
            fh.write(f"# {key} = {formatted}\n")
    return summary


def cmd_evaluate(args: argparse.Namespace) -> int:
    archive = open_archive(args.archive)
    store = LabelStore(archive.labels_path, label_set=args.labels.split(","))
    labels = _labeled_ids(store)
    mfccs = _load_features(args)
    clip_ids = [r.id for r in archive.records if r.id in labels and r.id in mfccs]
    if len(clip_ids) < 4:
        raise EscapeError(f"only {len(clip_ids)} labeled clips with features; need at least 4 to evaluate")
    sim = _build_similarity(args, mfccs, clip_ids)

    alpha_grid = _parse_alpha_grid(args.alpha_grid)
    reports = nested_cv_evaluate(
        sim,
        labels,
        n_repeats=args.splits,
        inner_folds=args.inner_folds,
        alpha_grid=alpha_grid,
        test_fraction=args.test_fraction,
        seed=args.seed,
    )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = _evaluation_csv(reports, out_dir / "evaluation.csv")

    # Projection of the standardized similarity matrix for all labeled clips.
    scaler = standardize_fit(sim.scores, list(range(len(clip_ids))))
    projected = pca(standardize_apply(scaler, sim.scores), n_components=min(3, len(clip_ids)))
    with open(out_dir / "pca.csv", "w", encoding="utf-8") as fh:
        n_comp = projected.projections.shape[1]
        fh.write("clip_id,label," + ",".join(f"pc{i + 1}" for i in range(n_comp)) + "\n")
        for i, cid in enumerate(clip_ids):
            coords = ",".join(f"{v:.10g}" for v in projected.projections[i])
            fh.write(f"{cid},{labels[cid]},{coords}\n")

    if not args.no_figures:
        figures.accuracy_violin(
            [r.train_accuracy for r in reports], [r.test_accuracy for r in reports], out_dir / "accuracy.png"
        )
        figures.pca_scatter(projected.projections, [labels[cid] for cid in clip_ids], out_dir / "pca.png")
    if args.export_similarity:
        sim.write_csv(out_dir / "similarity.csv")

    _write_sidecar(
        out_dir / "metadata.json",
        "evaluate",
        {
            "archive": str(args.archive),
            "seed": args.seed,
            "splits": args.splits,
            "inner_folds": args.inner_folds,
            "test_fraction": args.test_fraction,
            "alpha_grid": list(alpha_grid),
            "n_states": args.n_states,
            "labels": list(store.label_set),
        },
    )
    print(
        f"evaluated {args.splits} split(s) over {len(clip_ids)} labeled clips -> {out_dir / 'evaluation.csv'}\n"
        f"median train accuracy {summary['median_train_accuracy']:.3f}, "
        f"median test accuracy {summary['median_test_accuracy']:.3f}, "
        f"{summary['perfect_test_splits']}/{args.splits} perfect test splits"
    )
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    archive = open_archive(args.archive)
    store = LabelStore(archive.labels_path, label_set=args.labels.split(","))
    labels = _labeled_ids(store)
    if not labels:
        raise EscapeError("no manual or propagated labels; run `escape label` first")
    mfccs = _load_features(args)
    clip_ids = [r.id for r in archive.records if r.id in mfccs]
    sim = _build_similarity(args, mfccs, clip_ids)

    alpha_grid = _parse_alpha_grid(args.alpha_grid)
    result = train_final_and_classify(
        sim,
        {cid: label for cid, label in labels.items() if cid in mfccs},
        alpha_grid=alpha_grid,
        inner_folds=args.inner_folds,
        seed=args.seed,
    )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "classified.jsonl"
    with open(out_path, "w", encoding="utf-8") as fh:
        for cid in sorted(result.labels):
            fh.write(json.dumps({"clip_id": cid, "label": result.labels[cid], "source": "classified"}) + "\n")
    _write_sidecar(
        out_dir / "metadata.json",
        "classify",
        {
            "archive": str(args.archive),
            "seed": args.seed,
            "alpha_grid": list(alpha_grid),
            "chosen_alpha": result.chosen_alpha,
            "inner_folds": args.inner_folds,
            "n_states": args.n_states,
            "labels": list(store.label_set),
        },
    )
    print(
        f"classified {len(result.labels)} unlabeled clip(s) (alpha={result.chosen_alpha:g}) -> {out_path}\n"
        f"apply with: escape label --archive {args.archive} --apply-classified {out_path}"
    )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    archive = open_archive(args.archive)
    store = None
    if archive.labels_path.exists() or args.speaker:
        store = LabelStore(archive.labels_path, label_set=args.labels.split(","))
    usage = report_mod.usage_report(archive, store, speaker_filter=args.speaker)

    sections = {
        "status": report_mod.status_csv(usage),
        "device": report_mod.device_csv(usage),
        "intent": report_mod.intent_csv(usage),
    }
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, content in sections.items():
            (out_dir / f"{name}.csv").write_text(content, encoding="utf-8")
        if not args.no_figures:
            figures.counts_bar_chart(usage.status_counts, "interaction statuses", out_dir / "status.png")
            device_named = {f"{name} ({serial})": count for (name, serial), count in usage.device_counts.items()}
            figures.counts_bar_chart(device_named, "devices used", out_dir / "device.png")
            intent_named = {category.value: count for category, count in usage.intent_counts.items()}
            figures.counts_bar_chart(intent_named, "intents" + (f" ({args.speaker})" if args.speaker else ""), out_dir / "intent.png")
        _write_sidecar(
            out_dir / "metadata.json",
            "report",
            {"archive": str(args.archive), "speaker": args.speaker, "format": args.format},
        )
    if args.format == "csv":
        for name, content in sections.items():
            print(f"# section: {name}")
            print(content, end="")
    else:
        print(report_mod.render_text(usage), end="")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    problems: list[str] = []
    warnings: list[str] = []
    archive = open_archive(args.archive)
    for record in archive.records:
        audio_path = archive.audio_path(record)
        if audio_path is None:
            continue
        if not audio_path.exists():
            problems.append(f"{record.id}: audio file missing: {record.audio_file}")
            continue
        try:
            clip = read_wav(audio_path, clip_id=record.id)
        except EscapeError as exc:
            problems.append(f"{record.id}: {exc}")
            continue
        if clip.sample_rate != EXPECTED_SAMPLE_RATE:
            warnings.append(f"{record.id}: sample rate {clip.sample_rate} (features will reject it)")
    if archive.labels_path.exists():
        try:
            store = LabelStore(archive.labels_path, label_set=args.labels.split(","))
        except EscapeError as exc:
            problems.append(str(exc))
        else:
            for cid in store.records():
                if cid not in archive:
                    problems.append(f"label for unknown clip id {cid!r}")
    print(f"{len(archive.records)} record(s), {len(archive.records_with_audio())} with audio")
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    for message in problems:
        print(f"problem: {message}", file=sys.stderr)
    if problems:
        print(f"validation failed: {len(problems)} problem(s)", file=sys.stderr)
        return 1
    print("archive is consistent")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="escape", description=__doc__)
    parser.add_argument("--version", action="version", version=f"escape {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, features: bool = False, model: bool = False) -> None:
        p.add_argument("--archive", required=True, help="archive directory")
        p.add_argument("--jobs", type=int, default=1, help="worker parallelism cap")
        if features:
            p.add_argument("--features", help="features cache path (default <archive>/features.npz)")
        if model:
            p.add_argument("--similarity", help="similarity cache path (default <archive>/similarity.npz)")
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--n-states", type=int, default=DEFAULT_N_STATES)
            p.add_argument("--alpha-grid", help="comma-separated ridge strengths (default 1e-10..1e10 by powers of 10)")
            p.add_argument("--inner-folds", type=int, default=DEFAULT_INNER_FOLDS)
            p.add_argument("--labels", default=",".join(DEFAULT_LABEL_SET), help="comma-separated speaker label set")

    p = sub.add_parser("scrape", help="download new interactions into the archive")
    common(p)
    p.add_argument("--base-url", required=True)
    p.add_argument("--cookie-file", help=f"file holding the session cookie (or set {COOKIE_ENV_VAR})")
    p.add_argument("--page-size", type=int, default=50)
    p.add_argument("--activities-template", default=ScrapeConfig.activities_template)
    p.add_argument("--audio-template", default=ScrapeConfig.audio_template)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--backoff-ms", type=int, default=250)
    p.set_defaults(func=cmd_scrape)

    p = sub.add_parser("features", help="extract MFCC features for every clip with audio")
    common(p, features=True)
    _add_mfcc_flags(p)
    p.add_argument("--strict", action="store_true", help="nonzero exit if any clip fails")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("label", help="propagate labels, serve the review API, or apply classifier output")
    common(p, features=True)
    p.add_argument("--serve", metavar="HOST:PORT", help="start the labeling API (serves the UI build when present)")
    p.add_argument("--propagate-only", action="store_true", help="one headless propagation pass (default)")
    p.add_argument("--apply-classified", metavar="PATH", help="merge classify output into the labels file")
    p.add_argument("--static-dir", help="directory with built UI assets to serve at /")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="propagation divergence cutoff (strict <)")
    p.add_argument("--epsilon", type=float, default=1e-6, help="signature covariance regularization")
    p.add_argument("--labels", default=",".join(DEFAULT_LABEL_SET))
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("evaluate", help="nested cross-validation over the labeled clips")
    common(p, features=True, model=True)
    p.add_argument("--splits", type=int, default=DEFAULT_N_REPEATS)
    p.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION)
    p.add_argument("--out-dir", default="evaluation", help="where evaluation.csv, pca.csv and figures go")
    p.add_argument("--export-similarity", action="store_true", help="also write similarity.csv for audit")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("classify", help="fit the final model and label every unlabeled clip")
    common(p, features=True, model=True)
    p.add_argument("--out-dir", default="classification", help="where classified.jsonl goes")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("report", help="status/device/intent usage report")
    common(p)
    p.add_argument("--speaker", help="restrict intent counts to clips with this label")
    p.add_argument("--format", choices=("table", "csv"), default="table")
    p.add_argument("--out-dir", help="write CSVs and figures here")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--labels", default=",".join(DEFAULT_LABEL_SET))
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("validate", help="check archive consistency")
    common(p)
    p.add_argument("--labels", default=",".join(DEFAULT_LABEL_SET))
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if not args.verbose:
        logging.getLogger("escape").setLevel(logging.WARNING)
    try:
        return args.func(args)
    except EscapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
