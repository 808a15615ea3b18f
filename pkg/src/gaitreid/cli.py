"""Command-line front end: synth, train, evaluate, report.

All commands read one YAML config (``--config``) with dotted overrides
(``--set section.key=value``); ``--seed``, ``--out`` and ``--jobs`` beat
the config file. Outputs are deterministic for a given config and seed:
rerunning a command rewrites byte-identical files, with timestamps
confined to ``train.log``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np

from .config import RunConfig, build_run_config, load_config
from .errors import ConfigError, EngineError, InvalidConfig, IoError, NumericFailure, ParseError
from .evaluate import EvalReport, evaluate_stage
from .figures import render_cmc, render_map_bars
from .head import load_head, save_head
from .stages import StagePair
from .store import load_dataset, save_clips
from .synth import generate, dataset_from_clips, plant_late_stage_consistency
from .trainer import FoldPlan, eligible_identities, make_folds, train_fold

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _fold_csv(out: Path, stage: StagePair) -> Path:
    return out / f"folds_{stage.tag}.csv"


def _head_path(out: Path, loss: str, stage: StagePair, fold: int) -> Path:
    return out / f"head_{loss}_{stage.tag}_fold{fold}.json"


def _eval_path(out: Path, loss: str, stage: StagePair, fold: int) -> Path:
    return out / f"eval_{loss}_{stage.tag}_fold{fold}.json"


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _write_json(path: Path, doc: Any) -> None:
    _write_text(path, json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise IoError(f"missing file {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def cmd_synth(cfg: RunConfig) -> int:
    synth_cfg = cfg.synth
    if cfg.plant_late_stage:
        synth_cfg = plant_late_stage_consistency(synth_cfg, cfg.late_stage_ratio)
    meta, clips = generate(synth_cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    target = cfg.out / "dataset.csv"
    save_clips(meta, clips, target)
    dataset = dataset_from_clips(meta, clips)
    print(f"wrote {target} ({len(clips)} clips, {len(dataset.records)} footage records)")
    print(f"identities: {len(dataset.identities)}")
    for rp in range(1, synth_cfg.rp_count + 1):
        count = sum(1 for r in dataset.records if r.recording_point == rp)
        print(f"  recording point {rp}: {count} footage records")
    for stage in cfg.stages:
        positives, negative_only = eligible_identities(dataset, stage)
        print(
            f"stage {stage.label}: {len(positives)} positive identities, "
            f"{len(negative_only)} negative-only"
        )
    return EXIT_OK


def _train_one(args: tuple):
    dataset, stage, plan, fold_index, train_cfg = args
    params, record = train_fold(dataset, stage, plan, fold_index, train_cfg)
    rows = [
        (epoch, record.epoch_mean_loss[epoch], record.active_fraction[epoch])
        for epoch in range(len(record.epoch_mean_loss))
    ]
    return fold_index, params, rows, sum(record.wall_time_s)


def cmd_train(cfg: RunConfig) -> int:
    if cfg.dataset is None:
        raise ConfigError("train needs a dataset path (config key 'dataset')")
    dataset = load_dataset(cfg.dataset)
    cfg.out.mkdir(parents=True, exist_ok=True)
    loss = cfg.train.loss_kind
    log_lines: list[str] = []
    for stage in cfg.stages:
        positives, negative_only = eligible_identities(dataset, stage)
        plan = make_folds(positives, cfg.train.folds, cfg.seed)
        fold_rows = [(rid, idx) for idx, fold in enumerate(plan.folds) for rid in fold]
        fold_rows.sort()
        _write_text(
            _fold_csv(cfg.out, stage),
            "runner_id,fold\n" + "".join(f"{rid},{idx}\n" for rid, idx in fold_rows),
        )
        tasks = [(dataset, stage, plan, i, cfg.train) for i in range(plan.k)]
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(_train_one, tasks))
        else:
            results = [_train_one(t) for t in tasks]
        results.sort(key=lambda r: r[0])
        log_rows: list[str] = ["fold,epoch,mean_loss,active_fraction\n"]
        for fold_index, params, rows, wall in results:
            path = _head_path(cfg.out, loss, stage, fold_index)
            save_head(params, path)
            for epoch, mean_loss, active in rows:
                log_rows.append(f"{fold_index},{epoch},{mean_loss!r},{active!r}\n")
            log_lines.append(
                f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {loss} {stage.label} "
                f"fold {fold_index}: {wall:.2f}s wall"
            )
            print(f"trained {loss} {stage.label} fold {fold_index} -> {path.name}")
        _write_text(cfg.out / f"trainlog_{loss}_{stage.tag}.csv", "".join(log_rows))
    with open(cfg.out / "train.log", "a", encoding="utf-8") as fh:
        for line in log_lines:
            fh.write(line + "\n")
    return EXIT_OK


def _report_doc(report: EvalReport) -> dict[str, Any]:
    return {
        "stage": report.stage.label,
        "map": report.map_value,
        "per_query_ap": report.per_query_ap,
        "cmc": report.cmc,
        "num_probes": report.num_probes,
        "num_gallery": report.num_gallery,
        "num_excluded": report.num_excluded,
        "excluded_ids": report.excluded_ids,
    }


def _load_fold_plan(out: Path, stage: StagePair) -> FoldPlan:
    path = _fold_csv(out, stage)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise IoError(f"missing file {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(text.splitlines())
    assignment: dict[str, int] = {}
    for row in reader:
        assignment[row["runner_id"]] = int(row["fold"])
    k = max(assignment.values()) + 1 if assignment else 0
    folds: list[list[str]] = [[] for _ in range(k)]
    for runner_id, fold in assignment.items():
        folds[fold].append(runner_id)
    return FoldPlan(k=k, folds=[sorted(f) for f in folds], seed=-1)


def cmd_evaluate(cfg: RunConfig) -> int:
    if cfg.dataset is None:
        raise ConfigError("evaluate needs a dataset path (config key 'dataset')")
    dataset = load_dataset(cfg.dataset)
    loss = cfg.train.loss_kind
    summary_rows: list[str] = ["stage,map\n"]
    for stage in cfg.stages:
        plan = _load_fold_plan(cfg.out, stage)
        maps: list[float] = []
        cmcs: list[list[float]] = []
        rank1s: list[float] = []
        probes = 0
        gallery = 0
        for fold_index in range(plan.k):
            head_file = _head_path(cfg.out, loss, stage, fold_index)
            if not head_file.exists():
                raise IoError(f"missing file {head_file}")
            head = load_head(head_file)
            report = evaluate_stage(
                head, dataset, stage, plan.folds[fold_index], max_rank=cfg.max_rank
            )
            _write_json(_eval_path(cfg.out, loss, stage, fold_index), _report_doc(report))
            maps.append(report.map_value)
            cmcs.append(report.cmc)
            rank1s.append(report.cmc[0])
            probes += report.num_probes
            gallery = report.num_gallery
        mean_map = float(np.mean(maps))
        width = min(len(c) for c in cmcs)
        mean_cmc = [float(np.mean([c[r] for c in cmcs])) for r in range(width)]
        _write_text(
            cfg.out / f"cmc_{loss}_{stage.tag}.csv",
            "rank,cmc\n" + "".join(f"{r + 1},{v!r}\n" for r, v in enumerate(mean_cmc)),
        )
        _write_json(
            cfg.out / f"summary_{loss}_{stage.tag}.json",
            {
                "stage": stage.label,
                "map": mean_map,
                "rank1": float(np.mean(rank1s)),
                "num_probes": probes,
                "num_gallery": gallery,
            },
        )
        summary_rows.append(f"{stage.label},{mean_map!r}\n")
        print(f"{loss} {stage.label}: mAP {mean_map:.4f} over {plan.k} folds")
    _write_text(cfg.out / f"summary_{loss}.csv", "".join(summary_rows))
    return EXIT_OK


def _scan_eval_files(out: Path) -> dict[tuple[str, str], list[dict]]:
    found: dict[tuple[str, str], list[dict]] = {}
    for path in sorted(out.glob("eval_*_fold*.json")):
        stem = path.stem  # eval_<loss>_s<A>to<B>_fold<k>
        parts = stem.split("_")
        if len(parts) != 4:
            continue
        _, loss, stage_tag, _ = parts
        found.setdefault((loss, stage_tag), []).append(_read_json(path))
    return found


def cmd_report(cfg: RunConfig) -> int:
    found = _scan_eval_files(cfg.out)
    if not found:
        raise IoError(f"missing file {cfg.out}/eval_*_fold*.json (run evaluate first)")
    merged: dict[str, dict[str, dict[str, float]]] = {}
    rows = ["loss,stage,folds,map_mean,map_std,rank1_mean,rank1_std\n"]
    bar_data: dict[str, dict[str, tuple[float, float]]] = {}
    for (loss, stage_tag), reports in sorted(found.items()):
        maps = np.array([r["map"] for r in reports])
        rank1 = np.array([r["cmc"][0] for r in reports])
        map_std = float(np.std(maps, ddof=1)) if len(maps) > 1 else 0.0
        rank1_std = float(np.std(rank1, ddof=1)) if len(rank1) > 1 else 0.0
        stage_label = reports[0]["stage"]
        entry = {
            "folds": len(reports),
            "map_mean": float(np.mean(maps)),
            "map_std": map_std,
            "rank1_mean": float(np.mean(rank1)),
            "rank1_std": rank1_std,
        }
        merged.setdefault(loss, {})[stage_label] = entry
        rows.append(
            f"{loss},{stage_label},{len(reports)},{entry['map_mean']!r},"
            f"{entry['map_std']!r},{entry['rank1_mean']!r},{entry['rank1_std']!r}\n"
        )
        bar_data.setdefault(loss, {})[stage_label] = (entry["map_mean"], entry["map_std"])
        width = min(len(r["cmc"]) for r in reports)
        mean_cmc = [float(np.mean([r["cmc"][i] for r in reports])) for i in range(width)]
        render_cmc(
            {f"{loss}": mean_cmc},
            cfg.out / f"fig_cmc_{loss}_{stage_tag}.png",
            f"CMC, {stage_label} ({loss} loss)",
        )
    _write_json(cfg.out / "report.json", merged)
    _write_text(cfg.out / "report.csv", "".join(rows))
    render_map_bars(bar_data, cfg.out / "fig_map.png")

    lines = ["loss         stage        folds   mAP (mean+/-std)    rank-1 (mean+/-std)"]
    for loss in sorted(merged):
        for stage_label in sorted(merged[loss]):
            e = merged[loss][stage_label]
            lines.append(
                f"{loss:<12} {stage_label:<12} {e['folds']:>5}   "
                f"{100 * e['map_mean']:6.2f} +/- {100 * e['map_std']:5.2f}     "
                f"{100 * e['rank1_mean']:6.2f} +/- {100 * e['rank1_std']:5.2f}"
            )
    table = "\n".join(lines) + "\n"
    _write_text(cfg.out / "report.txt", table)
    print(table, end="")
    return EXIT_OK


def _parse_args(argv: list[str] | None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="gaitreid",
        description="Train and evaluate checkpoint-to-checkpoint runner re-identification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "generate a synthetic clip-level embedding dataset"),
        ("train", "train heads with 10-fold cross-validation"),
        ("evaluate", "evaluate trained heads on held-out folds"),
        ("report", "merge fold reports into tables and figures"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", type=Path, default=None, help="YAML config file")
        cmd.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="K=V",
            help="override a config entry, e.g. --set train.epochs=5",
        )
        cmd.add_argument("--seed", type=int, default=None, help="root seed")
        cmd.add_argument("--out", type=Path, default=None, help="output directory")
        cmd.add_argument("--jobs", type=int, default=None, help="parallel fold workers")
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = _parse_args(argv)
    try:
        doc = load_config(args.config, args.overrides)
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.out is not None:
            doc["out"] = str(args.out)
        if args.jobs is not None:
            doc["jobs"] = args.jobs
        cfg = build_run_config(doc)
        handler = {
            "synth": cmd_synth,
            "train": cmd_train,
            "evaluate": cmd_evaluate,
            "report": cmd_report,
        }[args.command]
        return handler(cfg)
    except (ConfigError, InvalidConfig) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IoError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
