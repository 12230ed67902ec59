"""Command-line entry points.

Every subcommand accepts ``--config FILE`` (JSON) whose keys provide
defaults; explicit flags override the file. Reports are printed as stable
``key=value`` lines or ampersand-separated table rows.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .complexity import count_params_macs, measure_latency
from .harness import (TrainConfig, evaluate_model, format_table, mean_eval,
                      save_train_checkpoint, train)
from .manifest import load_manifest, load_record, require_labels
from .profiles import PROFILES, get_profile, load_profile
from .splits import load_plan, save_plan, split_folds
from .subjective import (RatingRecord, ScreeningConfig, SessionSpec,
                         fit_overall_regression, run_pipeline)
from .synth import generate_dataset


def _merge_config(args, keys):
    values = {}
    if getattr(args, "config", None):
        values.update(json.loads(Path(args.config).read_text()))
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def _resolve_profile(name_or_path: str):
    if name_or_path in PROFILES:
        return get_profile(name_or_path)
    return load_profile(name_or_path)


def _load_records(manifest_path, root, labelled=True):
    rows = load_manifest(manifest_path)
    if labelled:
        require_labels(rows)
    return rows, [load_record(row, root) for row in rows]


def cmd_synth_gen(args) -> int:
    cfg = _merge_config(args, ["out", "count", "seed", "size", "with_plan"])
    rows = generate_dataset(cfg["out"], int(cfg["count"]), int(cfg.get("seed", 0)),
                            int(cfg.get("size", 128)))
    print(f"generated={len(rows)}")
    print(f"manifest={Path(cfg['out']) / 'manifest.jsonl'}")
    if cfg.get("with_plan"):
        from .service import build_study_plan
        plan = build_study_plan(rows, root=cfg["out"], seed=int(cfg.get("seed", 0)))
        plan_path = Path(cfg["out"]) / "study_plan.json"
        plan_path.write_text(plan.to_json() + "\n")
        print(f"plan={plan_path}")
        print(f"plan_sessions={len(plan.sessions)}")
    return 0


def cmd_split(args) -> int:
    cfg = _merge_config(args, ["manifest", "seed", "out"])
    rows = load_manifest(cfg["manifest"])
    plan = split_folds([r.id for r in rows], int(cfg.get("seed", 0)))
    if cfg.get("out"):
        save_plan(plan, cfg["out"])
        print(f"plan={cfg['out']}")
    for i, fold in enumerate(plan.folds):
        print(f"fold{i}: train={len(fold['train'])} val={len(fold['val'])} "
              f"test={len(fold['test'])}")
    return 0


def cmd_train(args) -> int:
    cfg = _merge_config(args, ["manifest", "data_root", "profile", "split", "fold",
                               "lr", "batch_size", "max_steps", "seed", "out", "log"])
    profile = _resolve_profile(cfg.get("profile", "S"))
    rows, records = _load_records(cfg["manifest"], cfg.get("data_root", "."))
    by_id = {r.id: r for r in records}
    if cfg.get("split"):
        plan = load_plan(cfg["split"])
        fold = plan.folds[int(cfg.get("fold", 0))]
        train_recs = [by_id[i] for i in fold["train"]]
        val_recs = [by_id[i] for i in fold["val"]]
    else:
        train_recs, val_recs = records, []
    tconf = TrainConfig(lr=float(cfg.get("lr", 5e-5)),
                        batch_size=int(cfg.get("batch_size", 4)),
                        max_steps=int(cfg.get("max_steps", 2000)),
                        seed=int(cfg.get("seed", 0)))
    if tconf.lr != 5e-5:
        print(f"lr_override={tconf.lr} (baseline 5e-5)")
    result = train(train_recs, val_recs, profile, tconf, log_path=cfg.get("log"))
    print(f"final_train_mse={result.final_train_loss():.6f}")
    if result.best_val_srcc is not None:
        print(f"best_val_srcc={result.best_val_srcc:.4f} at_step={result.best_step}")
    out = cfg.get("out", "checkpoint.bin")
    save_train_checkpoint(out, result, tconf)
    print(f"checkpoint={out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _merge_config(args, ["checkpoint", "manifest", "data_root", "split",
                               "fold", "all_folds", "latency", "predictions"])
    model, header = ckpt.load_model(cfg["checkpoint"])
    rows, records = _load_records(cfg["manifest"], cfg.get("data_root", "."))
    by_id = {r.id: r for r in records}
    results = []
    if cfg.get("split"):
        plan = load_plan(cfg["split"])
        folds = (range(len(plan.folds)) if cfg.get("all_folds")
                 else [int(cfg.get("fold", 0))])
        for k in folds:
            test = [by_id[i] for i in plan.folds[k]["test"]]
            results.append(evaluate_model(model, test))
    else:
        results.append(evaluate_model(model, records))
    merged = mean_eval(results) if len(results) > 1 else results[0]
    report = count_params_macs(model.profile)
    latency_ms = None
    if cfg.get("latency"):
        latency_ms, _ = measure_latency(model, records[:20])
    print(format_table(f"faceiq-{model.profile.name}", merged,
                       params_m=report.params / 1e6, gmacs=report.macs / 1e9,
                       latency_ms=latency_ms))
    for flag in merged.flags:
        print(f"flag={flag}")
    if len(results) > 1:
        print("aggregation=mean_over_folds")
    if cfg.get("predictions"):
        from .harness import save_predictions
        save_predictions(cfg["predictions"], model, records)
        print(f"predictions={cfg['predictions']}")
    return 0


def cmd_complexity(args) -> int:
    cfg = _merge_config(args, ["profile"])
    profile = _resolve_profile(cfg.get("profile", "S"))
    report = count_params_macs(profile)
    for key, value in report.as_dict().items():
        print(f"{key}={value}")
    return 0


def cmd_latency(args) -> int:
    cfg = _merge_config(args, ["checkpoint", "manifest", "data_root", "images",
                               "warmup"])
    model, _ = ckpt.load_model(cfg["checkpoint"])
    rows, records = _load_records(cfg["manifest"], cfg.get("data_root", "."),
                                  labelled=False)
    mean_ms, timings = measure_latency(model, records,
                                       n_images=int(cfg.get("images", 100)),
                                       warmup=int(cfg.get("warmup", 10)))
    print(f"latency_ms={mean_ms:.3f}")
    print(f"measured_images={len(timings)}")
    print(f"min_ms={min(timings):.3f}")
    print(f"max_ms={max(timings):.3f}")
    return 0


def _load_ratings(path) -> list[RatingRecord]:
    records = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        records.append(RatingRecord(
            rater_id=obj["rater_id"], session_id=obj["session_id"],
            image_id=obj["image_id"], scores=tuple(obj["scores"]),
            role=obj.get("role", "test"), timestamp=obj.get("timestamp", 0.0)))
    return records


def _load_session_specs(path) -> dict[str, SessionSpec]:
    obj = json.loads(Path(path).read_text())
    specs = {}
    for sid, spec in obj.items():
        specs[sid] = SessionSpec(
            session_id=sid, test_image_ids=spec["test_image_ids"],
            golden=[(g[0], tuple(g[1])) for g in spec["golden"]],
            repeated=spec["repeated"])
    return specs


def cmd_mos(args) -> int:
    cfg = _merge_config(args, ["ratings", "sessions", "out", "fit"])
    records = _load_ratings(cfg["ratings"])
    specs = _load_session_specs(cfg["sessions"])
    report = run_pipeline(records, specs, ScreeningConfig())
    print(f"sessions_screened={len(report.session_results)}")
    print(f"sessions_discarded={len(report.discarded_sessions)}")
    print(f"ratings_removed={len(report.bt500.removed)}")
    print(f"raters_excluded={len(report.bt500.excluded_raters)}")
    print(f"images_with_mos={len(report.mos.entries)}")
    lines = ["image_id\tnoise\tsharpness\tcolorfulness\tcontrast\tfidelity\toverall"]
    for image_id in sorted(report.mos.entries):
        entry = report.mos.entries[image_id]
        lines.append(image_id + "\t" + "\t".join(f"{v:.4f}" for v in entry.mos))
    table = "\n".join(lines)
    if cfg.get("out"):
        Path(cfg["out"]).write_text(table + "\n")
        print(f"mos_table={cfg['out']}")
    else:
        print(table)
    if cfg.get("fit"):
        fit = fit_overall_regression(report.mos)
        coeffs = ",".join(f"{c:.4f}" for c in fit.coefficients)
        raw = ",".join(f"{c:.4f}" for c in fit.coefficients_no_intercept)
        print(f"fit_coefficients={coeffs}")
        print(f"fit_intercept={fit.intercept:.4f}")
        print(f"fit_coefficients_no_intercept={raw}")
        print(f"fit_r_squared={fit.r_squared:.4f}")
    return 0


def cmd_serve(args) -> int:
    cfg = _merge_config(args, ["plan", "store", "host", "port"])
    from .service import RatingService, StudyPlan, create_app
    import uvicorn

    plan = StudyPlan.from_json(Path(cfg["plan"]).read_text())
    service = RatingService(plan, cfg.get("store", "events.jsonl"))
    app = create_app(service)
    uvicorn.run(app, host=cfg.get("host", "127.0.0.1"),
                port=int(cfg.get("port", 8000)), log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faceiq",
                                     description="facial image quality toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, flags):
        p = sub.add_parser(name)
        p.add_argument("--config")
        for flag, kw in flags.items():
            p.add_argument(flag, **kw)
        p.set_defaults(fn=fn)
        return p

    add("synth-gen", cmd_synth_gen, {
        "--out": {}, "--count": {"type": int}, "--seed": {"type": int},
        "--size": {"type": int}, "--with-plan": {"action": "store_true",
                                                 "dest": "with_plan", "default": None}})
    add("split", cmd_split, {"--manifest": {}, "--seed": {"type": int}, "--out": {}})
    add("train", cmd_train, {
        "--manifest": {}, "--data-root": {"dest": "data_root"}, "--profile": {},
        "--split": {}, "--fold": {"type": int}, "--lr": {"type": float},
        "--batch-size": {"dest": "batch_size", "type": int},
        "--max-steps": {"dest": "max_steps", "type": int},
        "--seed": {"type": int}, "--out": {}, "--log": {}})
    add("eval", cmd_eval, {
        "--checkpoint": {}, "--manifest": {}, "--data-root": {"dest": "data_root"},
        "--split": {}, "--fold": {"type": int},
        "--all-folds": {"action": "store_true", "dest": "all_folds", "default": None},
        "--latency": {"action": "store_true", "default": None},
        "--predictions": {}})
    add("complexity", cmd_complexity, {"--profile": {}})
    add("latency", cmd_latency, {
        "--checkpoint": {}, "--manifest": {}, "--data-root": {"dest": "data_root"},
        "--images": {"type": int}, "--warmup": {"type": int}})
    add("mos", cmd_mos, {
        "--ratings": {}, "--sessions": {}, "--out": {},
        "--fit": {"action": "store_true", "default": None}})
    add("serve", cmd_serve, {
        "--plan": {}, "--store": {}, "--host": {}, "--port": {"type": int}})
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
