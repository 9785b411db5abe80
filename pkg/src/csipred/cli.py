"""``csipred`` command line: generate | train | sweep | verify.

Log verbosity comes from the ``CSIPRED_LOG_LEVEL`` environment variable
(default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import csvio
from .errors import ConfigurationError, DomainError, ResourceError, SizingError, TrainingError
from .experiments import FIGURES, run_sweep, test_trace, trace_mse, train_trace
from .predictors import NEURAL_KINDS
from .simulation import dataset_from_traces, fit_predictor

log = logging.getLogger("csipred")


def _load(args):
    from .config import load_config
    exp = load_config(args.config)
    if args.seed is not None:
        exp = exp.with_seed(args.seed)
    return exp


def _meta(exp) -> dict:
    return {"config_hash": csvio.config_hash(exp.to_dict()), "seed": exp.seed}


def cmd_generate(args) -> int:
    exp = _load(args)
    out = Path(args.out or exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = exp.table()
    spec = exp.predictors[0]
    trace = train_trace(exp, table)
    stride = exp.scale.neural_stride if spec.kind in NEURAL_KINDS else None
    ds = dataset_from_traces([trace], spec, stride=stride, provenance=[exp.channel])
    meta = _meta(exp)
    trace.to_csv(out / "trace.csv", meta)
    files = ["trace.csv"]
    for split in ("train", "val", "test"):
        for j, batch in enumerate(getattr(ds, split)):
            name = f"{split}_track{j}.csv"
            batch.to_csv(out / name, meta)
            files.append(name)
    manifest = ds.manifest()
    manifest.update({"train_seed": exp.train_seed, "seed": exp.seed, "config_hash": meta["config_hash"],
                     "files": files})
    manifest["configs"][0]["seed"] = exp.train_seed
    manifest["configs"][0]["n_slots"] = exp.scale.train_slots
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(files)} files and manifest.json to {out}")
    return 0


def cmd_train(args) -> int:
    exp = _load(args)
    out = Path(args.out or exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = exp.table()
    meta = _meta(exp)
    rows = []
    for spec in exp.predictors:
        stride = exp.scale.neural_stride if spec.kind in NEURAL_KINDS else None
        ds = dataset_from_traces([train_trace(exp, table)], spec, stride=stride)
        model = fit_predictor(spec, ds, exp.train, seed=exp.seed, max_train_windows=exp.scale.max_train_windows)
        tag = f"{spec.kind}_{spec.target}_T{spec.t_csi}"
        for j, m in enumerate(model.models):
            if spec.kind in NEURAL_KINDS:
                m.save(out / f"{tag}_track{j}.ckpt")
                hist = model.info["history"][j]
                csvio.write_csv(out / f"{tag}_track{j}_loss.csv", ["epoch", "train_loss", "val_loss"], hist, meta)
            elif spec.kind == "wiener":
                (out / f"{tag}_track{j}.wiener").write_text(m.to_text())
        mse = trace_mse(model, test_trace(exp, table))
        rows.append([spec.kind, spec.target, spec.t_csi, model.flops, float(mse.mean())])
        log.info("trained %s: test MSE %.2f dB", tag, mse.mean())
    csvio.write_csv(out / "train_summary.csv", ["predictor", "target", "t_csi", "flops", "mse_db"], rows, meta)
    print(f"trained {len(rows)} predictor(s); summary in {out / 'train_summary.csv'}")
    return 0


def cmd_sweep(args) -> int:
    exp = _load(args)
    path = run_sweep(exp, args.figure, args.out, args.workers)
    print(f"wrote {path}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_checks
    table = args.table
    if table is None and args.config is not None:
        table = _load(args).cqi_table
    results = run_checks(table, inject=args.inject_fault)
    failed = [c.name for c in results if not c.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csipred", description="Effective-SINR prediction for link adaptation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", metavar="PATH", help="JSON experiment config (defaults if omitted)")
        sp.add_argument("--seed", type=int, help="global seed (overrides the config)")
        if out:
            sp.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")

    g = sub.add_parser("generate", help="simulate a trace and write windowed dataset CSVs")
    common(g)
    g.set_defaults(func=cmd_generate)
    t = sub.add_parser("train", help="fit every configured predictor and save checkpoints")
    common(t)
    t.set_defaults(func=cmd_train)
    s = sub.add_parser("sweep", help="run the sweep behind one results figure")
    common(s)
    s.add_argument("--figure", required=True, choices=FIGURES, metavar="KEY",
                   help="one of: " + ", ".join(FIGURES))
    s.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker processes")
    s.set_defaults(func=cmd_sweep)
    v = sub.add_parser("verify", help="run the oracle and invariant checks")
    common(v, out=False)
    v.add_argument("--table", metavar="PATH", help="CQI table to validate")
    v.add_argument("--inject-fault", choices=["gradient"],
                   help="negative control: corrupt the analytic gradients")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    level = os.environ.get("CSIPRED_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, SizingError, ResourceError, TrainingError) as exc:
        print(f"csipred: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
