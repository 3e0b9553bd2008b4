"""Command-line interface: simulate, train, predict, evaluate, undersample.

Exit status is 0 on success, 1 on data or fitting errors and 2 on bad
usage; failures print a single ``zitweedie: error: ...`` line to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from . import __version__
from .data import DataError, atomic_write_text, load_csv, undersample_indices, write_csv, write_table
from .em import EmConfig, fit
from .io import ArtifactError, load_model, save_model
from .metrics import evaluate
from .profile import ZetaGrid, fit_profile
from .simulation import FunctionSpecs, Scaling, calibrate_zero_rate, make_dataset

PROG = "zitweedie"


class UsageError(Exception):
    pass


def _split_list(text):
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def build_parser():
    p = argparse.ArgumentParser(prog=PROG, description="Zero-inflated Tweedie boosting.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log EM progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a synthetic zero-inflated Tweedie dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--zeta", type=float, default=1.5)
    s.add_argument("--target-zero-rate", type=float, default=None,
                   help="calibrate the zero-state intercept to this overall zero fraction")
    s.add_argument("--exposure", choices=("unit", "uniform"), default="unit")
    s.add_argument("--out", required=True)
    s.add_argument("--truth", default=None, help="per-row true mu, phi, pi and pure premium")

    t = sub.add_parser("train", help="fit a model by generalized EM")
    t.add_argument("--data", required=True)
    t.add_argument("--target", default="y")
    t.add_argument("--exposure", default=None)
    t.add_argument("--categoricals", default="", help="comma-separated categorical columns")
    z = t.add_mutually_exclusive_group()
    z.add_argument("--zeta", type=float, default=None)
    z.add_argument("--zeta-grid", default=None, help="a:b:step profile grid, e.g. 1.3:1.7:0.1")
    t.add_argument("--em-iters", type=int, default=EmConfig.max_em_iterations)
    t.add_argument("--trees-per-step", type=int, default=EmConfig.trees_per_m_step)
    t.add_argument("--learning-rate", type=float, default=0.1)
    t.add_argument("--max-leaves", type=int, default=31)
    t.add_argument("--min-leaf-count", type=int, default=20)
    t.add_argument("--dispersion-update", choices=("exact", "eql"), default="exact")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--threads", type=int, default=1)
    t.add_argument("--jobs", type=int, default=1, help="parallel grid fits")
    t.add_argument("--model-out", required=True)

    pr = sub.add_parser("predict", help="per-row mu, phi, pi and pure premium")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)

    e = sub.add_parser("evaluate", help="hold-out metrics and ordered Lorenz curve")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--metrics-out", required=True)
    e.add_argument("--lorenz-out", default=None)
    e.add_argument("--weight-by", choices=("exposure", "count"), default="exposure")

    u = sub.add_parser("undersample", help="keep all zero rows and a fraction of the others")
    u.add_argument("--data", required=True)
    u.add_argument("--target", default="y")
    u.add_argument("--keep-fraction", type=float, required=True)
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--out", required=True)
    return p


def cmd_simulate(a):
    if a.n < 1 or a.p < 1:
        raise UsageError("--n and --p must be positive")
    rng = np.random.default_rng(a.seed)
    specs = FunctionSpecs.draw(a.p, rng)
    scaling = Scaling()
    if a.target_zero_rate is not None:
        if not 0 < a.target_zero_rate < 1:
            raise UsageError("--target-zero-rate must lie in (0, 1)")
        scaling = calibrate_zero_rate(a.target_zero_rate, a.p, specs, scaling, a.zeta, rng)
    data, truth = make_dataset(a.n, a.p, specs, scaling, a.zeta, a.exposure, rng)
    write_csv(a.out, data)
    if a.truth:
        write_table(a.truth, truth.as_columns())
    logging.info("wrote %d rows (%.1f%% zeros) to %s", len(data), 100 * data.zero_fraction, a.out)


def _em_config(a):
    cfg = EmConfig(max_em_iterations=a.em_iters, trees_per_m_step=a.trees_per_step,
                   dispersion_update=a.dispersion_update)
    return cfg.with_boost(learning_rate=a.learning_rate, max_leaves=a.max_leaves,
                          min_leaf_count=a.min_leaf_count, seed=a.seed, n_threads=a.threads)


def cmd_train(a):
    data = load_csv(a.data, a.target, a.exposure, _split_list(a.categoricals))
    cfg = _em_config(a)
    if a.zeta_grid is not None:
        grid = ZetaGrid.parse(a.zeta_grid)
        res = fit_profile(data, grid, cfg, n_jobs=a.jobs)
        model = res.best_model
        model.training_meta["profile"] = [{"zeta": z, "loglik": ll} for z, ll in res.table]
        logging.info("profile selected zeta=%s", res.best_zeta)
    else:
        model = fit(data, 1.5 if a.zeta is None else a.zeta, cfg)
    save_model(model, a.model_out)
    logging.info("saved model (zeta=%s, loglik=%.6f) to %s",
                 model.zeta, model.training_meta["final_loglik"], a.model_out)


def _load_for(model, path):
    if model.schema is None:
        raise DataError("model artifact has no feature schema")
    return load_csv(path, model.schema.target, schema=model.schema)


def cmd_predict(a):
    model = load_model(a.model)
    data = _load_for(model, a.data)
    write_table(a.out, model.predict(data.X))


def cmd_evaluate(a):
    model = load_model(a.model)
    data = _load_for(model, a.data)
    report = evaluate(model, data, weight_by=a.weight_by)
    atomic_write_text(a.metrics_out, json.dumps(report.scalars(), indent=1) + "\n")
    if a.lorenz_out:
        write_table(a.lorenz_out, {"premium_share": report.lorenz[:, 0], "loss_share": report.lorenz[:, 1]})


def cmd_undersample(a):
    # works on raw rows so every column passes through untouched
    with open(a.data, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{a.data}: empty file, header row required")
    header, body = rows[0], rows[1:]
    if a.target not in header:
        raise DataError(f"{a.data}: missing target column {a.target!r}")
    col = header.index(a.target)
    y = np.empty(len(body))
    for i, row in enumerate(body):
        try:
            y[i] = float(row[col])
        except (ValueError, IndexError):
            raise DataError(f"{a.data}:{i + 2}: target {row[col] if col < len(row) else ''!r} is not a number") from None
    keep = undersample_indices(y, a.keep_fraction, a.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(body[i] for i in keep)
    atomic_write_text(a.out, buf.getvalue())


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "undersample": cmd_undersample,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed its one-line error
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format=f"{PROG}: %(message)s")
    try:
        COMMANDS[a.command](a)
    except UsageError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ArtifactError, OSError, ValueError, RuntimeError) as exc:
        msg = " ".join(str(exc).split())
        print(f"{PROG}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
