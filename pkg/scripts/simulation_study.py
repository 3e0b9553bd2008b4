"""Simulation study: zero-inflated Tweedie boosting against plain Tweedie boosting.

Draws random-function datasets at a chosen overall zero rate, fits both models
on a training split and reports held-out mean deviance, Gini against a flat
premium, and the error of the fitted pure premium against the truth.

    python3 scripts/simulation_study.py --seeds 3 --zero-rate 0.9
"""
from __future__ import annotations

import argparse
import json

import numpy as np

from zitweedie.em import EmConfig, fit
from zitweedie.gbdt import BinnedData, BoostConfig, boost, init_constant
from zitweedie.losses import TweedieDevianceLoss
from zitweedie.metrics import ordered_lorenz_gini, point_metrics
from zitweedie.simulation import FunctionSpecs, Scaling, calibrate_zero_rate, make_dataset


def plain_tweedie(train, zeta, trees, max_leaves):
    loss = TweedieDevianceLoss(zeta)
    binned = BinnedData.from_array(train.X)
    f0 = init_constant(loss, train.y, train.w)
    res = boost(loss, binned, train.y, train.w, offsets=f0,
                config=BoostConfig(num_trees=trees, max_leaves=max_leaves, min_leaf_count=200))
    return lambda X: np.exp(f0 + res.ensemble.predict(X))


def one_seed(seed, args):
    rng = np.random.default_rng(seed)
    specs = FunctionSpecs.draw(args.p, rng)
    scaling = Scaling()
    if args.zero_rate is not None:
        scaling = calibrate_zero_rate(args.zero_rate, args.p, specs, scaling, args.zeta, rng)
    data, truth = make_dataset(args.n, args.p, specs, scaling, args.zeta, rng=rng)
    idx = rng.permutation(len(data))
    cut = int(len(data) * 2 / 3)
    tr, te = data.subset(idx[:cut]), data.subset(idx[cut:])
    true_pp = truth.pure_premium[idx[cut:]]

    cfg = EmConfig(max_em_iterations=args.em_iters, trees_per_m_step=args.trees).with_boost(
        max_leaves=args.max_leaves, min_leaf_count=200)
    zit = fit(tr, args.zeta, cfg)
    tw = plain_tweedie(tr, args.zeta, args.em_iters * args.trees, args.max_leaves)

    flat = np.full(len(te), np.average(tr.y, weights=tr.w))
    out = {"seed": seed, "zero_fraction": data.zero_fraction}
    for name, pred in (("intercept", flat), ("tweedie", tw(te.X)), ("zit", zit.pure_premium(te.X))):
        dev = point_metrics(pred, te.y, te.w, args.zeta)[2]
        gini = ordered_lorenz_gini(pred, te.y, None, te.w)[0] if name != "intercept" else 0.0
        rmse = float(np.sqrt(np.mean((pred - true_pp) ** 2)))
        out[name] = {"mean_deviance": dev, "gini": gini, "pure_premium_rmse": rmse}
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--n", type=int, default=30_000)
    ap.add_argument("--p", type=int, default=10)
    ap.add_argument("--zeta", type=float, default=1.5)
    ap.add_argument("--zero-rate", type=float, default=None)
    ap.add_argument("--em-iters", type=int, default=10)
    ap.add_argument("--trees", type=int, default=10)
    ap.add_argument("--max-leaves", type=int, default=7)
    ap.add_argument("--json", default=None, help="write per-seed results here")
    args = ap.parse_args()

    rows = [one_seed(s, args) for s in range(args.seeds)]
    print(f"{'seed':>4} {'zeros':>6} {'model':>9} {'deviance':>10} {'gini':>7} {'pp rmse':>9}")
    for r in rows:
        for name in ("intercept", "tweedie", "zit"):
            m = r[name]
            print(f"{r['seed']:>4} {r['zero_fraction']:>6.1%} {name:>9} {m['mean_deviance']:>10.5f} "
                  f"{m['gini']:>7.3f} {m['pure_premium_rmse']:>9.4f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
