"""Command line front end: ``bayeslrp <subcommand> --config FILE [--set key=value ...]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .attacks import attack_model
from .bayes import PosteriorEnsemble, hmc_sample, posterior_predictive, vi_fit, vi_sample
from .errors import BayesLRPError, ParameterError
from .harness.checkpoint import load_checkpoint, save_checkpoint
from .harness.config import ExperimentConfig, GeometryConfig, dump_config, load_config
from .harness.experiment import (SYNTHETIC_CLIP, Models, balanced_indices, load_datasets, run_experiment,
                                 run_geometry, summarize)
from .harness.report import emit_report, read_records
from .metrics import bayes_klrp_batch, softmax_robustness
from .nn import accuracy, init_weights, train_sgd
from .rng import substream

log = logging.getLogger("bayeslrp")

IO_EXIT = 6


def _overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ParameterError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _config(args, cls=ExperimentConfig):
    return load_config(args.config, _overrides(args.set), cls)


def _samples(weights):
    return weights.samples if isinstance(weights, PosteriorEnsemble) else np.asarray(weights)[None]


def _attack(cfg):
    clip = SYNTHETIC_CLIP if cfg.dataset == "synthetic-manifold" else (0.0, 1.0)
    return cfg.attack_spec().with_(clip_range=clip)


def _points(cfg, test, args):
    if args.points:
        return np.array([int(p) for p in args.points.split(",")])
    return balanced_indices(test.labels, cfg.test_size, test.class_count, substream(cfg.seed, "point-selection"))


def cmd_train(args):
    cfg = _config(args)
    train, test = load_datasets(cfg)
    spec = cfg.network(train.dim, train.class_count)
    w = train_sgd(spec, train, cfg.sgd_config())
    save_checkpoint(args.out, spec, w)
    print(f"train_accuracy={accuracy(spec, w, train):.4f} test_accuracy={accuracy(spec, w, test):.4f}")


def _init(args, cfg, spec):
    if args.init:
        _, w = load_checkpoint(args.init)
        return w
    return init_weights(spec, cfg.seed)


def cmd_infer_vi(args):
    cfg = _config(args)
    train, _ = load_datasets(cfg)
    spec = cfg.network(train.dim, train.class_count)
    post = vi_fit(spec, train, cfg.prior(), cfg.vi_config(), init_mu=_init(args, cfg, spec))
    ens = vi_sample(post, max(cfg.sample_counts), seed=cfg.seed)
    save_checkpoint(args.out, spec, ens)
    print(f"samples={len(ens)} final_elbo={post.elbo_trace[-1]:.6g}")


def cmd_infer_hmc(args):
    cfg = _config(args)
    train, _ = load_datasets(cfg)
    spec = cfg.network(train.dim, train.class_count)
    subset = train.subset(slice(0, min(cfg.hmc_subset, len(train))))
    ens = hmc_sample(spec, subset, cfg.prior(), cfg.hmc_config(), init=_init(args, cfg, spec))
    save_checkpoint(args.out, spec, ens)
    print(f"samples={len(ens)} acceptance_rate={ens.meta['acceptance_rate']:.4f}")
    if "warning" in ens.meta:
        print(ens.meta["warning"], file=sys.stderr)


def cmd_attack(args):
    cfg = _config(args)
    spec, weights = load_checkpoint(args.model)
    samples = _samples(weights)
    _, test = load_datasets(cfg)
    ids = _points(cfg, test, args)
    X, Y = test.inputs[ids], test.labels[ids]
    p = posterior_predictive(spec, samples, X)
    target = Y if cfg.attack_label == "true" else p.argmax(1)
    X_adv = attack_model(spec, samples, X, target, _attack(cfg))
    p_adv = posterior_predictive(spec, samples, X_adv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "adversarial.npy", X_adv)
    srob = softmax_robustness(p, p_adv)
    with open(out / "attack.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["point_id", "true_label", "clean_pred", "adv_pred", "softmax_rob", "linf"])
        for i, pid in enumerate(ids):
            wr.writerow([pid, Y[i], p[i].argmax(), p_adv[i].argmax(), repr(float(srob[i])),
                         repr(float(np.abs(X_adv[i] - X[i]).max()))])
    print(f"points={len(ids)} success_rate={np.mean(p.argmax(1) != p_adv.argmax(1)):.4f}")


def cmd_lrp(args):
    from .bayes import bayes_heatmap
    from .harness.plots import heatmap_pair

    cfg = _config(args)
    spec, weights = load_checkpoint(args.model)
    samples = _samples(weights)
    _, test = load_datasets(cfg)
    x = test.inputs[args.point]
    layer = spec.depth - 1 if args.layer is None else args.layer
    cls = int(np.argmax(posterior_predictive(spec, samples, x)))
    x_adv = attack_model(spec, samples, x, cls, _attack(cfg))
    seed = cls if layer == spec.depth - 1 else None
    hm = bayes_heatmap(spec, samples, x, layer, seed, cfg.lrp_eps, cfg.stabilizer)
    hm_adv = bayes_heatmap(spec, samples, x_adv, layer, seed, cfg.lrp_eps, cfg.stabilizer)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "heatmap.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["pixel", "relevance", "relevance_adv"])
        for i, (a, b) in enumerate(zip(hm.relevances, hm_adv.relevances)):
            wr.writerow([i, repr(float(a)), repr(float(b))])
    side = int(round(np.sqrt(spec.input_dim)))
    if side * side == spec.input_dim:
        heatmap_pair(hm.relevances, hm_adv.relevances, x, x_adv, args.k, out / "heatmap.png", side)
    rob = bayes_klrp_batch(spec, samples, x, x_adv, [args.k], layer, seed_class=seed,
                           eps=cfg.lrp_eps, stabilizer=cfg.stabilizer, ranking=cfg.ranking)[args.k]
    print(f"point={args.point} class={cls} layer={layer} k={args.k} klrp={float(rob):.4f}")


def cmd_robustness(args):
    cfg = _config(args)
    models = None
    if args.model:
        spec, w = load_checkpoint(args.model)
        models = Models(spec, w)
        for path in args.ensemble or []:
            _, ens = load_checkpoint(path)
            models.ensembles[f"bayes-{ens.method}"] = ens
        cfg.inference = tuple(k.split("-", 1)[1] for k in models.ensembles) or ("deterministic",)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(cfg))
    result = run_experiment(cfg, out, models=models, figures=not args.no_figures)
    for key, g in result.summary["groups"].items():
        print(f"{key}: softmax_rob={g['softmax_robustness_mean']:.3f} "
              f"success={g['attack_success_rate']:.3f} pearson={g.get('pearson_klrp_softmax')}")


def cmd_geometry(args):
    from .harness.plots import ratio_curve

    cfg = _config(args, GeometryConfig)
    result = run_geometry(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "zero_average.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["sample_count", "ratio", "degenerate_points"])
        for row in result["ratios"]:
            wr.writerow([row["sample_count"], repr(row["ratio"]), row["degenerate_points"]])
    (out / "geometry.json").write_text(json.dumps(result, indent=2, sort_keys=True, default=float) + "\n")
    if not args.no_figures:
        ratio_curve(result["ratios"], out / "zero_average.png")
    for row in result["ratios"]:
        print(f"N={row['sample_count']} ratio={row['ratio']:.4f}")


def cmd_report(args):
    records = read_records(args.records)
    summary = summarize(records)
    emit_report(records, args.out, summary, figures=not args.no_figures)
    print(json.dumps({k: g["softmax_robustness_mean"] for k, g in summary["groups"].items()}))


def build_parser():
    ap = argparse.ArgumentParser(prog="bayeslrp", description="Robustness of LRP explanations under attack")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help, config=True):
        p = sub.add_parser(name, help=help)
        if config:
            p.add_argument("--config", help="key = value config file")
            p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.set_defaults(func=fn)
        return p

    add("train", cmd_train, "train the deterministic network").add_argument("--out", required=True)
    for name, fn in (("infer-vi", cmd_infer_vi), ("infer-hmc", cmd_infer_hmc)):
        p = add(name, fn, f"sample a posterior ensemble ({name[6:].upper()})")
        p.add_argument("--init", help="checkpoint to start from")
        p.add_argument("--out", required=True)
    p = add("attack", cmd_attack, "attack test points")
    p.add_argument("--model", required=True)
    p.add_argument("--points", help="comma-separated test indices (default: balanced selection)")
    p.add_argument("--out", required=True)
    p = add("lrp", cmd_lrp, "explain one test point before and after attack")
    p.add_argument("--model", required=True)
    p.add_argument("--point", type=int, default=0)
    p.add_argument("--layer", type=int)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--out", required=True)
    p = add("robustness", cmd_robustness, "full attack/explanation pipeline")
    p.add_argument("--model", help="deterministic checkpoint (skips training)")
    p.add_argument("--ensemble", action="append", help="ensemble checkpoint(s)")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p = add("geometry", cmd_geometry, "zero-averaging of normal gradients on a synthetic manifold")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p = add("report", cmd_report, "rebuild tables and figures from records.csv", config=False)
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except BayesLRPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IO_EXIT
    return 0


if __name__ == "__main__":
    sys.exit(main())
