"""End-to-end robustness experiment and the manifold geometry experiment."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..attacks import attack_model
from ..bayes import GaussianPrior, PosteriorEnsemble, hmc_sample, posterior_predictive, vi_fit, vi_sample
from ..errors import DegenerateInputError, ParameterError
from ..manifold import ManifoldSpec, make_manifold_dataset, zero_avg_statistic
from ..metrics import RobustnessRecord, klrp_grid, pearson_correlation, softmax_robustness
from ..nn import LabeledDataset, SGDConfig, accuracy, init_weights, mlp, train_sgd
from ..rng import substream
from .config import ExperimentConfig, GeometryConfig
from .idx import find_split, load_idx

log = logging.getLogger(__name__)

SYNTHETIC_CLIP = (-2.0, 2.0)


@dataclass
class Models:
    spec: object
    deterministic: np.ndarray
    ensembles: dict = field(default_factory=dict)
    train_accuracy: float = float("nan")
    test_accuracy: float = float("nan")


@dataclass
class ExperimentResult:
    records: list
    summary: dict
    models: Models | None = None


def load_datasets(cfg: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    if cfg.dataset == "synthetic-manifold":
        mspec = ManifoldSpec("circle", ambient_dim=10)
        train = make_manifold_dataset(mspec, cfg.train_size, seed=cfg.seed)
        test = make_manifold_dataset(mspec, max(cfg.test_size, 10), seed=cfg.seed + 1)
        return train, test
    train = load_idx(*find_split(cfg.data_dir, "train"))
    test = load_idx(*find_split(cfg.data_dir, "test"))
    if len(train) < cfg.train_size:
        raise ParameterError(f"train_size {cfg.train_size} exceeds the {len(train)} available images")
    return train.subset(slice(0, cfg.train_size)), test


def balanced_indices(labels, n: int, class_count: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` indices with floor(n / C) or one more per class where possible."""
    labels = np.asarray(labels)
    if n > len(labels):
        raise ParameterError(f"cannot select {n} of {len(labels)} points")
    pools = [rng.permutation(np.flatnonzero(labels == c)) for c in range(class_count)]
    quota = np.full(class_count, n // class_count)
    extra = n - quota.sum()
    for c in rng.permutation(class_count)[:extra]:
        quota[c] += 1
    short = 0
    for c in range(class_count):
        if quota[c] > len(pools[c]):
            short += quota[c] - len(pools[c])
            quota[c] = len(pools[c])
    # refill shortfalls from classes that still have points
    while short:
        for c in rng.permutation(class_count):
            if short and quota[c] < len(pools[c]):
                quota[c] += 1
                short -= 1
    chosen = np.concatenate([pools[c][:quota[c]] for c in range(class_count)])
    return np.sort(chosen)


def prepare_models(cfg: ExperimentConfig, train: LabeledDataset, test: LabeledDataset | None = None) -> Models:
    spec = mlp(train.dim, cfg.hidden, train.class_count)
    t0 = time.perf_counter()
    w = train_sgd(spec, train, cfg.sgd_config())
    models = Models(spec, w, train_accuracy=accuracy(spec, w, train))
    if test is not None:
        models.test_accuracy = accuracy(spec, w, test)
    log.info("SGD: train acc %.4f, test acc %.4f (%.1fs)", models.train_accuracy,
             models.test_accuracy, time.perf_counter() - t0)
    for method in cfg.inference:
        if method == "deterministic":
            continue
        t0 = time.perf_counter()
        if method == "hmc":
            subset = train.subset(slice(0, min(cfg.hmc_subset, len(train))))
            init = w if cfg.hmc_init == "sgd" else init_weights(spec, cfg.seed)
            ens = hmc_sample(spec, subset, cfg.prior(), cfg.hmc_config(), init=init)
        else:
            post = vi_fit(spec, train, cfg.prior(), cfg.vi_config(), init_mu=w)
            ens = vi_sample(post, max(cfg.sample_counts), seed=cfg.seed)
        if len(ens) < max(cfg.sample_counts):
            raise ParameterError(f"{method} kept {len(ens)} samples, fewer than {max(cfg.sample_counts)}")
        models.ensembles[f"bayes-{method}"] = ens
        log.info("%s: %d samples (%.1fs) %s", method, len(ens), time.perf_counter() - t0,
                 {k: v for k, v in ens.meta.items() if k != "seed"})
    return models


def spaced(ensemble: PosteriorEnsemble, n: int) -> np.ndarray:
    """``n`` samples spread evenly along the stored chain."""
    if not 1 <= n <= len(ensemble):
        raise ParameterError(f"cannot take {n} of {len(ensemble)} samples")
    idx = np.round(np.linspace(0, len(ensemble) - 1, n)).astype(int)
    return ensemble.samples[idx]


def evaluate_model(cfg: ExperimentConfig, spec, samples, X, Y, ids, kind: str, clip=(0.0, 1.0)) -> list:
    """Attack one model on every point and score prediction and explanation."""
    attack = cfg.attack_spec().with_(clip_range=clip)
    p = posterior_predictive(spec, samples, X)
    clean = np.argmax(p, axis=1)
    target = Y if cfg.attack_label == "true" else clean
    X_adv = attack_model(spec, samples, X, target, attack)
    p_adv = posterior_predictive(spec, samples, X_adv)
    adv = np.argmax(p_adv, axis=1)
    srob = softmax_robustness(p, p_adv)
    adv_seed = adv if cfg.seed_rule == "own" else clean
    grid = klrp_grid(spec, samples, X, X_adv, cfg.kgrid, cfg.layers, clean, adv_seed,
                     cfg.lrp_eps, cfg.stabilizer, cfg.ranking)
    primary = 0 if cfg.bayes_mode == "averaged-heatmap" else 1
    records = []
    for i, pid in enumerate(ids):
        records.append(RobustnessRecord(
            point_id=int(pid), true_label=int(Y[i]), clean_prediction=int(clean[i]),
            adversarial_prediction=int(adv[i]), softmax_robustness=float(srob[i]),
            klrp={key: float(v[primary][i]) for key, v in grid.items()},
            klrp_alt={key: float(v[1 - primary][i]) for key, v in grid.items()},
            model_kind=kind, sample_count=len(samples)))
    return records


def run_experiment(cfg: ExperimentConfig, out_dir=None, models: Models | None = None,
                   figures: bool = False) -> ExperimentResult:
    """Train, infer, attack, explain and score; optionally write the report.

    Records already computed are written to ``out_dir`` before an error
    propagates.
    """
    from .report import emit_report

    train, test = load_datasets(cfg)
    rng = substream(cfg.seed, "point-selection")
    ids = balanced_indices(test.labels, cfg.test_size, test.class_count, rng)
    X, Y = test.inputs[ids], test.labels[ids]
    clip = SYNTHETIC_CLIP if cfg.dataset == "synthetic-manifold" else (0.0, 1.0)
    records: list = []
    try:
        if models is None:
            models = prepare_models(cfg, train, test)
        spec = models.spec
        records += evaluate_model(cfg, spec, models.deterministic[None], X, Y, ids, "deterministic", clip)
        for kind in cfg.bayes_kinds:
            ens = models.ensembles[kind]
            for n in cfg.sample_counts:
                t0 = time.perf_counter()
                records += evaluate_model(cfg, spec, spaced(ens, n), X, Y, ids, kind, clip)
                log.info("evaluated %s N=%d (%.1fs)", kind, n, time.perf_counter() - t0)
    except BaseException:
        if out_dir is not None:
            emit_report(records, out_dir)
        raise
    summary = summarize(records)
    summary["sgd_train_accuracy"] = models.train_accuracy
    summary["sgd_test_accuracy"] = models.test_accuracy
    summary["ensembles"] = {k: {"size": len(e), **{m: v for m, v in e.meta.items()}}
                            for k, e in models.ensembles.items()}
    if out_dir is not None:
        emit_report(records, out_dir, summary, figures=figures)
    return ExperimentResult(records, summary, models)


def _group_key(r):
    return f"{r.model_kind}/N={r.sample_count}"


def _safe_pearson(xs, ys):
    try:
        return pearson_correlation(xs, ys), False
    except (DegenerateInputError, ParameterError):
        return None, True


def summarize(records) -> dict:
    """Per-group means, Bayesian-minus-deterministic gaps and correlations."""
    groups: dict[str, list] = {}
    for r in records:
        groups.setdefault(_group_key(r), []).append(r)
    keys = sorted(records[0].klrp) if records else [(0, 1)]
    last = max(l for l, _ in keys)
    kgrid = sorted({k for l, k in keys if l == last})
    k_scatter = 100 if 100 in kgrid else max(kgrid)
    out = {"groups": {}, "gaps": {}, "correlation_k": k_scatter, "pre_softmax_layer": last}
    for key, rs in groups.items():
        srob = np.array([r.softmax_robustness for r in rs])
        g = {
            "model_kind": rs[0].model_kind,
            "sample_count": rs[0].sample_count,
            "count": len(rs),
            "clean_accuracy": float(np.mean([r.clean_prediction == r.true_label for r in rs])),
            "attack_success_rate": float(np.mean([r.attack_succeeded for r in rs])),
            "softmax_robustness_mean": float(srob.mean()),
            "klrp_mean": {}, "klrp_alt_mean": {},
        }
        for (l, k) in rs[0].klrp:
            g["klrp_mean"][f"l{l}_k{k}"] = float(np.mean([r.klrp[l, k] for r in rs]))
            g["klrp_alt_mean"][f"l{l}_k{k}"] = float(np.mean([r.klrp_alt[l, k] for r in rs]))
        if (last, k_scatter) in rs[0].klrp:
            r_val, degenerate = _safe_pearson([r.klrp[last, k_scatter] for r in rs], srob)
            g["pearson_klrp_softmax"] = r_val
            g["pearson_degenerate"] = degenerate
        failed = [r for r in rs if not r.attack_succeeded]
        k_min = kgrid[0]
        g["failed_attacks"] = len(failed)
        g["klrp_failed_mean"] = (float(np.mean([r.klrp[last, k_min] for r in failed]))
                                 if failed and (last, k_min) in rs[0].klrp else None)
        out["groups"][key] = g
    det = groups.get("deterministic/N=1")
    if det:
        for key, rs in groups.items():
            if rs[0].model_kind == "deterministic":
                continue
            gap = {}
            for (l, k) in rs[0].klrp:
                b = np.array([r.klrp[l, k] for r in rs])
                d = np.array([r.klrp[l, k] for r in det])
                entry = {"gap": float(b.mean() - d.mean())}
                if np.var(b) > 0 or np.var(d) > 0:
                    test = stats.ttest_ind(b, d, equal_var=False, alternative="greater")
                    entry["welch_t"] = float(test.statistic)
                    entry["welch_p"] = float(test.pvalue)
                gap[f"l{l}_k{k}"] = entry
            out["gaps"][key] = gap
    return out


# ---------------------------------------------------------------- geometry


def run_geometry(cfg: GeometryConfig) -> dict:
    """Train on a circle/torus in R^d, sample the posterior, and track how the
    ensemble-mean normal gradient shrinks with the number of samples."""
    mspec = ManifoldSpec(cfg.kind, cfg.ambient_dim, frequency=cfg.frequency)
    train = make_manifold_dataset(mspec, cfg.n_train, seed=cfg.seed)
    points = make_manifold_dataset(mspec, cfg.n_eval, seed=cfg.seed + 1).inputs
    spec = mlp(cfg.ambient_dim, cfg.hidden, 2)
    sgd = SGDConfig(cfg.sgd_learning_rate, cfg.sgd_epochs, cfg.sgd_batch_size, cfg.seed)
    w = train_sgd(spec, train, sgd)
    train_acc = accuracy(spec, w, train)
    log.info("geometry SGD train accuracy %.4f", train_acc)
    ens = hmc_sample(spec, train, GaussianPrior(cfg.prior_std), cfg.hmc_config(), init=w)
    ens_acc = float(np.mean(np.argmax(posterior_predictive(spec, ens, train.inputs), 1) == train.labels))
    rows = []
    for n in cfg.sample_counts:
        res = zero_avg_statistic(spec, spaced(ens, n), mspec, points, cfg.class_index)
        rows.append({"sample_count": n, "ratio": res.ratio, "degenerate_points": int(res.degenerate.sum())})
        log.info("zero-average ratio N=%d: %.4f", n, res.ratio)
    return {"train_accuracy": train_acc, "ensemble_train_accuracy": ens_acc,
            "hmc": dict(ens.meta), "ratios": rows}

