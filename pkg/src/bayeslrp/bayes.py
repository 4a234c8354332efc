"""Posterior approximation: mean-field variational inference and HMC.

Both samplers work on any differentiable log-likelihood over a flat
parameter vector; :func:`vi_fit` and :func:`hmc_sample` bind that to the
categorical likelihood of a network on a labelled dataset.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergenceError, ParameterError
from .lrp import ALL_UNITS, Heatmap, _check_layer, lrp_relevances
from .nn import LabeledDataset, NetworkSpec, forward, init_weights, loss_and_grads, softmax
from .rng import substream

log = logging.getLogger(__name__)

LogLikFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class GaussianPrior:
    std: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.std) and self.std > 0):
            raise ParameterError("prior std must be finite and positive")

    def log_prob_and_grad(self, w):
        # constant normalizer dropped
        return -0.5 * float(w @ w) / self.std**2, -w / self.std**2


@dataclass
class PosteriorEnsemble:
    samples: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if len(self.samples) == 0:
            raise ParameterError("an ensemble needs at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ParameterError("ensemble contains non-finite weights")

    def __len__(self):
        return len(self.samples)

    def head(self, n: int) -> "PosteriorEnsemble":
        """First ``n`` samples (nested ensembles share their prefix)."""
        if not 1 <= n <= len(self):
            raise ParameterError(f"cannot take {n} of {len(self)} samples")
        return PosteriorEnsemble(self.samples[:n], self.method, dict(self.meta, sample_count=n))


def _samples(ensemble):
    if isinstance(ensemble, PosteriorEnsemble):
        return ensemble.samples
    samples = np.atleast_2d(np.asarray(ensemble, dtype=np.float64))
    if len(samples) == 0:
        raise ParameterError("empty ensemble")
    return samples


def network_loglik(spec: NetworkSpec, data: LabeledDataset, scale: float = 1.0) -> LogLikFn:
    """Full-batch categorical log-likelihood and its gradient."""
    def fn(w):
        if len(data) == 0:
            return 0.0, np.zeros_like(w)
        loss, gw, _ = loss_and_grads(spec, w, data.inputs, data.labels, need_input=False)
        return -scale * loss, -scale * gw
    return fn


# ---------------------------------------------------------------- VI


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def gaussian_kl(mu, std, prior_std: float) -> float:
    """KL(N(mu, std^2) || N(0, prior_std^2)) summed over coordinates."""
    mu = np.asarray(mu)
    std = np.asarray(std)
    return float(np.sum(np.log(prior_std / std) + (std**2 + mu**2) / (2 * prior_std**2) - 0.5))


@dataclass
class VariationalPosterior:
    mu: np.ndarray
    rho: np.ndarray
    elbo_trace: list = field(default_factory=list)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        if self.mu.shape != self.rho.shape:
            raise ParameterError("mu and rho lengths differ")

    @property
    def std(self) -> np.ndarray:
        return softplus(self.rho)

    def kl(self, prior: GaussianPrior) -> float:
        return gaussian_kl(self.mu, self.std, prior.std)


@dataclass
class VIConfig:
    steps: int = 2000
    learning_rate: float = 1e-3
    mc_samples: int = 1
    batch_size: int | None = None
    init_rho: float = -5.0
    lr_decay: float = 0.0
    seed: int = 0


def fit_mean_field(loglik: LogLikFn, dim: int, prior: GaussianPrior, hyper: VIConfig,
                   init_mu=None, batch_loglik: Callable[[np.random.Generator], LogLikFn] | None = None
                   ) -> VariationalPosterior:
    """Maximize a reparameterized Monte Carlo ELBO with Adam.

    ``batch_loglik``, when given, is called once per step and returns an
    unbiased (rescaled) minibatch log-likelihood to use in place of
    ``loglik``.
    """
    rng = substream(hyper.seed, "vi")
    mu = np.zeros(dim) if init_mu is None else np.array(init_mu, dtype=np.float64)
    rho = np.full(dim, float(hyper.init_rho))
    post = VariationalPosterior(mu, rho)
    params = np.concatenate([mu, rho])
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    b1, b2, tiny = 0.9, 0.999, 1e-8
    for t in range(1, hyper.steps + 1):
        mu, rho = params[:dim], params[dim:]
        std = softplus(rho)
        fn = loglik if batch_loglik is None else batch_loglik(rng)
        g_mu = np.zeros(dim)
        g_rho = np.zeros(dim)
        ll = 0.0
        for _ in range(hyper.mc_samples):
            zeta = rng.standard_normal(dim)
            w = mu + std * zeta
            value, grad = fn(w)
            ll += value
            g_mu += grad
            g_rho += grad * zeta
        ll /= hyper.mc_samples
        g_mu /= hyper.mc_samples
        g_rho /= hyper.mc_samples
        # d std / d rho = sigmoid(rho)
        dstd = 1.0 / (1.0 + np.exp(-rho))
        g_mu -= mu / prior.std**2
        g_rho = (g_rho - std / prior.std**2 + 1.0 / std) * dstd
        elbo = ll - gaussian_kl(mu, std, prior.std)
        if not np.isfinite(elbo):
            raise DivergenceError(f"ELBO became non-finite at step {t}", epoch=t)
        post.elbo_trace.append(elbo)
        grad = -np.concatenate([g_mu, g_rho])
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad**2
        lr = hyper.learning_rate / (1.0 + hyper.lr_decay * t)
        params = params - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + tiny)
    post.mu = params[:dim].copy()
    post.rho = params[dim:].copy()
    return post


def vi_fit(spec: NetworkSpec, data: LabeledDataset, prior: GaussianPrior = GaussianPrior(),
           hyper: VIConfig = VIConfig(), init_mu=None) -> VariationalPosterior:
    """Mean-field Gaussian posterior over the network weights."""
    if len(data) == 0:
        raise ParameterError("cannot fit a posterior to an empty dataset")
    if init_mu is None:
        init_mu = init_weights(spec, hyper.seed)
    batch_fn = None
    if hyper.batch_size and hyper.batch_size < len(data):
        n, bs = len(data), hyper.batch_size

        def batch_fn(rng):
            idx = rng.choice(n, size=bs, replace=False)
            return network_loglik(spec, data.subset(idx), scale=n / bs)
    return fit_mean_field(network_loglik(spec, data), spec.n_params, prior, hyper, init_mu, batch_fn)


def vi_sample(post: VariationalPosterior, n: int, seed: int = 0) -> PosteriorEnsemble:
    if n < 1:
        raise ParameterError("need at least one sample")
    rng = substream(seed, "vi-sample")
    zeta = rng.standard_normal((n, post.mu.size))
    samples = post.mu + post.std * zeta
    meta = {"seed": seed}
    if post.elbo_trace:
        meta["final_elbo"] = post.elbo_trace[-1]
    return PosteriorEnsemble(samples, "vi", meta)


# ---------------------------------------------------------------- HMC


def leapfrog(w, p, grad_u: Callable[[np.ndarray], np.ndarray], step: float, n_steps: int, g=None):
    """Velocity Verlet with unit mass; returns ``(w, p, grad_u(w))``."""
    w = w.copy()
    p = p.copy()
    g = grad_u(w) if g is None else g
    for _ in range(n_steps):
        p -= 0.5 * step * g
        w += step * p
        g = grad_u(w)
        p -= 0.5 * step * g
    return w, p, g


def hamiltonian(u: float, p) -> float:
    return u + 0.5 * float(p @ p)


@dataclass
class HMCConfig:
    step_size: float = 1e-3
    leapfrog_steps: int = 20
    draws: int = 500
    burn_in: int | None = None
    thinning: int | None = None
    seed: int = 0
    min_samples: int = 100


def _schedule(hyper: HMCConfig):
    burn = hyper.burn_in if hyper.burn_in is not None else int(0.2 * hyper.draws)
    kept = hyper.draws - burn
    if kept < 1:
        raise ParameterError("burn-in consumes every draw")
    thin = hyper.thinning if hyper.thinning is not None else max(1, kept // hyper.min_samples)
    return burn, thin


def run_hmc(potential: Callable[[np.ndarray], tuple[float, np.ndarray]], init, hyper: HMCConfig):
    """Metropolis-corrected leapfrog chain on ``potential(w) -> (U, grad U)``.

    Returns the retained draws and a metadata dict with the acceptance rate.
    """
    burn, thin = _schedule(hyper)
    rng = substream(hyper.seed, "hmc")
    w = np.array(init, dtype=np.float64)
    u, g = potential(w)
    kept = []
    accepted = 0
    energy_err = []
    cache = {}

    def grad_u(q):
        val, grad = potential(q)
        cache["u"] = val
        return grad

    for i in range(hyper.draws):
        p0 = rng.standard_normal(w.shape)
        h0 = hamiltonian(u, p0)
        if hyper.step_size > 0:
            w1, p1, g1 = leapfrog(w, p0, grad_u, hyper.step_size, hyper.leapfrog_steps, g)
            u1 = cache["u"]
            h1 = hamiltonian(u1, p1) if np.all(np.isfinite(w1)) else np.inf
        else:
            w1, g1, u1, h1 = w, g, u, h0
        dh = h1 - h0
        energy_err.append(dh)
        if np.isfinite(dh) and np.log(rng.uniform()) < -dh:
            w, u, g = w1, u1, g1
            accepted += 1
        if i >= burn and (i - burn) % thin == 0:
            kept.append(w.copy())
    rate = accepted / hyper.draws
    meta = {"seed": hyper.seed, "burn_in": burn, "thinning": thin, "acceptance_rate": rate,
            "step_size": hyper.step_size, "leapfrog_steps": hyper.leapfrog_steps,
            "mean_abs_energy_error": float(np.mean(np.abs(np.nan_to_num(energy_err, posinf=1e300))))}
    if rate < 0.05:
        meta["warning"] = f"poorly tuned: acceptance rate {rate:.3f}"
        log.warning("HMC %s", meta["warning"])
    return np.array(kept), meta


def hmc_sample(spec: NetworkSpec, data: LabeledDataset, prior: GaussianPrior = GaussianPrior(),
               hyper: HMCConfig = HMCConfig(), init=None) -> PosteriorEnsemble:
    """HMC on ``U(w) = -log p(D|w) - log p(w)`` with full-batch gradients.

    An empty dataset samples the prior.  ``init`` defaults to the seeded
    network initialization.
    """
    loglik = network_loglik(spec, data)

    def potential(w):
        ll, gll = loglik(w)
        lp, glp = prior.log_prob_and_grad(w)
        return -(ll + lp), -(gll + glp)

    if init is None:
        init = init_weights(spec, hyper.seed)
    samples, meta = run_hmc(potential, init, hyper)
    return PosteriorEnsemble(samples, "hmc", meta)


# ---------------------------------------------------------------- predictions


def posterior_predictive(spec: NetworkSpec, ensemble, x) -> np.ndarray:
    """Bayesian model average of per-sample softmax outputs."""
    samples = _samples(ensemble)
    total = 0.0
    for w in samples:
        total = total + softmax(forward(spec, w, x).logits)
    return total / len(samples)


def bayes_relevances(spec: NetworkSpec, ensemble, x, layer=None, seed_class=None, eps=0.1,
                     stabilizer="sign-matched", keep_samples=False):
    """Mean relevance over the ensemble (batched over ``x`` rows).

    ``seed_class=None`` seeds every sample with the class the posterior
    predictive picks, so all members explain the same decision.
    """
    samples = _samples(ensemble)
    layer = _check_layer(spec, layer)
    if seed_class is None:
        seed_class = (np.argmax(posterior_predictive(spec, samples, x), axis=-1)
                      if layer == spec.depth - 1 else ALL_UNITS)
    per_sample = []
    total = 0.0
    for w in samples:
        R = lrp_relevances(spec, w, forward(spec, w, x), layer, seed_class, eps, stabilizer)
        total = total + R
        if keep_samples:
            per_sample.append(R)
    mean = total / len(samples)
    return (mean, np.array(per_sample)) if keep_samples else mean


def bayes_heatmap(spec: NetworkSpec, ensemble, x, layer=None, seed_class=None, eps=0.1,
                  stabilizer="sign-matched", keep_samples=False):
    """Heatmap averaged over posterior samples.

    With ``keep_samples`` the per-sample relevances are returned as well.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ParameterError("bayes_heatmap takes a single input; use bayes_relevances for batches")
    layer = _check_layer(spec, layer)
    if seed_class is None and layer == spec.depth - 1:
        seed_class = int(np.argmax(posterior_predictive(spec, ensemble, x)))
    elif seed_class is None:
        seed_class = ALL_UNITS
    out = bayes_relevances(spec, ensemble, x, layer, seed_class, eps, stabilizer, keep_samples)
    if keep_samples:
        return Heatmap(out[0], layer, seed_class, eps), out[1]
    return Heatmap(out, layer, seed_class, eps)
