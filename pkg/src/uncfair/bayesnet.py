"""Variational feed-forward classifiers trained with Bayes by Backprop.

Each scalar weight has a diagonal Gaussian posterior ``N(mu, sigma^2)`` with
``sigma = softplus(rho)``. A weight draw is ``w = mu + sigma * eps`` with
``eps ~ N(0, 1)``, so gradients reach ``mu`` and ``rho`` through the draw.
The training objective summed over ``M`` draws is::

    sum_m [ log q(w_m) - log P(w_m) + lam * NLL(batch | w_m) ]

with ``P`` a two-component scale-mixture prior and NLL the batch-mean
cross-entropy. Gradients are derived by hand; :func:`numeric_grad` is the
central-difference oracle used to check them.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit, logsumexp

from . import checkpoint

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


class TrainingError(RuntimeError):
    pass


def softplus(x):
    return np.logaddexp(0.0, x)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def argmax_lowest(probs: np.ndarray) -> np.ndarray:
    """Class prediction; exact ties go to the lower class index."""
    return np.argmax(probs, axis=-1)


@dataclass(frozen=True)
class ScaleMixturePrior:
    pi: float = 0.5
    neg_log_sigma1: float = 0.0
    neg_log_sigma2: float = 6.0

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError(f"prior mixture weight must be in [0,1], got {self.pi}")

    @property
    def sigma1(self) -> float:
        return float(np.exp(-self.neg_log_sigma1))

    @property
    def sigma2(self) -> float:
        return float(np.exp(-self.neg_log_sigma2))

    def _parts(self, w):
        s1, s2 = self.sigma1, self.sigma2
        with np.errstate(divide="ignore"):
            l1 = np.log(self.pi) - 0.5 * LOG_2PI - np.log(s1) - 0.5 * (w / s1) ** 2
            l2 = np.log1p(-self.pi) - 0.5 * LOG_2PI - np.log(s2) - 0.5 * (w / s2) ** 2
        return l1, l2

    def log_prob(self, w) -> np.ndarray:
        l1, l2 = self._parts(np.asarray(w, dtype=np.float64))
        return np.logaddexp(l1, l2)

    def grad_neg_log_prob(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        l1, l2 = self._parts(w)
        lp = np.logaddexp(l1, l2)
        r1, r2 = np.exp(l1 - lp), np.exp(l2 - lp)
        return w * (r1 / self.sigma1**2 + r2 / self.sigma2**2)


@dataclass
class VariationalLayer:
    weight_mu: np.ndarray
    weight_rho: np.ndarray
    bias_mu: np.ndarray
    bias_rho: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.weight_mu.shape

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator, rho: float = -3.0):
        return cls(
            weight_mu=rng.standard_normal((n_out, n_in)),
            weight_rho=np.full((n_out, n_in), float(rho)),
            bias_mu=rng.standard_normal(n_out),
            bias_rho=np.full(n_out, float(rho)),
        )


@dataclass
class VariationalNet:
    layers: list[VariationalLayer]
    prior: ScaleMixturePrior = field(default_factory=ScaleMixturePrior)

    @classmethod
    def init(cls, n_in, hidden_width=None, n_classes=2, rng=None, rho=-3.0,
             prior=None) -> "VariationalNet":
        rng = rng if rng is not None else np.random.default_rng()
        sizes = [n_in] + ([hidden_width] if hidden_width else []) + [n_classes]
        layers = [VariationalLayer.init(a, b, rng, rho) for a, b in zip(sizes, sizes[1:])]
        return cls(layers, prior or ScaleMixturePrior())

    @property
    def n_in(self) -> int:
        return self.layers[0].shape[1]

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: per layer W_mu, W_rho, b_mu, b_rho."""
        out = []
        for L in self.layers:
            out += [L.weight_mu, L.weight_rho, L.bias_mu, L.bias_rho]
        return out

    def parameter_names(self) -> list[str]:
        names = []
        for i in range(len(self.layers)):
            names += [f"layer{i}.weight_mu", f"layer{i}.weight_rho",
                      f"layer{i}.bias_mu", f"layer{i}.bias_rho"]
        return names

    def copy(self) -> "VariationalNet":
        return copy.deepcopy(self)

    def mean_weights(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(L.weight_mu, L.bias_mu) for L in self.layers]

    def save(self, path) -> None:
        arrays = []
        for L in self.layers:
            arrays += [L.weight_mu, L.weight_rho, L.bias_mu, L.bias_rho]
        p = self.prior
        Path(path).write_bytes(checkpoint.dump(
            "variational", [L.shape for L in self.layers], arrays,
            prior=(p.pi, p.neg_log_sigma1, p.neg_log_sigma2)))

    @classmethod
    def load(cls, path) -> "VariationalNet":
        kind, shapes, prior, data = checkpoint.load(Path(path).read_bytes())
        if kind != "variational":
            raise checkpoint.CheckpointError(f"expected a variational checkpoint, got {kind}")
        layers, off = [], 0
        for o, i in shapes:
            wm, off = checkpoint.take(data, off, (o, i))
            wr, off = checkpoint.take(data, off, (o, i))
            bm, off = checkpoint.take(data, off, (o,))
            br, off = checkpoint.take(data, off, (o,))
            layers.append(VariationalLayer(wm, wr, bm, br))
        return cls(layers, ScaleMixturePrior(*prior))


@dataclass
class ConcreteWeights:
    """One posterior draw: per-layer ``(W, b)`` and the noise that made it."""

    weights: list[tuple[np.ndarray, np.ndarray]]
    eps: list[tuple[np.ndarray, np.ndarray]]


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 8
    learning_rate: float = 1e-3
    lam: float = 2000.0
    mc_train_samples: int = 10
    seed: int = 0
    hidden_width: int | None = None
    rho_init: float = -3.0
    prior_pi: float = 0.5
    prior_neg_log_sigma1: float = 0.0
    prior_neg_log_sigma2: float = 6.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("batch_size", "learning_rate", "lam", "mc_train_samples"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.hidden_width is not None and self.hidden_width < 0:
            raise ValueError("hidden_width must be positive")
        if self.hidden_width == 0:
            self.hidden_width = None

    @property
    def prior(self) -> ScaleMixturePrior:
        return ScaleMixturePrior(self.prior_pi, self.prior_neg_log_sigma1,
                                 self.prior_neg_log_sigma2)


# ---------------------------------------------------------------------------
# deterministic MLP pieces (also used by the ensemble backend)


def mlp_forward(X: np.ndarray, weights):
    """Forward pass; returns logits and the cache needed by :func:`mlp_backward`."""
    acts, pre = [X], []
    a = X
    for i, (W, b) in enumerate(weights):
        z = a @ W.T + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < len(weights) - 1 else z
        acts.append(a)
    return a, (acts, pre)


def mlp_backward(cache, weights, dlogits):
    """Reverse pass for :func:`mlp_forward`; returns ``[(dW, db), ...]``."""
    acts, pre = cache
    grads = [None] * len(weights)
    dz = dlogits
    for i in range(len(weights) - 1, -1, -1):
        W, _ = weights[i]
        grads[i] = (dz.T @ acts[i], dz.sum(axis=0))
        if i > 0:
            dz = (dz @ W) * (pre[i - 1] > 0)
    return grads


def cross_entropy(logits: np.ndarray, y: np.ndarray):
    """Batch-mean NLL via log-sum-exp and its gradient w.r.t. the logits."""
    lse = logsumexp(logits, axis=1)
    nll = float(np.mean(lse - logits[np.arange(len(y)), y]))
    d = softmax(logits)
    d[np.arange(len(y)), y] -= 1.0
    return nll, d / len(y)


# ---------------------------------------------------------------------------
# variational operations


def draw_eps(net: VariationalNet, rng: np.random.Generator):
    return [(rng.standard_normal(L.weight_mu.shape), rng.standard_normal(L.bias_mu.shape))
            for L in net.layers]


def sample_weights(net: VariationalNet, rng: np.random.Generator | None = None,
                   eps=None) -> ConcreteWeights:
    """One reparameterised draw ``mu + softplus(rho) * eps``."""
    if eps is None:
        eps = draw_eps(net, rng)
    ws = [(L.weight_mu + softplus(L.weight_rho) * eW, L.bias_mu + softplus(L.bias_rho) * eb)
          for L, (eW, eb) in zip(net.layers, eps)]
    return ConcreteWeights(ws, eps)


def elbo_loss(net: VariationalNet, X, y, config: TrainConfig, rng=None, eps=None):
    """Loss and gradients for one minibatch.

    ``eps`` pins the noise: a list of ``M`` per-layer ``(eps_W, eps_b)`` lists.
    When omitted, ``config.mc_train_samples`` draws are taken from ``rng``.
    Returns ``(loss, grads, parts)`` where ``grads`` follows
    :meth:`VariationalNet.parameters` and ``parts`` splits the loss into
    ``log_q``, ``log_prior`` and ``nll`` sums.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("empty batch")
    if eps is None:
        eps = [draw_eps(net, rng) for _ in range(config.mc_train_samples)]
    prior = net.prior
    lam = config.lam

    grads = [np.zeros_like(p) for p in net.parameters()]
    sig = [(softplus(L.weight_rho), softplus(L.bias_rho)) for L in net.layers]
    dsig = [(expit(L.weight_rho), expit(L.bias_rho)) for L in net.layers]
    total = log_q_sum = log_p_sum = nll_sum = 0.0

    for eps_m in eps:
        cw = sample_weights(net, eps=eps_m)
        logits, cache = mlp_forward(X, cw.weights)
        nll, dlogits = cross_entropy(logits, y)
        layer_grads = mlp_backward(cache, cw.weights, lam * dlogits)

        lq = lp = 0.0
        for li, (L, (W, b), (eW, eb), (dW, db)) in enumerate(
                zip(net.layers, cw.weights, eps_m, layer_grads)):
            sW, sb = sig[li]
            gW, gb = dsig[li]
            lq += float(np.sum(-0.5 * LOG_2PI - np.log(sW) - 0.5 * eW**2))
            lq += float(np.sum(-0.5 * LOG_2PI - np.log(sb) - 0.5 * eb**2))
            lp += float(np.sum(prior.log_prob(W)) + np.sum(prior.log_prob(b)))
            # d/dw of (-log P) + lam*NLL, then chain into mu and rho
            tW = dW + prior.grad_neg_log_prob(W)
            tb = db + prior.grad_neg_log_prob(b)
            k = 4 * li
            grads[k] += tW
            grads[k + 1] += tW * eW * gW - gW / sW
            grads[k + 2] += tb
            grads[k + 3] += tb * eb * gb - gb / sb
        total += lq - lp + lam * nll
        log_q_sum += lq
        log_p_sum += lp
        nll_sum += nll

    if not np.isfinite(total):
        _raise_nonfinite(net, grads, total)
    return total, grads, {"log_q": log_q_sum, "log_prior": log_p_sum, "nll": nll_sum}


def _raise_nonfinite(net, grads, total):
    # a bad parameter poisons every gradient, so look at parameters first
    for what, arrays in (("parameter", net.parameters()), ("gradient", grads)):
        for name, a in zip(net.parameter_names(), arrays):
            bad = np.flatnonzero(~np.isfinite(a.ravel()))
            if bad.size:
                raise TrainingError(
                    f"non-finite loss ({total}); first bad {what} {name}[{int(bad[0])}]")
    raise TrainingError(f"non-finite loss ({total})")


def central_difference(f: Callable[[float], float], theta: float, h: float) -> float:
    if h <= 0:
        raise ValueError("h must be positive")
    return (f(theta + h) - f(theta - h)) / (2.0 * h)


def numeric_grad(net: VariationalNet, X, y, config: TrainConfig, index, h: float,
                 eps) -> float:
    """Central difference of :func:`elbo_loss` w.r.t. one scalar parameter.

    ``index`` is ``(parameter_number, flat_position)`` in the order of
    :meth:`VariationalNet.parameters`; ``eps`` must be pinned so both
    evaluations see the same weight noise.
    """
    p_idx, flat = index
    probe = net.copy()
    target = probe.parameters()[p_idx].reshape(-1)
    base = float(target[flat])

    def f(v):
        target[flat] = v
        return elbo_loss(probe, X, y, config, eps=eps)[0]

    return central_difference(f, base, h)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train(train_ds, config: TrainConfig, callback=None) -> VariationalNet:
    """Minibatch Adam on :func:`elbo_loss`; deterministic under ``config.seed``.

    ``callback(epoch, net, mean_nll)`` runs after every epoch when given.
    """
    from .synthgen import make_rng

    rng = make_rng(config.seed)
    X, y = train_ds.features, train_ds.labels
    net = VariationalNet.init(X.shape[1], config.hidden_width, 2, rng,
                              config.rho_init, config.prior)
    opt = Adam(net.parameters(), config.learning_rate, config.adam_beta1,
               config.adam_beta2, config.adam_eps)
    for epoch in range(config.epochs):
        nlls = []
        for idx in minibatches(len(y), config.batch_size, rng):
            loss, grads, parts = elbo_loss(net, X[idx], y[idx], config, rng)
            opt.step(grads)
            nlls.append(parts["nll"] / config.mc_train_samples)
        log.debug("epoch %d mean nll %.4f", epoch, np.mean(nlls))
        if callback is not None:
            callback(epoch, net, float(np.mean(nlls)))
    return net


def predict_point(net: VariationalNet, X) -> np.ndarray:
    """Class probabilities under the posterior-mean weights."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != net.n_in:
        raise ValueError(f"expected {net.n_in} features, got {X.shape[1]}")
    logits, _ = mlp_forward(X, net.mean_weights())
    return softmax(logits)


def mean_nll(net: VariationalNet, X, y, n_draws: int, rng) -> float:
    """Monte-Carlo mean cross-entropy over ``n_draws`` weight draws."""
    vals = []
    for _ in range(n_draws):
        logits, _ = mlp_forward(X, sample_weights(net, rng).weights)
        vals.append(cross_entropy(logits, np.asarray(y))[0])
    return float(np.mean(vals))
