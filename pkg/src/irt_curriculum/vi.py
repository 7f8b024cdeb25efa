"""Mean-field variational fitting of the 1PL model.

The generative model puts hierarchical priors on abilities and difficulties:

    theta_j ~ N(m_theta, 1/u_theta)      b_i ~ N(m_b, 1/u_b)
    m_theta, m_b ~ N(0, 1e6)             u_theta, u_b ~ Gamma(1, 1)
    z_ij ~ Bernoulli(sigmoid(theta_j - b_i))

Every latent gets an independent Gaussian factor; the precisions are
handled on the log scale (log-normal factors, with the Gamma prior
transformed accordingly) so all factors share one reparameterized
gradient path. The ELBO is maximized by Adam on Monte-Carlo gradients
with an analytic entropy term.
"""

import math
from dataclasses import dataclass

import numpy as np

from .irt import ResponseMatrix, _write_two_col_csv, _read_two_col_csv, sigmoid

_LOG_2PI = math.log(2.0 * math.pi)
# hyper factor order: m_theta, m_b, log u_theta, log u_b
_HYPER_NAMES = ("m_theta", "m_b", "log_u_theta", "log_u_b")


@dataclass
class FitConfig:
    max_iterations: int = 5000
    learning_rate: float = 0.05
    mc_samples: int = 4
    seed: int = 0
    convergence_tol: float = 1e-5
    convergence_window: int = 50
    mean_prior_var: float = 1e6
    gamma_shape: float = 1.0
    gamma_rate: float = 1.0

    def __post_init__(self):
        if self.max_iterations < 1 or self.mc_samples < 1 or self.convergence_window < 1:
            raise ValueError("max_iterations, mc_samples, convergence_window must be >= 1")
        if self.learning_rate <= 0 or self.convergence_tol <= 0:
            raise ValueError("learning_rate and convergence_tol must be positive")
        if self.mean_prior_var <= 0 or self.gamma_shape <= 0 or self.gamma_rate <= 0:
            raise ValueError("prior constants must be positive")


@dataclass
class VariationalParams:
    """Gaussian factor means / log-stds for every latent in the model."""

    ability_mean: np.ndarray
    ability_log_std: np.ndarray
    difficulty_mean: np.ndarray
    difficulty_log_std: np.ndarray
    hyper_mean: np.ndarray
    hyper_log_std: np.ndarray

    def __post_init__(self):
        for name in ("ability", "difficulty", "hyper"):
            mean = np.asarray(getattr(self, f"{name}_mean"), dtype=float)
            ls = np.asarray(getattr(self, f"{name}_log_std"), dtype=float)
            setattr(self, f"{name}_mean", mean)
            setattr(self, f"{name}_log_std", ls)
            if mean.shape != ls.shape or mean.ndim != 1:
                raise ValueError(f"{name} factors must be aligned vectors")
            if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(ls))):
                raise ValueError(f"{name} factors must be finite")
        if self.hyper_mean.shape != (4,):
            raise ValueError("expected 4 hyper factors (m_theta, m_b, log u_theta, log u_b)")

    @property
    def n_models(self) -> int:
        return self.ability_mean.shape[0]

    @property
    def n_items(self) -> int:
        return self.difficulty_mean.shape[0]


@dataclass(frozen=True)
class FixedHyper:
    """Collapse the hierarchy to fixed hyperparameters (testing aid)."""

    m_theta: float = 0.0
    u_theta: float = 1.0
    m_b: float = 0.0
    u_b: float = 1.0


@dataclass(frozen=True)
class IrtPosterior:
    model_ids: tuple
    item_ids: tuple
    ability_mean: np.ndarray
    ability_std: np.ndarray
    difficulty_mean: np.ndarray
    difficulty_std: np.ndarray
    hyper: dict
    final_elbo: float
    iterations_run: int
    converged: bool
    warnings: tuple
    elbo_trace: np.ndarray


def init_variational_params(n_models, n_items, rng) -> VariationalParams:
    """Small random means break symmetry; stds start at 1."""
    return VariationalParams(
        ability_mean=rng.normal(0.0, 0.1, n_models),
        ability_log_std=np.zeros(n_models),
        difficulty_mean=rng.normal(0.0, 0.1, n_items),
        difficulty_log_std=np.zeros(n_items),
        hyper_mean=rng.normal(0.0, 0.1, 4),
        hyper_log_std=np.zeros(4),
    )


def _check_dims(Z: ResponseMatrix, vp: VariationalParams):
    if vp.n_models != Z.n_models or vp.n_items != Z.n_items:
        raise ValueError(
            f"factor dimensions ({vp.n_models} models, {vp.n_items} items) do not "
            f"match matrix ({Z.n_models} x {Z.n_items})"
        )


def _elbo_and_grads(Z, vp, eps_theta, eps_b, eps_hyper, cfg, fixed_hyper=None):
    """MC ELBO estimate and reparameterization gradients for all factors.

    eps_* are standard-normal draws of shape (S, J), (S, I), (S, 4);
    eps_hyper is ignored when the hierarchy is collapsed.
    """
    n_models, n_items = vp.n_models, vp.n_items
    n_samples = eps_theta.shape[0]

    std_theta = np.exp(vp.ability_log_std)
    std_b = np.exp(vp.difficulty_log_std)
    theta = vp.ability_mean + std_theta * eps_theta
    b = vp.difficulty_mean + std_b * eps_b

    if fixed_hyper is None:
        std_h = np.exp(vp.hyper_log_std)
        hyper = vp.hyper_mean + std_h * eps_hyper
        m_theta, m_b = hyper[:, 0:1], hyper[:, 1:2]
        w_theta, w_b = hyper[:, 2:3], hyper[:, 3:4]
    else:
        m_theta = np.full((n_samples, 1), fixed_hyper.m_theta)
        m_b = np.full((n_samples, 1), fixed_hyper.m_b)
        w_theta = np.full((n_samples, 1), math.log(fixed_hyper.u_theta))
        w_b = np.full((n_samples, 1), math.log(fixed_hyper.u_b))
    u_theta, u_b = np.exp(w_theta), np.exp(w_b)

    # Bernoulli likelihood over observed cells
    mi, ii, z = Z.model_idx, Z.item_idx, Z.values.astype(float)
    eta = theta[:, mi] - b[:, ii]
    sign = 1.0 - 2.0 * z
    log_lik = -np.logaddexp(0.0, sign * eta).sum(axis=1)
    diff = z - sigmoid(eta)
    g_theta = np.empty_like(theta)
    g_b = np.empty_like(b)
    for s in range(n_samples):
        g_theta[s] = np.bincount(mi, weights=diff[s], minlength=n_models)
        g_b[s] = -np.bincount(ii, weights=diff[s], minlength=n_items)

    # Gaussian priors theta ~ N(m_theta, 1/u_theta), b ~ N(m_b, 1/u_b)
    resid_theta = theta - m_theta
    resid_b = b - m_b
    ss_theta = (resid_theta**2).sum(axis=1, keepdims=True)
    ss_b = (resid_b**2).sum(axis=1, keepdims=True)
    log_prior = (
        0.5 * n_models * (w_theta - _LOG_2PI) - 0.5 * u_theta * ss_theta
        + 0.5 * n_items * (w_b - _LOG_2PI) - 0.5 * u_b * ss_b
    )[:, 0]
    g_theta -= u_theta * resid_theta
    g_b -= u_b * resid_b

    log_joint = log_lik + log_prior
    g_hyper = None
    if fixed_hyper is None:
        alpha, beta, var_m = cfg.gamma_shape, cfg.gamma_rate, cfg.mean_prior_var
        # m ~ N(0, var_m); w = log u with u ~ Gamma(alpha, beta), density
        # transformed to the log scale: log p(w) = alpha*w - beta*e^w + const
        log_hyper_prior = (
            -0.5 * (_LOG_2PI + math.log(var_m)) - hyper[:, 0] ** 2 / (2 * var_m)
            - 0.5 * (_LOG_2PI + math.log(var_m)) - hyper[:, 1] ** 2 / (2 * var_m)
            + alpha * (w_theta[:, 0] + w_b[:, 0])
            - beta * (u_theta[:, 0] + u_b[:, 0])
            + 2 * (alpha * math.log(beta) - math.lgamma(alpha))
        )
        log_joint = log_joint + log_hyper_prior
        g_hyper = np.stack(
            [
                u_theta[:, 0] * resid_theta.sum(axis=1) - hyper[:, 0] / var_m,
                u_b[:, 0] * resid_b.sum(axis=1) - hyper[:, 1] / var_m,
                0.5 * n_models - 0.5 * u_theta[:, 0] * ss_theta[:, 0] + alpha - beta * u_theta[:, 0],
                0.5 * n_items - 0.5 * u_b[:, 0] * ss_b[:, 0] + alpha - beta * u_b[:, 0],
            ],
            axis=1,
        )

    n_factors = n_models + n_items + (0 if fixed_hyper is not None else 4)
    entropy = (
        vp.ability_log_std.sum()
        + vp.difficulty_log_std.sum()
        + (0.0 if fixed_hyper is not None else vp.hyper_log_std.sum())
        + 0.5 * n_factors * (_LOG_2PI + 1.0)
    )
    elbo_value = float(log_joint.mean() + entropy)

    grads = VariationalParams(
        ability_mean=g_theta.mean(axis=0),
        ability_log_std=(g_theta * (std_theta * eps_theta)).mean(axis=0) + 1.0,
        difficulty_mean=g_b.mean(axis=0),
        difficulty_log_std=(g_b * (std_b * eps_b)).mean(axis=0) + 1.0,
        hyper_mean=np.zeros(4) if g_hyper is None else g_hyper.mean(axis=0),
        hyper_log_std=np.zeros(4)
        if g_hyper is None
        else (g_hyper * (std_h * eps_hyper)).mean(axis=0) + 1.0,
    )
    return elbo_value, grads


def _draw_eps(rng, n_samples, n_models, n_items):
    return (
        rng.standard_normal((n_samples, n_models)),
        rng.standard_normal((n_samples, n_items)),
        rng.standard_normal((n_samples, 4)),
    )


def elbo(Z: ResponseMatrix, vp: VariationalParams, mc_samples: int, rng_state, fixed_hyper=None) -> float:
    """Monte-Carlo ELBO estimate; deterministic given rng_state."""
    _check_dims(Z, vp)
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    rng = rng_state if isinstance(rng_state, np.random.Generator) else np.random.default_rng(rng_state)
    eps = _draw_eps(rng, mc_samples, vp.n_models, vp.n_items)
    value, _ = _elbo_and_grads(Z, vp, *eps, FitConfig(), fixed_hyper=fixed_hyper)
    return value


def _degenerate_item_warnings(Z: ResponseMatrix):
    counts = np.bincount(Z.item_idx, minlength=Z.n_items)
    correct = np.bincount(Z.item_idx, weights=Z.values.astype(float), minlength=Z.n_items)
    warnings = []
    for i in range(Z.n_items):
        if counts[i] == 0:
            warnings.append(f"item {Z.item_ids[i]!r} has no observed responses; prior only")
        elif correct[i] == 0 or correct[i] == counts[i]:
            warnings.append(
                f"item {Z.item_ids[i]!r} has all-identical responses; "
                "difficulty weakly identified"
            )
    return warnings


class _Adam:
    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def ascent_step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _flatten(vp):
    return np.concatenate(
        [
            vp.ability_mean,
            vp.ability_log_std,
            vp.difficulty_mean,
            vp.difficulty_log_std,
            vp.hyper_mean,
            vp.hyper_log_std,
        ]
    )


def _unflatten(flat, n_models, n_items):
    j, i = n_models, n_items
    parts = np.split(flat, np.cumsum([j, j, i, i, 4])[:5])
    return VariationalParams(*parts)


def fit_1pl(Z: ResponseMatrix, cfg: FitConfig | None = None) -> IrtPosterior:
    """Fit the hierarchical 1PL model by stochastic-gradient ELBO ascent.

    Stops when the relative change between consecutive window-averaged ELBO
    values falls below convergence_tol, or at max_iterations. Bit-for-bit
    reproducible for a given (Z, cfg).
    """
    cfg = cfg or FitConfig()
    if Z.n_models < 2 or Z.n_items < 2:
        raise ValueError(
            f"fitting needs at least 2 models and 2 items, got {Z.n_models} x {Z.n_items}"
        )
    warnings = _degenerate_item_warnings(Z)

    rng = np.random.default_rng(cfg.seed)
    vp = init_variational_params(Z.n_models, Z.n_items, rng)
    flat = _flatten(vp)
    adam = _Adam(flat.shape[0], cfg.learning_rate)
    trace = np.empty(cfg.max_iterations)
    window = cfg.convergence_window
    converged = False
    iterations = 0

    for it in range(cfg.max_iterations):
        vp = _unflatten(flat, Z.n_models, Z.n_items)
        eps = _draw_eps(rng, cfg.mc_samples, Z.n_models, Z.n_items)
        value, grads = _elbo_and_grads(Z, vp, *eps, cfg)
        trace[it] = value
        flat = adam.ascent_step(flat, _flatten(grads))
        iterations = it + 1
        if iterations >= 2 * window:
            recent = trace[iterations - window : iterations].mean()
            previous = trace[iterations - 2 * window : iterations - window].mean()
            if abs(recent - previous) <= cfg.convergence_tol * max(1.0, abs(previous)):
                converged = True
                break

    vp = _unflatten(flat, Z.n_models, Z.n_items)
    hyper = {
        name: {"mean": float(vp.hyper_mean[k]), "std": float(np.exp(vp.hyper_log_std[k]))}
        for k, name in enumerate(_HYPER_NAMES)
    }
    return IrtPosterior(
        model_ids=Z.model_ids,
        item_ids=Z.item_ids,
        ability_mean=vp.ability_mean.copy(),
        ability_std=np.exp(vp.ability_log_std),
        difficulty_mean=vp.difficulty_mean.copy(),
        difficulty_std=np.exp(vp.difficulty_log_std),
        hyper=hyper,
        final_elbo=float(trace[iterations - 1]),
        iterations_run=iterations,
        converged=converged,
        warnings=tuple(warnings),
        elbo_trace=trace[:iterations].copy(),
    )


def posterior_point_estimates(posterior: IrtPosterior):
    """(ability means, difficulty means) in the input matrix's order."""
    return posterior.ability_mean.copy(), posterior.difficulty_mean.copy()


def write_ability_csv(model_ids, abilities, path, comment=None):
    _write_two_col_csv(path, ("model_id", "ability"), model_ids, abilities, comment)


def read_ability_csv(path):
    ids, values = _read_two_col_csv(path, ("model_id", "ability"))
    return tuple(ids), values
