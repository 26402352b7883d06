"""Record-at-a-time model runners behind the streaming CLI.

Every runner exposes ``step(record) -> StepResult`` following the
prequential protocol: predict at the record's input, score the target if
one is present, then (and only then) fold the observation into the state.
Rows without a target are pure queries and never change the belief; for the
Markovian models the state still advances to the row's timestamp, since the
model lives in continuous time.

Runner construction happens after the whole input is parsed (the CLI reads
its CSV up front), which lets the sparse models place inducing inputs on
the observed input quantiles without peeking at any target value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import ensemble as ens
from . import exact, features, linear_filter, markovian, sparse
from .config import (
    build_dynamics,
    build_kernel,
    get_bool,
    get_float,
    get_int,
    get_str,
    load_locations,
    member_configs,
)
from .errors import ConfigurationError, DataError
from .kernels import eval_kernel
from .linalg import gaussian_loglik


@dataclass(frozen=True)
class StreamRecord:
    row: int  # 1-based data row in the input
    t: float | None
    x: np.ndarray | None
    y: float | None

    @property
    def point(self) -> np.ndarray:
        """Model input: the x vector, or the timestamp as a 1-D point."""
        if self.x is not None:
            return self.x
        return np.array([self.t])


@dataclass
class StepResult:
    mean: float
    var: float  # latent (noise-free) predictive variance
    logdensity: float | None  # one-step predictive log density of y, if scored
    weights: np.ndarray | None = None  # ensemble only


class ExactRunner:
    """Growing-batch exact GP: refit posterior on all past points each step."""

    def __init__(self, kernel, noise_var: float):
        self.kernel = kernel
        self.noise_var = noise_var
        self.xs: list[np.ndarray] = []
        self.ys: list[float] = []
        self.flops = 0
        self.approximate_loglik = False

    def step(self, rec: StreamRecord) -> StepResult:
        x = rec.point
        if not self.xs:
            mean, var = 0.0, float(eval_kernel(self.kernel, x, x))
        else:
            post = exact.posterior(self.kernel, self.noise_var, np.array(self.xs), np.array(self.ys), x.reshape(1, -1))
            mean, var = float(post.mean[0]), float(post.covariance[0, 0])
        n = len(self.xs)
        self.flops += n**3 // 3 + n * n + 10
        if rec.y is None:
            return StepResult(mean, var, None)
        ll = gaussian_loglik(rec.y, mean, var + self.noise_var)
        self.xs.append(x)
        self.ys.append(rec.y)
        return StepResult(mean, var, ll)


class LinearRunner:
    """Basis-expansion filter with configurable weight dynamics and likelihood."""

    def __init__(self, fmap, dynamics, noise_var: float, likelihood: str = "gaussian"):
        self.fmap = fmap
        self.dynamics = dynamics
        self.noise_var = noise_var
        self.likelihood = likelihood
        self.belief = linear_filter.init_belief(fmap.n_features, fmap.weight_prior_var)
        self.flops = 0
        self.approximate_loglik = likelihood != "gaussian"

    def step(self, rec: StreamRecord) -> StepResult:
        phi = features.featurize(self.fmap, rec.point)
        predicted = linear_filter.predict_step(self.belief, self.dynamics)
        mean, var = linear_filter.predict_f(predicted, phi)
        n = self.fmap.n_features
        self.flops += 6 * n * n + 8 * n
        if rec.y is None:
            # pure query: the dynamics tick is tied to observation events
            return StepResult(mean, var, None)
        if self.likelihood == "gaussian":
            self.belief, ll = linear_filter.update_step(predicted, phi, rec.y, self.noise_var)
        else:
            self.belief, ll = linear_filter.update_nonconjugate(predicted, phi, rec.y, self.likelihood)
        return StepResult(mean, var, ll)


class MarkovRunner:
    """Continuous-time state-space filter; optionally keeps history for smoothing."""

    def __init__(self, sde, noise_var: float, locations=None, keep_history: bool = False):
        self.stepper = markovian.MarkovStepper(sde, noise_var)
        self.noise_var = noise_var
        self.locations = locations  # (N_s, D) when spatiotemporal
        self.keep_history = keep_history
        self.history: list[tuple] = []  # (pred_mean, pred_cov, A, mean, cov, obs_row)
        self.approximate_loglik = False

    @property
    def flops(self) -> int:
        return self.stepper.flops

    def _obs_row(self, rec: StreamRecord) -> int:
        if self.locations is None:
            if rec.x is not None:
                raise ConfigurationError("markov model is time-only; spatial input needs spatial.locations")
            return 0
        if rec.x is None:
            raise DataError(f"row {rec.row}: spatiotemporal model needs x columns")
        dist = np.linalg.norm(self.locations - rec.x[None, :], axis=1)
        idx = int(np.argmin(dist))
        scale = 1.0 + float(np.linalg.norm(self.locations[idx]))
        if dist[idx] > 1e-9 * scale:
            raise DataError(f"row {rec.row}: location {rec.x} is not in spatial.locations")
        return idx

    def step(self, rec: StreamRecord) -> StepResult:
        if rec.t is None:
            raise DataError(f"row {rec.row}: markov model needs a t column")
        row = self._obs_row(rec)
        try:
            self.stepper.advance(rec.t)
        except DataError as exc:
            raise DataError(f"row {rec.row}: {exc}") from exc
        pred_mean, pred_cov = self.stepper.mean.copy(), self.stepper.cov.copy()
        mean, var = self.stepper.predict_obs(row)
        ll = None
        if rec.y is not None:
            ll = self.stepper.update(rec.y, row)
        if self.keep_history:
            transition = self.stepper.last_transition
            self.history.append((pred_mean, pred_cov, transition, self.stepper.mean.copy(), self.stepper.cov.copy(), row))
        return StepResult(mean, var, ll)

    def smooth(self, times) -> list[tuple[float, float]]:
        """Backward pass over the stored history; per-row smoothed (mean, var)."""
        if not self.keep_history:
            raise ConfigurationError("smoothing requires keep_history=True")
        n = len(self.history)
        if n == 0:
            return []
        result = markovian.FilterResult(
            times=np.asarray(times, dtype=float),
            pred_means=np.array([h[0] for h in self.history]).reshape(n, -1),
            pred_covs=np.array([h[1] for h in self.history]),
            means=np.array([h[3] for h in self.history]).reshape(n, -1),
            covs=np.array([h[4] for h in self.history]),
            transitions=[h[2] for h in self.history],
            obs_rows=np.array([h[5] for h in self.history], dtype=int),
            logliks=np.full(n, np.nan),
            loglik_total=0.0,
            flops=0,
        )
        smoothed = markovian.rts_smoother(self.stepper.sde, result)
        out = []
        for i in range(n):
            h = self.stepper.sde.obs[result.obs_rows[i]]
            out.append((float(h @ smoothed.means[i]), float(h @ smoothed.covs[i] @ h)))
        return out


class SparseRunner:
    """Fixed-inducing-set recursion; ``vsgp`` switches to information-form updates."""

    def __init__(self, kernel, noise_var: float, inducing, include_residual: bool, vsgp: bool = False):
        self.state = sparse.init_sparse(kernel, inducing, include_residual)
        self.noise_var = noise_var
        self.vsgp = vsgp
        self.flops = 0
        self.approximate_loglik = False

    def step(self, rec: StreamRecord) -> StepResult:
        x = rec.point
        mean, var = sparse.sparse_predict(self.state, x)
        if rec.y is None:
            return StepResult(mean, var, None)
        if self.vsgp:
            ll = gaussian_loglik(rec.y, mean, var + self.noise_var)
            self.state = sparse.vsgp_info_update(self.state, x.reshape(1, -1), [rec.y], self.noise_var)
        else:
            self.state, ll = sparse.sparse_update(self.state, x, rec.y, self.noise_var)
        self.flops += self.state.step_flops
        return StepResult(mean, var, ll)


class EnsembleRunner:
    """Bank of member runners combined by BMA or stacking weights."""

    def __init__(self, members: list, combiner: str):
        self.members = members
        self.state = ens.init_ensemble(len(members), combiner)
        self.approximate_loglik = any(m.approximate_loglik for m in members)

    @property
    def flops(self) -> int:
        return sum(m.flops for m in self.members)

    def step(self, rec: StreamRecord) -> StepResult:
        results = [m.step(rec) for m in self.members]
        means = np.array([r.mean for r in results])
        variances = np.array([r.var for r in results])
        mix_mean, mix_var, _ = ens.mixture_predict(self.state, means, variances)
        if rec.y is None:
            return StepResult(mix_mean, mix_var, None, weights=self.state.weights)
        lls = np.array([r.logdensity for r in results])
        mix_ll = float(logsumexp(self.state.log_weights + lls))
        if self.state.combiner == "bma":
            self.state = ens.bma_update(self.state, lls)
        else:
            self.state = ens.stacking_update(self.state, np.exp(lls))
        return StepResult(mix_mean, mix_var, mix_ll, weights=self.state.weights)


def _require_seed(cfg: dict, key: str) -> int:
    seed = get_int(cfg, key, default=get_int(cfg, "seed"))
    if seed is None:
        raise ConfigurationError(f"{key}: a seed is required for stochastic components (or set seed=)")
    return seed


def _input_points(records: list[StreamRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, 1))
    return np.array([r.point for r in records])


def build_runner(cfg: dict, records: list[StreamRecord]):
    """Construct the model runner a validated config describes."""
    model = get_str(cfg, "model", required=True, choices=set(MODELS_BUILDABLE))
    return MODELS_BUILDABLE[model](cfg, records)


def _build_exact(cfg, records):
    kernel = build_kernel(cfg)
    return ExactRunner(kernel, get_float(cfg, "noise_var", required=True))


def _build_linear(cfg, records):
    kernel = build_kernel(cfg)
    kind = get_str(cfg, "features.kind", default="rff", choices={"rff", "hsgp"})
    n_feat = get_int(cfg, "features.F", required=True)
    try:
        if kind == "rff":
            fmap = features.sample_rff(kernel, n_feat, _require_seed(cfg, "features.seed"))
        else:
            halfwidth = get_float(cfg, "features.L")
            if halfwidth is None:
                pts = _input_points(records)
                if pts.shape[0] == 0:
                    raise ConfigurationError("features.L: required when the input stream is empty")
                halfwidth = 4.0 * float(np.max(np.abs(pts)))
            fmap = features.build_hsgp(kernel, n_feat, halfwidth)
    except ConfigurationError as exc:
        if str(exc).startswith("features."):
            raise
        raise ConfigurationError(f"features.*: {exc}") from exc
    dynamics = build_dynamics(cfg, fmap.weight_prior_var, fmap.n_features)
    likelihood = get_str(cfg, "likelihood", default="gaussian",
                         choices={"gaussian"} | set(linear_filter.LIKELIHOODS))
    return LinearRunner(fmap, dynamics, get_float(cfg, "noise_var", required=True), likelihood)


def _build_markov(cfg, records):
    kernel = build_kernel(cfg)
    noise_var = get_float(cfg, "noise_var", required=True)
    loc_path = get_str(cfg, "spatial.locations")
    keep = get_bool(cfg, "emit_smoothed", default=False)
    if loc_path is None:
        sde = markovian.build_lti(kernel)
        return MarkovRunner(sde, noise_var, keep_history=keep)
    locations = load_locations(loc_path)
    spatial_kernel = build_kernel(cfg, prefix="spatial.kernel.")
    sde = markovian.build_spatiotemporal(kernel, spatial_kernel, locations)
    return MarkovRunner(sde, noise_var, locations=locations, keep_history=keep)


def _build_sparse(cfg, records, vsgp=False):
    kernel = build_kernel(cfg)
    noise_var = get_float(cfg, "noise_var", required=True)
    explicit = cfg.get("sparse.inducing")
    if explicit is not None:
        try:
            inducing = np.array([float(tok) for tok in explicit.split(",")]).reshape(-1, 1)
        except ValueError as exc:
            raise ConfigurationError(f"sparse.inducing: expected comma-separated numbers") from exc
    else:
        n_inducing = get_int(cfg, "sparse.M", required=True)
        pts = _input_points(records)
        if pts.shape[0] == 0:
            raise ConfigurationError("sparse.M: cannot place inducing inputs on an empty stream")
        seed = get_int(cfg, "sparse.seed", default=get_int(cfg, "seed"))
        if pts.shape[1] > 1 and seed is None:
            raise ConfigurationError("sparse.seed: required for k-means seeding of multi-D inducing inputs")
        inducing = sparse.choose_inducing(pts, n_inducing, 0 if seed is None else seed)
    residual = get_bool(cfg, "sparse.residual", default=True)
    return SparseRunner(kernel, noise_var, inducing, residual, vsgp=vsgp)


def _build_ensemble(cfg, records):
    combiner = get_str(cfg, "ensemble.combiner", default="bma", choices={"bma", "stacking"})
    members = []
    for i, block in enumerate(member_configs(cfg), start=1):
        model = get_str(block, "model", required=True)
        if model == "ensemble":
            raise ConfigurationError(f"member.{i}.model: ensembles cannot nest")
        try:
            members.append(build_runner(block, records))
        except ConfigurationError as exc:
            raise ConfigurationError(f"member.{i}.{exc}") from exc
    return EnsembleRunner(members, combiner)


MODELS_BUILDABLE = {
    "exact": _build_exact,
    "linear": _build_linear,
    "markov": _build_markov,
    "sparse": _build_sparse,
    "vsgp": lambda cfg, records: _build_sparse(cfg, records, vsgp=True),
    "ensemble": _build_ensemble,
}
