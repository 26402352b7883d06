"""Markovian GPs: stationary kernels as LTI stochastic differential equations.

Supported kernels map to a continuous-time state space dx = F x dt + L dW
with diffusion spectral density q, observation row H, and stationary
covariance P_inf:

* Matern-1/2 <-> Ornstein-Uhlenbeck (d = 1, lambda = 1/l, q = 2 lambda s2)
* Matern-3/2 <-> two-state model (lambda = sqrt(3)/l, q = 4 lambda^3 s2)
* Hida-Matern components: the underlying Matern state doubled by a rotation
  generator with angular rate b; the observation row picks the cosine
  channel.  Mixtures stack blocks diagonally with sqrt-weight observation
  rows.

Exact discretization over an irregular step uses A = expm(F*dt) and
Q = P_inf - A P_inf A^T, after which Kalman filtering and Rauch-Tung-
Striebel smoothing give exact GP inference in O(N d^3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .errors import ConfigurationError, DataError, NumericalError, UnsupportedKernelError
from .kernels import Kernel, as_points, gram
from .linalg import chol_jitter, gaussian_loglik, symmetrize

# [6/6] Pade numerator coefficients for the matrix exponential
_PADE6 = (1.0, 1.0 / 2.0, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0)


def expm_fixed(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a fixed Pade order.

    The order is pinned so the kernel-SDE duality holds to 1e-8 for every
    supported state dimension (d <= ~20); for these small matrices this is
    an order of magnitude cheaper per call than a general-purpose expm.
    """
    n = a.shape[0]
    norm = float(np.linalg.norm(a, 1))
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5)))) if norm > 0.5 else 0
    a = a / (2.0**squarings)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    eye = np.eye(n)
    even = _PADE6[0] * eye + _PADE6[2] * a2 + _PADE6[4] * a4 + _PADE6[6] * a6
    odd = a @ (_PADE6[1] * eye + _PADE6[3] * a2 + _PADE6[5] * a4)
    result = np.linalg.solve(even - odd, even + odd)
    for _ in range(squarings):
        result = result @ result
    return result


@dataclass(frozen=True)
class LtiSde:
    """Continuous-time model: drift F (d,d), noise loading L (d,m), diffusion
    spectral density q (m,m), observation rows H (n_obs,d), stationary P_inf."""

    drift: np.ndarray
    noise_loading: np.ndarray
    obs: np.ndarray
    diffusion: np.ndarray
    stationary: np.ndarray

    @property
    def dim(self) -> int:
        return self.drift.shape[0]


@dataclass(frozen=True)
class DiscreteStep:
    transition: np.ndarray  # A = expm(F * dt)
    noise_cov: np.ndarray  # Q, symmetric PSD


def _matern_block(nu: float, sigma2: float, lengthscale: float):
    if nu == 0.5:
        lam = 1.0 / lengthscale
        F = np.array([[-lam]])
        L = np.array([[1.0]])
        H = np.array([[1.0]])
        q = np.array([[2.0 * lam * sigma2]])
        P = np.array([[sigma2]])
    elif nu == 1.5:
        lam = math.sqrt(3.0) / lengthscale
        F = np.array([[0.0, 1.0], [-lam * lam, -2.0 * lam]])
        L = np.array([[0.0], [1.0]])
        H = np.array([[1.0, 0.0]])
        q = np.array([[4.0 * lam**3 * sigma2]])
        P = np.diag([sigma2, lam * lam * sigma2])
    else:
        raise UnsupportedKernelError(f"no state space for Matern smoothness {nu}")
    return F, L, H, q, P


def _hm_block(phase: float, nu: float, sigma2: float, lengthscale: float):
    """Phase-shifted Matern block.

    For b > 0 the state is doubled: the generator gains a commuting rotation
    term I (x) [[0, -b], [b, 0]], so exp(F t) factors into the Matern decay
    times a rotation and H (x) [1, 0] reads off cos(b t) * matern(t).  A zero
    phase keeps the plain Matern block (the rotation channel is redundant).
    """
    F, L, H, q, P = _matern_block(nu, sigma2, lengthscale)
    if phase == 0.0:
        return F, L, H, q, P
    d = F.shape[0]
    rot = np.array([[0.0, -phase], [phase, 0.0]])
    F2 = np.kron(F, np.eye(2)) + np.kron(np.eye(d), rot)
    L2 = np.kron(L, np.eye(2))
    H2 = np.kron(H, np.array([[1.0, 0.0]]))
    q2 = np.kron(q, np.eye(2))
    P2 = np.kron(P, np.eye(2))
    return F2, L2, H2, q2, P2


def build_lti(kernel: Kernel) -> LtiSde:
    """State-space representation of a Markovian-supported kernel.

    Squared-exponential and spectral-mixture kernels have no exact
    finite-dimensional SDE and are rejected.
    """
    if kernel.family == "matern12":
        F, L, H, q, P = _matern_block(0.5, kernel.sigma_f2, kernel.lengthscale)
    elif kernel.family == "matern32":
        F, L, H, q, P = _matern_block(1.5, kernel.sigma_f2, kernel.lengthscale)
    elif kernel.family == "hida_matern":
        blocks = [_hm_block(c.phase, c.nu, c.sigma2, c.lengthscale) for c in kernel.hm_components]
        dims = [b[0].shape[0] for b in blocks]
        noise_dims = [b[1].shape[1] for b in blocks]
        d, m = sum(dims), sum(noise_dims)
        F = np.zeros((d, d))
        L = np.zeros((d, m))
        q = np.zeros((m, m))
        P = np.zeros((d, d))
        H = np.zeros((1, d))
        i = j = 0
        for comp, (Fb, Lb, Hb, qb, Pb) in zip(kernel.hm_components, blocks):
            di, mi = Fb.shape[0], Lb.shape[1]
            F[i : i + di, i : i + di] = Fb
            L[i : i + di, j : j + mi] = Lb
            q[j : j + mi, j : j + mi] = qb
            P[i : i + di, i : i + di] = Pb
            H[0, i : i + di] = math.sqrt(comp.weight) * Hb[0]
            i += di
            j += mi
    else:
        raise UnsupportedKernelError(
            f"kernel family {kernel.family!r} has no exact finite-dimensional SDE"
        )
    return LtiSde(drift=F, noise_loading=L, obs=H, diffusion=q, stationary=P)


def stationary_covariance(sde: LtiSde) -> np.ndarray:
    """Solve the Lyapunov equation F P + P F^T = -L q L^T for P.

    Requires a Hurwitz drift (all eigenvalue real parts negative); this is a
    cross-check of the analytically assembled ``sde.stationary``.
    """
    eigs = np.linalg.eigvals(sde.drift)
    if np.any(eigs.real >= 0.0):
        raise NumericalError(f"drift is not Hurwitz (eigenvalue real parts {eigs.real})")
    rhs = -sde.noise_loading @ sde.diffusion @ sde.noise_loading.T
    P = solve_continuous_lyapunov(sde.drift, rhs)
    return symmetrize(P)


def discretize(sde: LtiSde, delta: float) -> DiscreteStep:
    """Exact transition over a step of length ``delta`` >= 0.

    A = expm(F * delta) (closed form when d = 1, scaling-and-squaring Pade
    otherwise); Q = P_inf - A P_inf A^T, which is exact for a stationary
    initial law.
    """
    if delta < 0.0:
        raise DataError(f"negative time step {delta}")
    d = sde.dim
    if delta == 0.0:
        return DiscreteStep(np.eye(d), np.zeros((d, d)))
    if d == 1:
        A = np.array([[math.exp(sde.drift[0, 0] * delta)]])
    else:
        A = expm_fixed(sde.drift * delta)
    Q = sde.stationary - A @ sde.stationary @ A.T
    return DiscreteStep(A, symmetrize(Q))


# approximate flop accounting: fixed per-step costs used to verify scaling
def _flops_discretize(d: int) -> int:
    return 30 * d**3


def _flops_predict(d: int) -> int:
    return 4 * d**3 + 4 * d * d


def _flops_update(d: int) -> int:
    return 8 * d * d + 12 * d


class MarkovStepper:
    """Streaming filter state: advance to a timestamp, then optionally update.

    Used by the batch filter below and by the CLI's record-at-a-time loop.
    Discretizations are memoized per step length, so regularly sampled
    streams pay for one matrix exponential.
    """

    def __init__(self, sde: LtiSde, noise_var: float):
        if noise_var <= 0.0:
            raise ConfigurationError(f"noise_var must be positive, got {noise_var}")
        self.sde = sde
        self.noise_var = noise_var
        self.mean = np.zeros(sde.dim)
        self.cov = sde.stationary.copy()
        self.time: float | None = None
        self.last_transition = np.eye(sde.dim)
        self.flops = 0
        self._steps: dict[float, DiscreteStep] = {}

    def advance(self, t: float) -> None:
        """Propagate the state to time ``t`` (>= the current time)."""
        delta = 0.0 if self.time is None else t - self.time
        if delta < 0.0:
            raise DataError(f"timestamps decrease ({self.time} -> {t})")
        step = self._steps.get(delta)
        if step is None:
            step = discretize(self.sde, delta)
            self._steps[delta] = step
            self.flops += _flops_discretize(self.sde.dim)
        A = step.transition
        self.mean = A @ self.mean
        self.cov = symmetrize(A @ self.cov @ A.T + step.noise_cov)
        self.time = t
        self.last_transition = A
        self.flops += _flops_predict(self.sde.dim)

    def predict_obs(self, row: int = 0):
        """Latent predictive (mean, var) through observation row ``row``."""
        h = self.sde.obs[row]
        return float(h @ self.mean), float(h @ self.cov @ h)

    def update(self, y: float, row: int = 0) -> float:
        """Joseph-form measurement update; returns the predictive log density."""
        if not np.isfinite(y):
            raise DataError(f"non-finite observation {y!r}")
        h = self.sde.obs[row]
        s = self.cov @ h
        pred_var = float(h @ s) + self.noise_var
        pred_mean = float(h @ self.mean)
        ll = gaussian_loglik(y, pred_mean, pred_var)
        gain = s / pred_var
        self.mean = self.mean + gain * (y - pred_mean)
        c = float(h @ s)
        self.cov = symmetrize(
            self.cov - np.outer(gain, s) - np.outer(s, gain) + (c + self.noise_var) * np.outer(gain, gain)
        )
        self.flops += _flops_update(self.sde.dim)
        return ll


@dataclass
class FilterResult:
    times: np.ndarray  # (N,)
    pred_means: np.ndarray  # (N, d) prior to each update
    pred_covs: np.ndarray  # (N, d, d)
    means: np.ndarray  # (N, d) filtered
    covs: np.ndarray  # (N, d, d)
    transitions: list  # per-step A
    obs_rows: np.ndarray  # (N,) index of the H row used per step
    logliks: np.ndarray  # (N,) one-step predictive log densities (NaN if no y)
    loglik_total: float
    flops: int


def kalman_filter(sde: LtiSde, times, values, noise_var: float, obs_rows=None) -> FilterResult:
    """Forward filter over an ordered stream of scalar observations.

    ``times`` must be non-decreasing (a decreasing stamp raises DataError
    naming the step).  A NaN in ``values`` marks a predict-only step: the
    state advances to that time without a measurement update.  ``obs_rows``
    selects which observation row of ``sde.obs`` each step uses (always row
    0 for temporal models).  Starts from the stationary law N(0, P_inf).
    """
    t = np.asarray(times, dtype=float).ravel()
    y = np.asarray(values, dtype=float).ravel()
    if t.shape != y.shape:
        raise DataError(f"{t.size} timestamps but {y.size} values")
    n = t.size
    rows = np.zeros(n, dtype=int) if obs_rows is None else np.asarray(obs_rows, dtype=int).ravel()

    stepper = MarkovStepper(sde, noise_var)
    d = sde.dim
    pred_means = np.empty((n, d))
    pred_covs = np.empty((n, d, d))
    means = np.empty((n, d))
    covs = np.empty((n, d, d))
    logliks = np.full(n, np.nan)
    transitions = []
    total = 0.0

    for i in range(n):
        if i > 0 and t[i] < t[i - 1]:
            raise DataError(f"timestamps decrease at step {i} ({t[i - 1]} -> {t[i]})")
        stepper.advance(t[i])
        pred_means[i] = stepper.mean
        pred_covs[i] = stepper.cov
        transitions.append(stepper.last_transition)
        if np.isfinite(y[i]):
            ll = stepper.update(y[i], rows[i])
            logliks[i] = ll
            total += ll
        means[i] = stepper.mean
        covs[i] = stepper.cov

    return FilterResult(
        times=t,
        pred_means=pred_means,
        pred_covs=pred_covs,
        means=means,
        covs=covs,
        transitions=transitions,
        obs_rows=rows,
        logliks=logliks,
        loglik_total=total,
        flops=stepper.flops,
    )


@dataclass
class SmootherResult:
    means: np.ndarray  # (N, d)
    covs: np.ndarray  # (N, d, d)


def rts_smoother(sde: LtiSde, result: FilterResult) -> SmootherResult:
    """Backward Rauch-Tung-Striebel pass over a completed filter result."""
    if result.pred_covs is None or len(result.transitions) != result.times.size:
        raise DataError("filter result is missing the stored per-step moments")
    n = result.times.size
    d = sde.dim
    sm = np.empty((n, d))
    sc = np.empty((n, d, d))
    if n == 0:
        return SmootherResult(sm, sc)
    sm[-1] = result.means[-1]
    sc[-1] = result.covs[-1]
    for k in range(n - 2, -1, -1):
        A = result.transitions[k + 1]
        Pf = result.covs[k]
        Pp = result.pred_covs[k + 1]
        try:
            G = np.linalg.solve(Pp, A @ Pf).T
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular predicted covariance at step {k + 1}") from exc
        sm[k] = result.means[k] + G @ (sm[k + 1] - result.pred_means[k + 1])
        sc[k] = symmetrize(Pf + G @ (sc[k + 1] - Pp) @ G.T)
    return SmootherResult(sm, sc)


def build_spatiotemporal(temporal_kernel: Kernel, spatial_kernel: Kernel, locations) -> LtiSde:
    """Separable space-time model on a fixed grid of spatial locations.

    The joint state stacks one temporal state per location (block-diagonal
    drift and loading); spatial correlation enters through the diffusion,
    Sigma_SS (x) q, where Sigma_SS is the spatial Gram normalized to unit
    diagonal so the process variance is carried once, by the temporal block.
    Observation row i reads the leading state component at location i.
    """
    locs = as_points(locations)
    n_s = locs.shape[0]
    if n_s < 1:
        raise ConfigurationError("need at least one spatial location")
    base = build_lti(temporal_kernel)
    S = gram(spatial_kernel, locs) / spatial_kernel.total_variance
    chol_jitter(S, scale=1.0)  # factorization failure -> NumericalError
    eye = np.eye(n_s)
    return LtiSde(
        drift=np.kron(eye, base.drift),
        noise_loading=np.kron(eye, base.noise_loading),
        obs=np.kron(eye, base.obs),
        diffusion=np.kron(S, base.diffusion),
        stationary=np.kron(S, base.stationary),
    )
