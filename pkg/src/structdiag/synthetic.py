"""Two-component Gaussian mixtures and theory-check instance generators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.stats import ortho_group

from .data import Dataset, derive_seed
from .errors import (
    GenerationFailureError,
    InvalidArgumentError,
    UnsupportedConfigurationError,
)
from .numstats import CovarianceMatrix, bayes_error_from_separation, perturbation_decomposition

__all__ = [
    "GaussianMixtureSpec",
    "sample_mixture",
    "monte_carlo_bayes_error",
    "ar_covariance",
    "importance_example_spec",
    "separation_spec",
    "reference_spec",
    "small_sample_example_spec",
    "MarginalBenefitInstance",
    "marginal_benefit_instance",
    "random_mixture_spec",
    "bayes_error_suite",
    "marginal_benefit_suite",
]

CHUNK = 50_000


@dataclass(frozen=True, eq=False)
class GaussianMixtureSpec:
    """``theta * N(+mu, sigma) + (1 - theta) * N(-mu, sigma)``.

    Class 1 is the ``+mu`` component. ``sigma`` is checked for positive
    definiteness by factorization at construction.
    """

    mu: np.ndarray
    sigma: np.ndarray
    theta: float = 0.5

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64).reshape(-1)
        sigma = np.array(self.sigma, dtype=np.float64)
        p = mu.size
        if p < 1 or sigma.shape != (p, p):
            raise InvalidArgumentError(f"sigma must be {p} x {p}, got {sigma.shape}")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
            raise InvalidArgumentError("sigma must be symmetric")
        if not 0.0 < self.theta < 1.0:
            raise InvalidArgumentError(f"theta must lie in (0, 1), got {self.theta}")
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise InvalidArgumentError("sigma must be positive definite") from None
        for name, v in (("mu", mu), ("sigma", sigma), ("_chol", chol)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def p(self) -> int:
        return self.mu.size

    def separation(self) -> float:
        """Exact distance of separation; the class means differ by ``2 mu``."""
        return 4.0 * float(self.mu @ linalg.cho_solve((self._chol, True), self.mu))

    def bayes_error(self) -> float:
        return bayes_error_from_separation(self.separation())

    def optimal_direction(self) -> np.ndarray:
        return linalg.cho_solve((self._chol, True), self.mu)

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist(), "theta": float(self.theta)}

    @classmethod
    def from_dict(cls, obj: dict) -> "GaussianMixtureSpec":
        mu = np.asarray(obj["mu"], dtype=np.float64)
        if "sigma" in obj:
            sigma = np.asarray(obj["sigma"], dtype=np.float64)
        else:
            sigma = ar_covariance(mu.size, float(obj.get("rho", 0.0)))
        return cls(mu, sigma, float(obj.get("theta", 0.5)))


def _draw(spec: GaussianMixtureSpec, n: int, rng: np.random.Generator):
    y = (rng.random(n) < spec.theta).astype(np.intp)
    z = rng.standard_normal((n, spec.p))
    sign = np.where(y == 1, 1.0, -1.0)[:, None]
    X = sign * spec.mu + z @ spec._chol.T
    return X, y


def sample_mixture(spec: GaussianMixtureSpec, n: int, seed: int,
                   feature_names=None) -> Dataset:
    """Draw ``n`` labelled rows; class 1 comes from ``N(+mu, sigma)``."""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    X, y = _draw(spec, n, rng)
    names = feature_names or tuple(f"x{j + 1}" for j in range(spec.p))
    return Dataset(X, y, names, ("minus", "plus"))


def monte_carlo_bayes_error(spec: GaussianMixtureSpec, n_draws: int, seed: int) -> dict:
    """Empirical error of the rule ``sign(mu' sigma^{-1} x)`` on fresh draws.

    Draws are generated in fixed-size chunks with per-chunk derived seeds, so
    the result does not depend on how the chunks are scheduled.
    """
    if n_draws < 1000:
        raise InvalidArgumentError(f"n_draws must be >= 1000, got {n_draws}")
    if spec.theta != 0.5:
        raise UnsupportedConfigurationError("the closed-form check covers theta = 1/2 only")
    w = spec.optimal_direction()
    wrong = 0
    done = 0
    chunk = 0
    while done < n_draws:
        m = min(CHUNK, n_draws - done)
        X, y = _draw(spec, m, np.random.default_rng(derive_seed(seed, "mc", chunk)))
        pred = (X @ w > 0.0).astype(np.intp)
        wrong += int(np.count_nonzero(pred != y))
        done += m
        chunk += 1
    rate = wrong / n_draws
    return {"rate": rate, "sd": math.sqrt(rate * (1.0 - rate) / n_draws), "n_draws": n_draws}


def ar_covariance(p: int, rho: float) -> np.ndarray:
    """AR(1) correlation ``rho ** |i - j|``."""
    if not abs(rho) < 1.0:
        raise InvalidArgumentError(f"|rho| must be < 1, got {rho}")
    if p < 1:
        raise InvalidArgumentError(f"p must be >= 1, got {p}")
    idx = np.arange(p)
    S = np.power(float(rho), np.abs(idx[:, None] - idx[None, :]).astype(np.float64))
    np.linalg.cholesky(S)
    return S


def importance_example_spec() -> GaussianMixtureSpec:
    """30 features; means 0.20, 0.19, ..., 0.01 then ten pure-noise features."""
    k = np.arange(1, 31)
    mu = np.where(k <= 20, np.round(0.21 - 0.01 * k, 2), 0.0)
    return GaussianMixtureSpec(mu, ar_covariance(30, 0.1), 0.5)


def separation_spec(d: float, p: int = 2, rho: float = 0.0) -> GaussianMixtureSpec:
    """Mixture with AR(1) covariance whose exact separation equals ``d``.

    The mean difference lies along the first coordinate.
    """
    if d < 0:
        raise InvalidArgumentError(f"d must be >= 0, got {d}")
    sigma = ar_covariance(p, rho)
    e1 = np.zeros(p)
    e1[0] = 1.0
    q = float(e1 @ np.linalg.solve(sigma, e1))
    return GaussianMixtureSpec(math.sqrt(d / (4.0 * q)) * e1, sigma, 0.5)


def reference_spec() -> GaussianMixtureSpec:
    """The default d = 4 benchmark: five AR(1) features (rho = 0.3), one informative axis."""
    return separation_spec(4.0, p=5, rho=0.3)


def small_sample_example_spec(n_strong: int = 6, n_weak: int = 48, d_strong: float = 3.0,
                              d_weak: float = 1.5) -> GaussianMixtureSpec:
    """Independent features: a few strong ones plus many individually weak ones.

    The strong block carries separation ``d_strong`` and the weak block
    ``d_weak`` in total, spread evenly. With the defaults the 54-feature
    union separates better than the 6 strong features alone, but only once
    the sample is large enough to estimate 54 coefficients.
    """
    delta = np.r_[np.full(n_strong, math.sqrt(d_strong / n_strong)),
                  np.full(n_weak, math.sqrt(d_weak / n_weak))]
    return GaussianMixtureSpec(0.5 * delta, np.eye(n_strong + n_weak), 0.5)


@dataclass(frozen=True, eq=False)
class MarginalBenefitInstance:
    u: np.ndarray
    sigma: CovarianceMatrix
    split_at: int
    attempts: int


def _random_spd(k: int, eig_range, rng) -> np.ndarray:
    lo, hi = eig_range
    eig = rng.uniform(lo, hi, size=k)
    if k == 1:
        return eig.reshape(1, 1)
    Q = ortho_group.rvs(k, random_state=rng)
    A = (Q * eig) @ Q.T
    return 0.5 * (A + A.T)


def marginal_benefit_instance(p1: int, p2: int, cross_norm_target: float, eig_range=(0.5, 2.0),
                              seed: int = 0, energy_floor: float = 0.1, max_retries: int = 100) -> MarginalBenefitInstance:
    """Random partitioned SPD matrix and mean vector with weak cross-block coupling.

    Diagonal blocks have eigenvalues drawn uniformly from ``eig_range``; the
    cross block is Gaussian rescaled to the exact Frobenius norm requested.
    ``u`` satisfies ``||u|| <= 1`` and ``u2' A22^{-1} u2 >= energy_floor``.
    """
    lo, hi = eig_range
    if not 0.0 < lo <= hi < math.inf:
        raise InvalidArgumentError(f"eig_range must satisfy 0 < lo <= hi < inf, got {eig_range}")
    if p1 < 1 or p2 < 1:
        raise InvalidArgumentError("both blocks need at least one feature")
    if cross_norm_target < 0:
        raise InvalidArgumentError("cross_norm_target must be >= 0")
    # ||u2||^2 / hi is the smallest possible energy for a given ||u2||
    if energy_floor * hi > 1.0:
        raise InvalidArgumentError("energy floor unreachable with ||u|| <= 1 for this eig_range")
    rng = np.random.default_rng(seed)
    for attempt in range(1, max_retries + 1):
        A11 = _random_spd(p1, eig_range, rng)
        A22 = _random_spd(p2, eig_range, rng)
        G = rng.standard_normal((p1, p2))
        gnorm = np.linalg.norm(G, "fro")
        A12 = G * (cross_norm_target / gnorm) if cross_norm_target > 0 else np.zeros((p1, p2))
        S = np.block([[A11, A12], [A12.T, A22]])
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            continue
        # ||u2||^2 >= energy_floor * hi guarantees the energy floor
        r2sq = rng.uniform(energy_floor * hi, 1.0)
        r1sq = rng.uniform(0.0, 1.0 - r2sq)
        u1 = rng.standard_normal(p1)
        u2 = rng.standard_normal(p2)
        u = np.concatenate([u1 * math.sqrt(r1sq) / np.linalg.norm(u1),
                            u2 * math.sqrt(r2sq) / np.linalg.norm(u2)])
        energy = float(u[p1:] @ np.linalg.solve(A22, u[p1:]))
        if energy < energy_floor:
            continue
        return MarginalBenefitInstance(u=u, sigma=CovarianceMatrix(S), split_at=p1, attempts=attempt)
    raise GenerationFailureError(f"no valid instance after {max_retries} attempts")


def random_mixture_spec(p: int, seed: int, d_range=(0.5, 9.0), eig_range=(0.5, 2.0)) -> GaussianMixtureSpec:
    """Random SPD covariance and a mean direction scaled to a separation in ``d_range``."""
    rng = np.random.default_rng(seed)
    sigma = _random_spd(p, eig_range, rng)
    v = rng.standard_normal(p)
    target = rng.uniform(*d_range)
    q = float(v @ np.linalg.solve(sigma, v))
    return GaussianMixtureSpec(v * math.sqrt(target / (4.0 * q)), sigma, 0.5)


def bayes_error_suite(n_specs: int = 50, n_draws: int = 200_000, seed: int = 0,
                p_range=(2, 10), z_limit: float = 3.0) -> dict:
    """Monte-Carlo error of the optimal rule against the closed form on random specs."""
    if n_specs < 1:
        raise InvalidArgumentError("n_specs must be >= 1")
    lo, hi = p_range
    if not 1 <= lo <= hi:
        raise InvalidArgumentError(f"invalid p_range {p_range}")
    rows = []
    for i in range(n_specs):
        p = int(np.random.default_rng(derive_seed(seed, "bayes-p", i)).integers(lo, hi + 1))
        spec = random_mixture_spec(p, derive_seed(seed, "bayes-spec", i))
        mc = monte_carlo_bayes_error(spec, n_draws, derive_seed(seed, "bayes-mc", i))
        closed = spec.bayes_error()
        if mc["sd"] > 0:
            z = (mc["rate"] - closed) / mc["sd"]
            covered = abs(z) <= z_limit
        else:
            # all draws right or all wrong: no spread to standardize by
            z = None
            covered = abs(mc["rate"] - closed) <= 1.0 / n_draws
        rows.append({"p": p, "d": spec.separation(), "closed_form": closed,
                     "rate": mc["rate"], "sd": mc["sd"], "z": z, "covered": bool(covered)})
    return {"n_specs": n_specs, "n_draws": n_draws, "z_limit": z_limit,
            "covered": sum(r["covered"] for r in rows), "specs": rows}


def marginal_benefit_suite(n_instances: int = 1000, cross_norms=(0.04, 0.02, 0.01), seed: int = 0,
                  p_range=(1, 5), eig_range=(0.5, 2.0), energy_floor: float = 0.1) -> dict:
    """Check the marginal-benefit inequality and the block-diagonal residual on random instances.

    For every cross-norm target, each instance's ``u' S^{-1} u`` (by dense
    inversion) must exceed ``u1' A11^{-1} u1``. The largest
    ``|exact - block-diagonal|`` residual per target is also reported; it
    should shrink as the target does.
    """
    lo, hi = p_range
    levels = []
    for c in cross_norms:
        violations = 0
        max_res = 0.0
        min_gain = math.inf
        for i in range(n_instances):
            rng = np.random.default_rng(derive_seed(seed, "benefit-dims", i))
            p1, p2 = (int(v) for v in rng.integers(lo, hi + 1, size=2))
            inst = marginal_benefit_instance(p1, p2, float(c), eig_range, derive_seed(seed, "benefit", i),
                                     energy_floor=energy_floor)
            V = inst.sigma.values
            u, k = inst.u, inst.split_at
            full = float(u @ np.linalg.inv(V) @ u)
            part = float(u[:k] @ np.linalg.inv(V[:k, :k]) @ u[:k])
            gain = full - part
            if not gain > 0:
                violations += 1
            min_gain = min(min_gain, gain)
            dec = perturbation_decomposition(u, inst.sigma, k)
            max_res = max(max_res, abs(dec.residual))
        levels.append({"cross_norm": float(c), "n_instances": n_instances, "violations": violations,
                       "min_gain": min_gain, "max_abs_residual": max_res})
    ordered = sorted(levels, key=lambda r: -r["cross_norm"])
    monotone = all(b["max_abs_residual"] < a["max_abs_residual"] for a, b in zip(ordered, ordered[1:]))
    return {"eig_range": list(eig_range), "energy_floor": energy_floor, "p_range": list(p_range),
            "levels": levels, "residual_decreasing": monotone}
