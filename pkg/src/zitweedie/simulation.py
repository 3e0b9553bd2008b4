"""Synthetic zero-inflated Tweedie data.

Covariates are i.i.d. standard normal; the three link-scale functions are
affine rescalings of random sums of Gaussian bumps (Friedman's random
function generator), and responses come from an exact compound
Poisson-gamma sampler behind a Bernoulli zero state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .data import Dataset, FeatureSchema
from .tweedie import TweedieParams, ZitParams, as_zeta, gamma_shape, prob_zero

N_TERMS = 20
_REFERENCE_DRAWS = 20_000


@dataclass(frozen=True, eq=False)
class RandomTerm:
    coef: float
    subset: np.ndarray  # covariate indices feeding this term
    center: np.ndarray
    rotation: np.ndarray  # orthogonal U
    eigenvalues: np.ndarray  # diagonal of D

    @property
    def precision(self):
        return (self.rotation * self.eigenvalues) @ self.rotation.T


@dataclass(frozen=True, eq=False)
class RandomFunctionSpec:
    p: int
    terms: tuple
    # mean and sd of the raw function under x ~ N(0, I), for standardisation
    ref_mean: float = 0.0
    ref_sd: float = 1.0

    def __call__(self, X):
        return eval_random_function(self, X)

    def standardized(self, X):
        return (eval_random_function(self, X) - self.ref_mean) / self.ref_sd


def random_orthogonal(k, rng):
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.sign(np.diag(r))


def gen_random_function(p, rng=None, n_terms=N_TERMS) -> RandomFunctionSpec:
    """Draw ``F(x) = sum_j a_j exp(-(z_j - m_j)' V_j (z_j - m_j) / 2)``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    rng = np.random.default_rng(rng)
    terms = []
    for _ in range(n_terms):
        a = rng.uniform(-1.0, 1.0)
        r = rng.exponential(5.0)
        pj = min(int(np.floor(1.5 + r)), p)
        subset = rng.permutation(p)[:pj]
        center = rng.standard_normal(pj)
        U = random_orthogonal(pj, rng)
        d = rng.uniform(0.1, 2.0, size=pj) ** 2
        terms.append(RandomTerm(a, subset, center, U, d))
    spec = RandomFunctionSpec(p, tuple(terms))
    ref = eval_random_function(spec, rng.standard_normal((_REFERENCE_DRAWS, p)))
    sd = float(ref.std())
    return RandomFunctionSpec(p, tuple(terms), float(ref.mean()), sd if sd > 0 else 1.0)


def eval_random_function(spec: RandomFunctionSpec, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != spec.p:
        raise ValueError(f"expected {spec.p} covariates, got {X.shape[1]}")
    out = np.zeros(X.shape[0])
    for t in spec.terms:
        # (z - m)' U D U' (z - m) = sum_k d_k ((z - m) U)_k^2
        proj = (X[:, t.subset] - t.center) @ t.rotation
        out += t.coef * np.exp(-0.5 * (proj * proj) @ t.eigenvalues)
    return out[0] if single else out


@dataclass(frozen=True)
class CompoundPoissonGamma:
    poisson_rate: float
    gamma_shape: float
    gamma_mean_per_claim: float

    @property
    def gamma_scale(self):
        return self.gamma_mean_per_claim / self.gamma_shape


def tweedie_to_cpg(mu, phi, zeta):
    """Frequency/severity form: rate ``lambda``, shape ``alpha``, claim mean ``tau``."""
    z = as_zeta(zeta)
    alpha = gamma_shape(z)
    lam = mu ** (2.0 - z) / (phi * (2.0 - z))
    tau = alpha * phi * (z - 1.0) * mu ** (z - 1.0)
    return CompoundPoissonGamma(lam, alpha, tau)


def cpg_to_tweedie(cpg: CompoundPoissonGamma):
    alpha = cpg.gamma_shape
    zeta = (alpha + 2.0) / (alpha + 1.0)
    lam, tau = cpg.poisson_rate, cpg.gamma_mean_per_claim
    mu = lam * tau
    phi = lam ** (1.0 - zeta) * tau ** (2.0 - zeta) / (2.0 - zeta)
    return TweedieParams(mu, phi, zeta)


def sample_zit(pi, mu, phi, zeta, w=1.0, rng=None, size=None):
    """Draw claim cost per unit exposure from the zero-inflated Tweedie law.

    Parameters broadcast; ``size`` defaults to their common shape.
    """
    z = as_zeta(zeta)
    rng = np.random.default_rng(rng)
    pi, mu, phi, w = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (pi, mu, phi, w)))
    shape = pi.shape if size is None else size
    pi, mu, phi, w = (np.broadcast_to(a, shape) for a in (pi, mu, phi, w))
    alpha = gamma_shape(z)
    lam = mu ** (2.0 - z) / (phi * (2.0 - z))
    theta = phi * (z - 1.0) * mu ** (z - 1.0)
    zero_state = rng.random(shape) < pi
    n_claims = rng.poisson(lam * w)
    n_claims = np.where(zero_state, 0, n_claims)
    out = np.zeros(shape)
    hit = n_claims > 0
    out[hit] = rng.gamma(n_claims[hit] * alpha, theta[hit]) / w[hit]
    return out


def sample_zit_params(params: ZitParams, w=1.0, rng=None, size=None):
    t = params.tweedie
    return sample_zit(params.pi, t.mu, t.phi, t.zeta, w, rng, size)


@dataclass(frozen=True)
class Scaling:
    """Link-scale affine maps ``center + scale * standardized F*(x)``.

    ``mu_center`` and ``phi_center`` are log-scale, ``pi_center`` logit-scale.
    """

    mu_center: float = 0.0
    mu_scale: float = 0.5
    phi_center: float = 0.0
    phi_scale: float = 0.25
    pi_center: float = 0.0
    pi_scale: float = 0.5

    @classmethod
    def constant(cls, mu, phi, pi):
        return cls(float(np.log(mu)), 0.0, float(np.log(phi)), 0.0, float(logit(pi)), 0.0)


@dataclass(frozen=True, eq=False)
class FunctionSpecs:
    f_mu: RandomFunctionSpec
    f_phi: RandomFunctionSpec
    f_pi: RandomFunctionSpec

    @classmethod
    def draw(cls, p, rng=None):
        rng = np.random.default_rng(rng)
        return cls(gen_random_function(p, rng), gen_random_function(p, rng), gen_random_function(p, rng))


@dataclass
class Truth:
    mu: np.ndarray
    phi: np.ndarray
    pi: np.ndarray
    f_mu: np.ndarray = field(repr=False, default=None)
    f_phi: np.ndarray = field(repr=False, default=None)
    f_pi: np.ndarray = field(repr=False, default=None)

    @property
    def pure_premium(self):
        return (1.0 - self.pi) * self.mu

    def as_columns(self):
        return {"mu": self.mu, "phi": self.phi, "pi": self.pi, "pure_premium": self.pure_premium}


def link_scores(X, specs: FunctionSpecs, scaling: Scaling):
    def part(spec, center, scale):
        if scale == 0.0:
            return np.full(X.shape[0], center)
        return center + scale * spec.standardized(X)

    return (
        part(specs.f_mu, scaling.mu_center, scaling.mu_scale),
        part(specs.f_phi, scaling.phi_center, scaling.phi_scale),
        part(specs.f_pi, scaling.pi_center, scaling.pi_scale),
    )


def make_dataset(n, p, specs: FunctionSpecs, scaling: Scaling, zeta, exposure="unit", rng=None):
    """Simulate ``n`` policies; returns ``(Dataset, Truth)``.

    ``exposure`` is ``"unit"`` (w = 1) or ``"uniform"`` (w ~ U(0.5, 1.5)).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng)
    X = rng.standard_normal((n, p))
    if exposure == "unit":
        w = np.ones(n)
    elif exposure == "uniform":
        w = rng.uniform(0.5, 1.5, size=n)
    else:
        raise ValueError(f"unknown exposure law {exposure!r}")
    f_mu, f_phi, f_pi = link_scores(X, specs, scaling)
    mu, phi, pi = np.exp(f_mu), np.exp(f_phi), expit(f_pi)
    y = sample_zit(pi, mu, phi, zeta, w, rng)
    data = Dataset(X, y, w, FeatureSchema.numeric(p, exposure="exposure"))
    return data, Truth(mu, phi, pi, f_mu, f_phi, f_pi)


def expected_zero_fraction(truth: Truth, w, zeta):
    p0 = prob_zero(truth.mu, truth.phi / np.asarray(w, dtype=float), zeta)
    return float(np.mean(truth.pi + (1.0 - truth.pi) * p0))


def calibrate_zero_rate(target, p, specs: FunctionSpecs, scaling: Scaling, zeta, rng=None, n_ref=20_000):
    """Return ``scaling`` with ``pi_center`` set so the expected zero rate is ``target``."""
    from dataclasses import replace

    from scipy.optimize import brentq

    X = np.random.default_rng(rng).standard_normal((n_ref, p))
    w = np.ones(n_ref)

    def gap(c):
        sc = replace(scaling, pi_center=c)
        f_mu, f_phi, f_pi = link_scores(X, specs, sc)
        truth = Truth(np.exp(f_mu), np.exp(f_phi), expit(f_pi))
        return expected_zero_fraction(truth, w, zeta) - target

    lo, hi = -30.0, 30.0
    if gap(lo) > 0:
        raise ValueError(f"zero rate {target} is below what the Tweedie part alone produces")
    if gap(hi) < 0:
        raise ValueError(f"zero rate {target} is unreachable")
    return replace(scaling, pi_center=brentq(gap, lo, hi, xtol=1e-10))
