"""Benchmark dynamical laws, dataset sampling, and the residuum metric.

Three ground-truth systems: a chain of non-linear springs with fixed
walls, a chain of rotating magnetic dipoles, and a chain of particles
with a modified Lennard-Jones interaction whose targets become
polynomial after a gap-power rescaling.  A fourth, synthetic family —
random banded polynomial laws with own-mode-anchored coupling — serves
as the planted truth for plant-and-recover tests.

Datasets are direct evaluations of the law at i.i.d. uniform states,
optionally with additive Gaussian observation noise; no trajectories
are integrated and no derivatives are estimated.  Model quality is the
residuum: the relative root-mean-square error against the truth on a
freshly drawn held-out sample.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, InputError, SingularityError
from .rng import EVAL, NOISE, PLANT, SAMPLING, substream

_TWO_PI = 2.0 * math.pi
#: minimum admissible particle gap before a state counts as singular
_GAP_FLOOR = 1e-12


# -- system descriptions -------------------------------------------------------


@dataclass(frozen=True)
class SystemSpec:
    """Parameters of one benchmark system.

    ``kind`` selects the law; only the fields of that kind are read.
    Spring chains use ``kappa``/``beta`` of length ``d + 1`` (fixed
    walls, see :func:`fput_rhs`).  Dipole chains use unit-normalized
    ``moments``/``inertia`` and strictly increasing ``positions``.
    Particle chains use ``mass`` with scalar interaction parameters
    ``epsilon``/``radius`` and the repulsion exponent ``q``.
    """

    kind: str
    d: int
    kappa: tuple = None
    beta: tuple = None
    moments: tuple = None
    inertia: tuple = None
    positions: tuple = None
    mass: tuple = None
    epsilon: float = 1.0
    radius: float = 1.0
    q: int = 2

    def __post_init__(self):
        if self.kind not in ("fput", "dipole", "lj"):
            raise ConfigError(f"unknown system kind {self.kind!r}")
        if self.d < 2:
            raise ConfigError(f"need at least two modes, got d={self.d}")
        if self.kind == "fput":
            for name in ("kappa", "beta"):
                val = getattr(self, name)
                if val is None or len(val) != self.d + 1:
                    raise ConfigError(
                        f"{name} must have length d+1={self.d + 1} (fixed walls)"
                    )
                if not np.isfinite(val).all():
                    raise ConfigError(f"{name} contains non-finite entries")
        elif self.kind == "dipole":
            for name in ("moments", "inertia", "positions"):
                val = getattr(self, name)
                if val is None or len(val) != self.d:
                    raise ConfigError(f"{name} must have length d={self.d}")
                if not np.isfinite(val).all():
                    raise ConfigError(f"{name} contains non-finite entries")
            if not (np.diff(self.positions) > 0).all():
                raise ConfigError("dipole positions must be strictly increasing")
        else:
            if self.mass is None or len(self.mass) != self.d:
                raise ConfigError(f"mass must have length d={self.d}")
            if not (
                np.isfinite(self.mass).all()
                and np.isfinite(self.epsilon)
                and np.isfinite(self.radius)
            ):
                raise ConfigError("interaction parameters must be finite")
            if self.radius <= 0:
                raise ConfigError("interaction radius must be positive")
            if self.q < 1:
                raise ConfigError(f"repulsion exponent must be >= 1, got {self.q}")


def fput_system(d, kappa=None, beta=None, rng=None):
    """Spring-chain spec; defaults to unit constants.

    With ``rng`` given, draws κ uniformly from ``[0, 2]`` and β from
    ``[0, 1.4]`` (the random-constant variant of the benchmark).
    """
    if rng is not None:
        if kappa is not None or beta is not None:
            raise ConfigError("pass either explicit constants or rng, not both")
        kappa = tuple(rng.uniform(0.0, 2.0, size=d + 1))
        beta = tuple(rng.uniform(0.0, 1.4, size=d + 1))
    if kappa is None:
        kappa = (1.0,) * (d + 1)
    if beta is None:
        beta = (1.0,) * (d + 1)
    return SystemSpec(kind="fput", d=d, kappa=tuple(kappa), beta=tuple(beta))


def dipole_system(d):
    """Dipole-chain spec with unit moments and unit grid positions."""
    return SystemSpec(
        kind="dipole",
        d=d,
        moments=(1.0,) * d,
        inertia=(1.0,) * d,
        positions=tuple(float(k) for k in range(d)),
    )


def lj_system(d, q=2):
    """Particle-chain spec with unit masses and unit interaction scales."""
    return SystemSpec(kind="lj", d=d, mass=(1.0,) * d, q=q)


@dataclass(frozen=True)
class PlantedSpec:
    """Random banded polynomial law used as a recoverable ground truth.

    Component ``k`` is a polynomial in the modes within ``locality`` of
    ``k``, with total degree at most ``degree``.  Every non-constant
    term contains mode ``k`` itself, and each other mode enters a term
    with power at most ``coupling_degree`` — couplings are anchored on
    the own mode.  Anchored laws are recovered by alternating fits at
    solver-precision rates; unrestricted draws contain pure-neighbor
    content whose per-sweep progress is slow, which would blunt a
    recovery test.  Coefficients are i.i.d. standard normal from the
    planted-law substream of ``seed``.
    """

    d: int
    locality: int = 1
    degree: int = 2
    coupling_degree: int = 1
    seed: int = 0
    kind: str = field(default="planted", init=False)

    def __post_init__(self):
        if self.d < 2:
            raise ConfigError(f"need at least two modes, got d={self.d}")
        if self.locality < 1:
            raise ConfigError("locality must be >= 1")
        if self.degree < 1:
            raise ConfigError("degree must be >= 1")
        if not 1 <= self.coupling_degree <= self.degree:
            raise ConfigError("coupling_degree must be in [1, degree]")


class PlantedLaw:
    """Evaluator for one coefficient draw of a :class:`PlantedSpec`."""

    def __init__(self, spec):
        self.spec = spec
        rng = substream(spec.seed, PLANT)
        self.terms = []  # per component: list of (coefficient, ((mode, power), …))
        for k in range(1, spec.d + 1):
            terms = []
            for powers in _anchored_powers(k, spec):
                terms.append((float(rng.standard_normal()), powers))
            self.terms.append(terms)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.spec.d:
            raise InputError(
                f"state has {x.shape[1]} modes, law expects {self.spec.d}"
            )
        y = np.zeros_like(x)
        for k, terms in enumerate(self.terms):
            acc = y[:, k]
            for coef, powers in terms:
                term = np.full(x.shape[0], coef)
                for mode, power in powers:
                    term *= x[:, mode - 1] ** power
                acc += term
        return y[0] if squeeze else y


def _anchored_powers(k, spec):
    """Exponent patterns of component ``k``: ((mode, power), …) tuples.

    Enumerated in a fixed order (band position, then lexicographic in
    the exponents) so the coefficient draw is reproducible.
    """
    lo = max(1, k - spec.locality)
    hi = min(spec.d, k + spec.locality)
    band = list(range(lo, hi + 1))
    caps = [
        spec.degree if mode == k else spec.coupling_degree for mode in band
    ]
    patterns = [((), 0)]  # (assigned powers, total degree)
    for mode, cap in zip(band, caps):
        patterns = [
            (assigned + (((mode, power),) if power else ()), total + power)
            for assigned, total in patterns
            for power in range(min(cap, spec.degree - total) + 1)
        ]
    out = []
    for assigned, total in patterns:
        own = next((p for m, p in assigned if m == k), 0)
        if total == 0 or own >= 1:
            out.append(assigned)
    return out


# -- dynamical laws -------------------------------------------------------------


def _states(x, d):
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != d:
        raise InputError(f"state has {x.shape[1]} modes, expected {d}")
    return x, squeeze


def fput_rhs(x, kappa, beta):
    """Spring-chain law with fixed walls ``x_0 = x_{d+1} = 0``.

    ``f_k = κ_{k+1}(x_{k+1}−x_k) − κ_k(x_k−x_{k−1})
    + β_{k+1}(x_{k+1}−x_k)³ − β_k(x_k−x_{k−1})³`` with the constants
    indexed ``1 … d+1`` (entry ``0`` of the arrays is κ_1 / β_1).
    """
    kappa = np.asarray(kappa, dtype=float)
    beta = np.asarray(beta, dtype=float)
    x, squeeze = _states(x, kappa.size - 1)
    if beta.size != kappa.size:
        raise InputError("kappa and beta must have equal length")
    walls = np.pad(x, ((0, 0), (1, 1)))
    right = walls[:, 2:] - walls[:, 1:-1]
    left = walls[:, 1:-1] - walls[:, :-2]
    y = kappa[1:] * right - kappa[:-1] * left + beta[1:] * right**3 - beta[:-1] * left**3
    return y[0] if squeeze else y


def dipole_rhs(x, moments, inertia, positions):
    """Dipole-chain law ``f_k = I_k M_k Σ_{ℓ≠k} M_ℓ |X_k−X_ℓ|⁻³ sin(x_k−x_ℓ)``.

    Expanded through ``sin(x_k−x_ℓ) = sin x_k cos x_ℓ − cos x_k sin x_ℓ``
    so the pair sum is two matrix products instead of an ``(M, d, d)``
    intermediate.
    """
    moments = np.asarray(moments, dtype=float)
    inertia = np.asarray(inertia, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if not (np.diff(positions) > 0).all():
        raise InputError("dipole positions must be strictly increasing")
    x, squeeze = _states(x, positions.size)
    gaps = np.abs(positions[:, None] - positions[None, :])
    np.fill_diagonal(gaps, 1.0)
    weights = moments[None, :] / gaps**3
    np.fill_diagonal(weights, 0.0)
    s, c = np.sin(x), np.cos(x)
    y = (inertia * moments) * (s * (c @ weights.T) - c * (s @ weights.T))
    return y[0] if squeeze else y


def lj_rhs(x, mass, epsilon=1.0, radius=1.0, q=2):
    """Particle-chain law with a modified Lennard-Jones interaction.

    ``f_k = 6 m_k Σ_{ℓ≠k} sign(x_k−x_ℓ) (ε/R)
    (2 (R/|x_k−x_ℓ|)^{2q+1} − (R/|x_k−x_ℓ|)^{q+1})``.  ``epsilon`` and
    ``radius`` may be scalars or symmetric ``(d, d)`` arrays.
    """
    mass = np.asarray(mass, dtype=float)
    x, squeeze = _states(x, mass.size)
    diff = x[:, :, None] - x[:, None, :]
    gaps = np.abs(diff)
    if (gaps[:, ~np.eye(mass.size, dtype=bool)] < _GAP_FLOOR).any():
        raise SingularityError("coincident particles in evaluation state")
    np.einsum("mkk->mk", gaps)[:] = 1.0  # silence the diagonal
    ratio = radius / gaps
    pair = np.sign(diff) * (epsilon / radius) * (
        2.0 * ratio ** (2 * q + 1) - ratio ** (q + 1)
    )
    y = 6.0 * mass * pair.sum(axis=2)
    return y[0] if squeeze else y


def lj_transform_targets(x, y, q=2):
    """Gap-power rescaling that makes particle-chain targets polynomial.

    ``g_k = (x_k − x_{k−1})^{2q+1} (x_k − x_{k+1})^{2q+1} y_k`` with the
    missing neighbor factor at the chain ends replaced by 1.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    squeeze = y.ndim == 1
    y = np.atleast_2d(y)
    if y.shape != x.shape:
        raise InputError(f"targets {y.shape} must match states {x.shape}")
    power = 2 * q + 1
    g = y.copy()
    g[:, 1:] *= (x[:, 1:] - x[:, :-1]) ** power
    g[:, :-1] *= (x[:, :-1] - x[:, 1:]) ** power
    return g[0] if squeeze else g


def total_energy_lj(x, v, spec):
    """Total energy: pair potential terms plus kinetic energy.

    ``E = Σ_{k<ℓ} ε ((R/|x_k−x_ℓ|)^{2q} − (R/|x_k−x_ℓ|)^q)
    + Σ_k m_k v_k² / 2``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape != (spec.d,) or v.shape != (spec.d,):
        raise InputError(f"state and velocity must have shape ({spec.d},)")
    gaps = np.abs(x[:, None] - x[None, :])
    upper = np.triu_indices(spec.d, k=1)
    if (gaps[upper] < _GAP_FLOOR).any():
        raise SingularityError("coincident particles in energy state")
    ratio = spec.radius / gaps[upper]
    potential = spec.epsilon * (ratio ** (2 * spec.q) - ratio**spec.q).sum()
    kinetic = 0.5 * float(np.asarray(spec.mass) @ v**2)
    return float(potential + kinetic)


def system_rhs(spec):
    """Law evaluator ``(M, d) -> (M, d)`` for a system or planted spec.

    For particle chains the returned evaluator yields the gap-power
    transformed targets — the polynomial quantity the models learn.
    """
    if spec.kind == "fput":
        return lambda x: fput_rhs(x, spec.kappa, spec.beta)
    if spec.kind == "dipole":
        return lambda x: dipole_rhs(x, spec.moments, spec.inertia, spec.positions)
    if spec.kind == "lj":
        return lambda x: lj_transform_targets(
            x, lj_rhs(x, spec.mass, spec.epsilon, spec.radius, spec.q), spec.q
        )
    return PlantedLaw(spec)


# -- sampling -------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerSpec:
    """Per-mode sampling intervals, noise level, and the run seed."""

    intervals: tuple
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "intervals", tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        )
        for lo, hi in self.intervals:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"empty or non-finite sampling interval ({lo}, {hi})")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ConfigError(f"noise level must be finite and >= 0, got {self.sigma}")


def default_intervals(spec):
    """Training intervals of a spec: these double as evaluation intervals.

    Spring chains and planted laws sample ``[−1, 1]`` per mode, dipole
    angles sample ``[0, 2π)``, and particles sample ``[ℓ−1/4, ℓ+1/4]``
    around the unit grid (which keeps gaps ≥ 1/2 and preserves order).
    """
    if spec.kind == "dipole":
        return ((0.0, _TWO_PI),) * spec.d
    if spec.kind == "lj":
        return tuple((k - 0.25, k + 0.25) for k in range(1, spec.d + 1))
    return ((-1.0, 1.0),) * spec.d


def default_sampler(spec, sigma=0.0, seed=0):
    """Sampler over :func:`default_intervals` of the spec."""
    return SamplerSpec(intervals=default_intervals(spec), sigma=sigma, seed=seed)


def _draw_states(intervals, M, rng):
    lows = np.array([lo for lo, _ in intervals])
    highs = np.array([hi for _, hi in intervals])
    return lows + (highs - lows) * rng.random((M, len(intervals)))


def sample_dataset(spec, sampler, M):
    """Draw ``M`` i.i.d. states and their (optionally noisy) targets.

    States are uniform per mode on the sampler's intervals; targets are
    the exact law values plus ``N(0, σ²)`` noise.  Particle-chain
    targets are stored in the gap-power transformed form.  States come
    from the sampling substream and noise from the noise substream of
    the sampler seed, so the same seed reproduces the dataset exactly
    and a larger ``M`` extends a smaller one row for row.
    """
    from .als import TrainingSet

    if M < 1:
        raise ConfigError(f"need at least one sample, got M={M}")
    if len(sampler.intervals) != spec.d:
        raise ConfigError(
            f"sampler has {len(sampler.intervals)} intervals, system needs {spec.d}"
        )
    if spec.kind == "lj":
        for (_, hi), (lo, _) in zip(sampler.intervals, sampler.intervals[1:]):
            if hi >= lo:
                raise ConfigError(
                    "particle sampling intervals must be disjoint and increasing"
                )
    X = _draw_states(sampler.intervals, M, substream(sampler.seed, SAMPLING))
    Y = system_rhs(spec)(X)
    if sampler.sigma > 0:
        Y = Y + sampler.sigma * substream(sampler.seed, NOISE).standard_normal(Y.shape)
    return TrainingSet(X, Y, domains=sampler.intervals)


# -- evaluation -----------------------------------------------------------------


def residuum(model_eval, truth_eval, spec, m_prime=20000, seed=0):
    """Relative RMS error of a model on a fresh held-out sample.

    ``sqrt(Σᵢ‖f̂(x′ᵢ) − f(x′ᵢ)‖² / Σᵢ‖f(x′ᵢ)‖²)`` over ``m_prime``
    states drawn from the evaluation substream of ``seed`` on the
    spec's default intervals — disjoint from every training stream.
    """
    if m_prime < 1:
        raise ConfigError(f"need at least one evaluation sample, got {m_prime}")
    X = _draw_states(default_intervals(spec), m_prime, substream(seed, EVAL))
    predicted = np.asarray(model_eval(X), dtype=float)
    truth = np.asarray(truth_eval(X), dtype=float)
    if predicted.shape != truth.shape:
        raise InputError(
            f"model output {predicted.shape} must match truth {truth.shape}"
        )
    denom = float(np.sum(truth**2))
    if denom == 0.0:
        raise DomainError("truth is identically zero on the evaluation sample")
    return float(np.sqrt(np.sum((predicted - truth) ** 2) / denom))
