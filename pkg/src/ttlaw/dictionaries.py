"""Univariate function dictionaries with degree maps and domain rescaling.

A :class:`Dictionary` turns a state vector ``x ∈ R^d`` into one feature
vector per mode, ``(Ψ_1(x̃_l), …, Ψ_p(x̃_l))``, where ``x̃_l`` is the
affine rescale of ``x_l`` from the mode's declared domain onto the
canonical domain of the family: ``[-1, 1]`` for polynomials, ``[0, 2π)``
for the trigonometric dictionary.  Each basis function carries a degree
``w(i)``; the degree map is what the block-sparsity machinery consumes.

Shipped families
----------------
``monomial``
    ``Ψ_i(x) = x^{i-1}``, ``w(i) = i-1``.
``legendre``
    Un-normalized Legendre polynomials (``P_k(1) = 1``), ``w(i) = i-1``.
``trigonometric``
    ``(1, sin x, cos x)`` with ``w = (0, 1, 1)``.
"""

import numpy as np
from numpy.polynomial import Polynomial, legendre

from .errors import ConfigError, InputError, RepresentationError

KINDS = ("monomial", "legendre", "trigonometric")

_TWO_PI = 2.0 * np.pi


class Dictionary:
    """One univariate basis family shared by all ``d`` modes.

    Instances are value objects except for ``out_of_domain_count``, a
    diagnostic counter of evaluations outside the declared domains
    (evaluation proceeds regardless; the basis functions are entire).
    """

    def __init__(self, kind, p, domains):
        if kind not in KINDS:
            raise ConfigError(f"unknown dictionary kind {kind!r}")
        p = int(p)
        if p < 1:
            raise ConfigError(f"dictionary size must be >= 1, got {p}")
        if kind == "trigonometric" and p != 3:
            raise ConfigError("trigonometric dictionary has fixed size p=3")
        doms = []
        for ell, (a, b) in enumerate(domains, start=1):
            a, b = float(a), float(b)
            if not (np.isfinite(a) and np.isfinite(b) and a < b):
                raise ConfigError(
                    f"mode {ell} domain [{a}, {b}] is not a finite interval"
                )
            doms.append((a, b))
        if not doms:
            raise ConfigError("at least one mode domain is required")
        self.kind = kind
        self.p = p
        self.domains = tuple(doms)
        if kind == "trigonometric":
            self.weights = (0, 1, 1)
        else:
            self.weights = tuple(range(p))
        self.out_of_domain_count = 0

    @property
    def d(self):
        """Number of modes."""
        return len(self.domains)

    def __repr__(self):
        return f"Dictionary(kind={self.kind!r}, p={self.p}, d={self.d})"

    # -- rescaling ----------------------------------------------------------

    def rescale(self, mode, x):
        """Affine map from the mode's domain onto the canonical domain."""
        a, b = self.domains[mode - 1]
        t = (np.asarray(x, dtype=float) - a) / (b - a)
        if self.kind == "trigonometric":
            return _TWO_PI * t
        return 2.0 * t - 1.0

    def _count_out_of_domain(self, mode, x):
        a, b = self.domains[mode - 1]
        self.out_of_domain_count += int(np.count_nonzero((x < a) | (x > b)))

    # -- evaluation ----------------------------------------------------------

    def eval_mode(self, mode, x):
        """Feature vector(s) for one mode.

        Parameters
        ----------
        mode : int
            Mode index in ``1..d``.
        x : float or (M,) array_like
            Point(s) in the mode's original coordinates.

        Returns
        -------
        ndarray
            Shape ``(p,)`` for scalar input, ``(M, p)`` for vector input.
        """
        if not 1 <= mode <= self.d:
            raise InputError(f"mode {mode} outside 1..{self.d}")
        arr = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise InputError(f"non-finite input for mode {mode}")
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        self._count_out_of_domain(mode, arr)
        t = self.rescale(mode, arr)
        if self.kind == "monomial":
            out = np.vander(t, self.p, increasing=True)
        elif self.kind == "legendre":
            out = legendre.legvander(t, self.p - 1)
        else:
            out = np.stack([np.ones_like(t), np.sin(t), np.cos(t)], axis=1)
        return out[0] if scalar else out

    def featurize(self, x):
        """Per-mode feature vectors for one state ``x ∈ R^d``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise InputError(f"state has shape {x.shape}, expected ({self.d},)")
        return [self.eval_mode(ell, x[ell - 1]) for ell in range(1, self.d + 1)]

    def featurize_batch(self, X):
        """Per-mode feature matrices for ``M`` states (rows of ``X``)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise InputError(f"states have shape {X.shape}, expected (M, {self.d})")
        return [self.eval_mode(ell, X[:, ell - 1]) for ell in range(1, self.d + 1)]

    def feature_gram(self):
        """Gram matrix ``E[φ(x) φ(x)ᵀ]`` under the uniform sampling measure.

        The measure is uniform on each mode's domain; after the affine
        rescale this is uniform on the canonical domain, so the Gram is the
        same for every mode.  Polynomial kinds use Gauss–Legendre quadrature
        (exact at ``p + 1`` nodes); the trigonometric family uses the
        trapezoid rule on the period (exact for its low orders).

        Returns
        -------
        ndarray
            Symmetric positive definite ``(p, p)`` matrix.
        """
        if self.kind == "trigonometric":
            t = np.arange(64) * (_TWO_PI / 64)
            feats = np.stack([np.ones_like(t), np.sin(t), np.cos(t)], axis=1)
            return feats.T @ feats / t.size
        nodes, weights = np.polynomial.legendre.leggauss(self.p + 1)
        if self.kind == "monomial":
            feats = np.vander(nodes, self.p, increasing=True)
        else:
            feats = legendre.legvander(nodes, self.p - 1)
        return (feats.T * weights) @ feats / 2.0

    # -- representation helpers ----------------------------------------------

    def poly_coeffs(self, power_coeffs, mode):
        """Expand a polynomial in the original mode coordinate in this basis.

        Parameters
        ----------
        power_coeffs : array_like
            Power-series coefficients ``c_0 + c_1 x + …`` in the *original*
            (unscaled) coordinate of ``mode``.
        mode : int
            Mode whose domain fixes the affine substitution.

        Returns
        -------
        ndarray
            Length-``p`` vector ``v`` with ``Σ_i v_i Ψ_i(x) = Σ_k c_k x^k``.

        Raises
        ------
        RepresentationError
            For the trigonometric family, or if the degree exceeds ``p-1``.
        """
        if self.kind == "trigonometric":
            raise RepresentationError(
                "polynomials are not representable in the trigonometric dictionary"
            )
        coeffs = np.trim_zeros(np.asarray(power_coeffs, dtype=float), "b")
        if coeffs.size == 0:
            coeffs = np.zeros(1)
        if coeffs.size > self.p:
            raise RepresentationError(
                f"degree {coeffs.size - 1} exceeds dictionary degree {self.p - 1}"
            )
        a, b = self.domains[mode - 1]
        # x = a + (b-a)(t+1)/2 as a polynomial in the canonical variable t
        substitution = Polynomial([a + (b - a) / 2.0, (b - a) / 2.0])
        composed = Polynomial(coeffs)(substitution)
        if self.kind == "legendre":
            vec = legendre.poly2leg(composed.coef)
        else:
            vec = composed.coef
        out = np.zeros(self.p)
        out[: vec.size] = vec
        return out

    # -- serialization --------------------------------------------------------

    def descriptor(self):
        """JSON-ready description, round-trippable via :func:`from_descriptor`."""
        return {
            "kind": self.kind,
            "p": self.p,
            "weights": list(self.weights),
            "domains": [[a, b] for a, b in self.domains],
        }


def from_descriptor(desc):
    """Rebuild a :class:`Dictionary` from its descriptor."""
    dictionary = Dictionary(desc["kind"], desc["p"], desc["domains"])
    if list(dictionary.weights) != list(desc["weights"]):
        raise ConfigError(
            f"descriptor weights {desc['weights']} do not match "
            f"{list(dictionary.weights)} for kind {desc['kind']!r}"
        )
    return dictionary


def make_dictionary(kind, max_degree=None, domains=None):
    """Construct a dictionary of the given family.

    Parameters
    ----------
    kind : str
        One of ``monomial``, ``legendre``, ``trigonometric``.
    max_degree : int, optional
        Polynomial degree; the dictionary size is ``max_degree + 1``.
        Ignored for ``trigonometric`` (fixed ``p = 3``).
    domains : sequence of (float, float)
        Per-mode intervals ``[a_l, b_l]``.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown dictionary kind {kind!r}")
    if domains is None:
        raise ConfigError("per-mode domains are required")
    if kind == "trigonometric":
        p = 3
    else:
        if max_degree is None or int(max_degree) < 0:
            raise ConfigError(f"polynomial kinds need max_degree >= 0, got {max_degree}")
        p = int(max_degree) + 1
    return Dictionary(kind, p, domains)


def dict_eval(dictionary, mode, x):
    """Evaluate one mode's feature vector (operation-name alias)."""
    return dictionary.eval_mode(mode, x)


def featurize(dictionary, x):
    """Per-mode feature vectors for one state (operation-name alias)."""
    return dictionary.featurize(x)
