"""Experiment configuration: one file describes a full study.

A configuration names the system, the dictionary, the model structure
(λ, ρ, L), the training options, and the (M, σ) grid it covers.  Files
are JSON by default; TOML is accepted by extension.  Parsing is strict:
unknown keys are configuration errors, so a typo never silently falls
back to a default.

The configuration hash covers everything that determines results —
the resolved system (with any randomly drawn constants), dictionary,
model structure, training options, grids, and master seed — but not
the output directory, so moving artifacts does not orphan them.
"""

import json
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .als import TrainOptions
from .dictionaries import make_dictionary
from .errors import ConfigError
from .rng import PLANT, substream
from .serialize import SCHEMA_VERSION, config_hash, system_to_dict
from .systems import (
    PlantedSpec,
    SystemSpec,
    default_intervals,
    dipole_system,
    fput_system,
    lj_system,
)

_DICTIONARY_KINDS = ("monomial", "legendre", "trigonometric")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully resolved experiment description."""

    seed: int
    out_dir: str
    system: object  # SystemSpec or PlantedSpec
    intervals: tuple  # per-mode sampling intervals
    dictionary_kind: str
    max_degree: int
    lam: int
    rho: int
    L: int
    options: TrainOptions
    m_grid: tuple
    sigma_grid: tuple
    m_prime: int

    @property
    def d(self):
        return self.system.d

    @property
    def restarts(self):
        return self.options.restarts

    def make_dictionary(self):
        return make_dictionary(
            self.dictionary_kind, max_degree=self.max_degree, domains=self.intervals
        )

    def describe(self):
        """The canonical dict the configuration hash is computed over."""
        return {
            "schema": SCHEMA_VERSION,
            "seed": self.seed,
            "system": system_to_dict(self.system),
            "intervals": [[lo, hi] for lo, hi in self.intervals],
            "dictionary": {"kind": self.dictionary_kind, "max_degree": self.max_degree},
            "model": {"lam": self.lam, "rho": self.rho, "L": self.L},
            "train": {
                "max_sweeps": self.options.max_sweeps,
                "loss_rel_tol": self.options.loss_rel_tol,
                "ridge": self.options.ridge,
                "restarts": self.options.restarts,
            },
            "grid": {"M": list(self.m_grid), "sigma": list(self.sigma_grid)},
            "eval": {"m_prime": self.m_prime},
        }

    def hash(self):
        return config_hash(self.describe())


def _section(raw, name, allowed, required=()):
    obj = raw.pop(name, {})
    if not isinstance(obj, dict):
        raise ConfigError(f"section {name!r} must be a table, got {type(obj).__name__}")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in section {name!r}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(f"section {name!r} is missing keys {sorted(missing)}")
    return obj


def _resolve_system(obj, master_seed):
    kind = obj.get("kind")
    d = obj.get("d")
    if kind is None or d is None:
        raise ConfigError("system section needs 'kind' and 'd'")
    d = int(d)
    seed = int(obj.get("seed", master_seed))
    if kind == "fput":
        if obj.get("random_constants", False):
            if "kappa" in obj or "beta" in obj:
                raise ConfigError(
                    "pass either explicit spring constants or "
                    "random_constants, not both"
                )
            return fput_system(d, rng=substream(seed, PLANT))
        return fput_system(d, kappa=obj.get("kappa"), beta=obj.get("beta"))
    if kind == "dipole":
        base = dipole_system(d)
        fields = {
            name: tuple(obj.get(name, getattr(base, name)))
            for name in ("moments", "inertia", "positions")
        }
        return SystemSpec(kind="dipole", d=d, **fields)
    if kind == "lj":
        base = lj_system(d, q=int(obj.get("q", 2)))
        return SystemSpec(
            kind="lj",
            d=d,
            mass=tuple(obj.get("mass", base.mass)),
            epsilon=float(obj.get("epsilon", base.epsilon)),
            radius=float(obj.get("radius", base.radius)),
            q=base.q,
        )
    if kind == "planted":
        return PlantedSpec(
            d=d,
            locality=int(obj.get("locality", 1)),
            degree=int(obj.get("degree", 2)),
            coupling_degree=int(obj.get("coupling_degree", 1)),
            seed=seed,
        )
    raise ConfigError(f"unknown system kind {kind!r}")


_SYSTEM_KEYS = (
    "kind",
    "d",
    "seed",
    "random_constants",
    "kappa",
    "beta",
    "moments",
    "inertia",
    "positions",
    "mass",
    "epsilon",
    "radius",
    "q",
    "locality",
    "degree",
    "coupling_degree",
)


def parse_config(raw, seed=None, out_dir=None):
    """Build an :class:`ExperimentConfig` from a parsed mapping.

    ``seed`` and ``out_dir`` override the file's values (command-line
    flags take precedence).
    """
    if not isinstance(raw, dict):
        raise ConfigError(f"configuration must be a table, got {type(raw).__name__}")
    raw = dict(raw)

    master_seed = int(raw.pop("seed", 0)) if seed is None else int(seed)
    if seed is not None:
        raw.pop("seed", None)
    resolved_out = raw.pop("out_dir", "results") if out_dir is None else out_dir
    if out_dir is not None:
        raw.pop("out_dir", None)

    system_obj = _section(raw, "system", _SYSTEM_KEYS, required=("kind", "d"))
    system = _resolve_system(system_obj, master_seed)

    sampler_obj = _section(raw, "sampler", ("intervals",))
    if "intervals" in sampler_obj:
        intervals = tuple(tuple(map(float, pair)) for pair in sampler_obj["intervals"])
        if len(intervals) != system.d:
            raise ConfigError(
                f"sampler has {len(intervals)} intervals, system needs {system.d}"
            )
    else:
        intervals = default_intervals(system)

    dict_obj = _section(
        raw, "dictionary", ("kind", "max_degree"), required=("kind", "max_degree")
    )
    dictionary_kind = dict_obj["kind"]
    if dictionary_kind not in _DICTIONARY_KINDS:
        raise ConfigError(
            f"unknown dictionary kind {dictionary_kind!r}, "
            f"expected one of {_DICTIONARY_KINDS}"
        )
    max_degree = int(dict_obj["max_degree"])

    model_obj = _section(
        raw, "model", ("lam", "rho", "L"), required=("lam", "rho", "L")
    )
    lam, rho, L = int(model_obj["lam"]), int(model_obj["rho"]), int(model_obj["L"])
    if lam < 0 or rho < 1 or L < 0:
        raise ConfigError(f"need lam >= 0, rho >= 1, L >= 0, got {lam}, {rho}, {L}")

    train_obj = _section(
        raw, "train", ("max_sweeps", "loss_rel_tol", "ridge", "restarts")
    )
    options = TrainOptions(
        max_sweeps=int(train_obj.get("max_sweeps", 10)),
        loss_rel_tol=float(train_obj.get("loss_rel_tol", 1e-8)),
        ridge=float(train_obj.get("ridge", TrainOptions.ridge)),
        seed=master_seed,
        restarts=int(train_obj.get("restarts", 1)),
    )

    grid_obj = _section(raw, "grid", ("M", "sigma"), required=("M",))
    m_grid = tuple(int(m) for m in grid_obj["M"])
    sigma_grid = tuple(float(s) for s in grid_obj.get("sigma", [0.0]))
    if not m_grid:
        raise ConfigError("grid.M must be a nonempty list of sample counts")
    if not sigma_grid:
        raise ConfigError("grid.sigma must be a nonempty list of noise levels")
    if any(m < 1 for m in m_grid):
        raise ConfigError(f"sample counts must be >= 1, got {m_grid}")
    if any(s < 0 for s in sigma_grid):
        raise ConfigError(f"noise levels must be >= 0, got {sigma_grid}")

    eval_obj = _section(raw, "eval", ("m_prime",))
    m_prime = int(eval_obj.get("m_prime", 20000))
    if m_prime < 1:
        raise ConfigError(f"eval.m_prime must be >= 1, got {m_prime}")

    if raw:
        raise ConfigError(f"unknown configuration keys {sorted(raw)}")

    return ExperimentConfig(
        seed=master_seed,
        out_dir=str(resolved_out),
        system=system,
        intervals=intervals,
        dictionary_kind=dictionary_kind,
        max_degree=max_degree,
        lam=lam,
        rho=rho,
        L=L,
        options=options,
        m_grid=m_grid,
        sigma_grid=sigma_grid,
        m_prime=m_prime,
    )


def load_config(path, seed=None, out_dir=None):
    """Parse a JSON or TOML configuration file (by extension)."""
    path = str(path)
    try:
        if path.endswith(".toml"):
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        else:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse configuration {path}: {exc}") from exc
    return parse_config(raw, seed=seed, out_dir=out_dir)
