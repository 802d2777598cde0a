"""Artifact files: datasets, models, results tables, and their provenance.

Every file this module writes is a deterministic function of its
inputs: JSON payloads are serialized with sorted keys and fixed
separators, arrays as base64-encoded little-endian float64 blocks.
Writing the same content twice therefore produces identical bytes,
which makes dataset-regeneration checks and sweep resumption cheap to
verify.  Three artifact kinds share one schema version:

=============  ======================================================
``dataset``    sampling header plus the ``X``/``Y`` column blocks
``model``      a trained block-sparse ensemble, or a list of dense
               per-component trains (exact witnesses)
``results``    CSV rows consumed by the plotting scripts
=============  ======================================================

CSV artifacts carry their provenance in a leading ``#`` comment line;
JSON artifacts carry it as header fields.
"""

import base64
import hashlib
import io
import json

import numpy as np

from .dictionaries import from_descriptor
from .errors import ConfigError
from .selection import SelectionTable, ensemble_from_cores
from .blocks import BlockSparseCore, chain_patterns
from .systems import PlantedSpec, SamplerSpec, SystemSpec
from .tt import TensorTrain

SCHEMA_VERSION = 1

#: Column order of the results CSV, fixed for the plotting scripts.
RESULT_COLUMNS = (
    "system",
    "d",
    "M",
    "sigma",
    "rho",
    "L",
    "restart",
    "residuum",
    "seconds",
    "status",
)

_INT_COLUMNS = frozenset(("d", "M", "rho", "L", "restart"))
_FLOAT_COLUMNS = frozenset(("sigma", "residuum", "seconds"))


# -- canonical JSON and hashing ---------------------------------------------------


def canonical_json(obj):
    """Deterministic JSON text: sorted keys, no whitespace, no NaN."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj):
    """SHA-256 of the canonical JSON form of ``obj`` (hex digest)."""
    return hashlib.sha256(canonical_json(obj).encode("ascii")).hexdigest()


def _encode_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(obj):
    try:
        shape = tuple(int(n) for n in obj["shape"])
        raw = base64.b64decode(obj["data"].encode("ascii"), validate=True)
        out = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed array block: {exc}") from exc
    return out


def _read_payload(path, expect_format):
    try:
        with open(path, "r", encoding="ascii") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {expect_format} file {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != expect_format:
        raise ConfigError(
            f"{path} is not a {expect_format} file "
            f"(format tag {payload.get('format') if isinstance(payload, dict) else None!r})"
        )
    if payload.get("schema") != SCHEMA_VERSION:
        raise ConfigError(
            f"{path} has schema {payload.get('schema')!r}, "
            f"this build reads schema {SCHEMA_VERSION}"
        )
    return payload


def _write_payload(path, payload):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(canonical_json(payload))
        fh.write("\n")


# -- system and sampler specs -----------------------------------------------------

_SYSTEM_FIELDS = {
    "fput": ("kappa", "beta"),
    "dipole": ("moments", "inertia", "positions"),
    "lj": ("mass", "epsilon", "radius", "q"),
    "planted": ("locality", "degree", "coupling_degree", "seed"),
}


def system_to_dict(spec):
    """JSON-ready system description, round-trippable via :func:`system_from_dict`."""
    if spec.kind not in _SYSTEM_FIELDS:
        raise ConfigError(f"unknown system kind {spec.kind!r}")
    out = {"kind": spec.kind, "d": spec.d}
    for name in _SYSTEM_FIELDS[spec.kind]:
        value = getattr(spec, name)
        out[name] = list(value) if isinstance(value, tuple) else value
    return out


def system_from_dict(obj):
    """Rebuild a system or planted spec from its dictionary form."""
    if not isinstance(obj, dict) or "kind" not in obj or "d" not in obj:
        raise ConfigError(f"system description needs 'kind' and 'd', got {obj!r}")
    kind = obj["kind"]
    if kind not in _SYSTEM_FIELDS:
        raise ConfigError(f"unknown system kind {kind!r}")
    extra = set(obj) - {"kind", "d"} - set(_SYSTEM_FIELDS[kind])
    if extra:
        raise ConfigError(f"unknown {kind} fields {sorted(extra)}")
    fields = {}
    for name in _SYSTEM_FIELDS[kind]:
        if name in obj:
            value = obj[name]
            fields[name] = tuple(value) if isinstance(value, list) else value
    if kind == "planted":
        return PlantedSpec(d=int(obj["d"]), **fields)
    return SystemSpec(kind=kind, d=int(obj["d"]), **fields)


def sampler_to_dict(sampler):
    return {
        "intervals": [[lo, hi] for lo, hi in sampler.intervals],
        "sigma": sampler.sigma,
        "seed": sampler.seed,
    }


def sampler_from_dict(obj):
    try:
        return SamplerSpec(
            intervals=tuple(tuple(pair) for pair in obj["intervals"]),
            sigma=float(obj["sigma"]),
            seed=int(obj["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed sampler description: {exc}") from exc


# -- dataset files ----------------------------------------------------------------


def save_dataset(path, spec, sampler, data, provenance=None):
    """Write a dataset file: provenance header plus the X/Y column blocks.

    The file is a deterministic function of ``(spec, sampler, data)``
    and the optional ``provenance`` dict, so regenerating a dataset
    from the same configuration reproduces it byte for byte.
    """
    payload = {
        "format": "ttlaw-dataset",
        "schema": SCHEMA_VERSION,
        "system": system_to_dict(spec),
        "sampler": sampler_to_dict(sampler),
        "M": int(data.M),
        "columns": {"X": _encode_array(data.X), "Y": _encode_array(data.Y)},
    }
    if provenance:
        payload["provenance"] = provenance
    _write_payload(path, payload)


def load_dataset(path):
    """Read a dataset file back as ``(spec, sampler, training_set)``."""
    from .als import TrainingSet

    payload = _read_payload(path, "ttlaw-dataset")
    try:
        spec = system_from_dict(payload["system"])
        sampler = sampler_from_dict(payload["sampler"])
        X = _decode_array(payload["columns"]["X"])
        Y = _decode_array(payload["columns"]["Y"])
    except KeyError as exc:
        raise ConfigError(f"dataset file {path} is missing field {exc}") from exc
    data = TrainingSet(X, Y, domains=sampler.intervals)
    if data.M != payload["M"] or data.d != spec.d:
        raise ConfigError(
            f"dataset file {path} is inconsistent: header says "
            f"M={payload['M']}, d={spec.d}, blocks are {data.X.shape}"
        )
    return spec, sampler, data


def dataset_to_csv(data, fh):
    """Plain-text export: one header line, then ``x1..xd,y1..yd`` rows."""
    d = data.d
    names = [f"x{k}" for k in range(1, d + 1)] + [f"y{k}" for k in range(1, d + 1)]
    fh.write(",".join(names) + "\n")
    for row in np.hstack([data.X, data.Y]):
        fh.write(",".join(repr(float(v)) for v in row) + "\n")


# -- model files ------------------------------------------------------------------


class LoadedModel:
    """A deserialized model: either an ensemble or dense witness trains."""

    def __init__(self, dictionary, meta, ensemble=None, trains=None):
        if (ensemble is None) == (trains is None):
            raise ConfigError("a model holds either an ensemble or trains")
        self.dictionary = dictionary
        self.meta = meta
        self.ensemble = ensemble
        self.trains = trains

    @property
    def kind(self):
        return "ensemble" if self.ensemble is not None else "trains"

    @property
    def d(self):
        return self.dictionary.d

    def predict(self, X):
        """Evaluate all component laws at the rows of ``X`` → (M, d)."""
        if self.ensemble is not None:
            return self.ensemble.predict(X)
        feats = self.dictionary.featurize_batch(X)
        return np.column_stack([t.evaluate_batch(feats) for t in self.trains])

    def component_laws(self):
        """Dense TT of each component's law, in component order."""
        if self.ensemble is not None:
            return [
                self.ensemble.assemble_law(k) for k in range(1, self.ensemble.d + 1)
            ]
        return list(self.trains)


def save_ensemble_model(path, ensemble, meta=None):
    """Write a trained ensemble: structure header plus one vector per core."""
    cores = [
        {
            "ell": ell,
            "type": j,
            "vector": _encode_array(ensemble.cores[(ell, j)].get_vector()),
        }
        for ell, j in sorted(ensemble.cores)
    ]
    payload = {
        "format": "ttlaw-model",
        "schema": SCHEMA_VERSION,
        "model_type": "ensemble",
        "dictionary": ensemble.dictionary.descriptor(),
        "lam": ensemble.lam,
        "rho": ensemble.rho,
        "table": {
            "alpha": ensemble.table.alpha,
            "entries": ensemble.table.table.tolist(),
        },
        "cores": cores,
        "meta": meta or {},
    }
    _write_payload(path, payload)


def save_trains_model(path, dictionary, trains, meta=None):
    """Write per-component dense trains (the exact-witness model form)."""
    if len(trains) != dictionary.d:
        raise ConfigError(
            f"got {len(trains)} trains for {dictionary.d} modes"
        )
    payload = {
        "format": "ttlaw-model",
        "schema": SCHEMA_VERSION,
        "model_type": "trains",
        "dictionary": dictionary.descriptor(),
        "trains": [
            [_encode_array(core) for core in train.cores] for train in trains
        ],
        "meta": meta or {},
    }
    _write_payload(path, payload)


def load_model(path):
    """Read a model file back as a :class:`LoadedModel`."""
    payload = _read_payload(path, "ttlaw-model")
    try:
        dictionary = from_descriptor(payload["dictionary"])
        meta = payload.get("meta", {})
        if payload["model_type"] == "ensemble":
            table = SelectionTable(
                payload["table"]["entries"], payload["table"]["alpha"]
            )
            lam, rho = int(payload["lam"]), int(payload["rho"])
            patterns = chain_patterns(dictionary.weights, lam, table.d, rho)
            core_map = {}
            for entry in payload["cores"]:
                ell, j = int(entry["ell"]), int(entry["type"])
                core = BlockSparseCore(patterns[ell - 1])
                core.set_vector(_decode_array(entry["vector"]))
                core_map[(ell, j)] = core.blocks
            ensemble = ensemble_from_cores(
                dictionary, table, patterns, core_map, lam, rho
            )
            return LoadedModel(dictionary, meta, ensemble=ensemble)
        if payload["model_type"] == "trains":
            trains = [
                TensorTrain([_decode_array(core) for core in cores])
                for cores in payload["trains"]
            ]
            return LoadedModel(dictionary, meta, trains=trains)
    except KeyError as exc:
        raise ConfigError(f"model file {path} is missing field {exc}") from exc
    raise ConfigError(
        f"model file {path} has unknown model_type {payload['model_type']!r}"
    )


# -- results tables ---------------------------------------------------------------


def _comment_line(kind, cfg_hash):
    return f"# ttlaw-{kind} schema={SCHEMA_VERSION} config={cfg_hash}\n"


def parse_comment_line(line):
    """Provenance fields of a CSV comment line: ``(kind, schema, hash)``."""
    parts = line.lstrip("#").split()
    if (
        len(parts) != 3
        or not parts[0].startswith("ttlaw-")
        or not parts[1].startswith("schema=")
        or not parts[2].startswith("config=")
    ):
        raise ConfigError(f"malformed provenance line {line.strip()!r}")
    return (
        parts[0][len("ttlaw-") :],
        int(parts[1][len("schema=") :]),
        parts[2][len("config=") :],
    )


def format_result_row(row):
    """One CSV line in :data:`RESULT_COLUMNS` order."""
    cells = []
    for name in RESULT_COLUMNS:
        value = row[name]
        if name in _FLOAT_COLUMNS:
            cells.append(repr(float(value)))
        elif name in _INT_COLUMNS:
            cells.append(str(int(value)))
        else:
            cells.append(str(value))
    return ",".join(cells)


def write_results(path, cfg_hash, rows):
    """Write a results CSV: provenance comment, header, one line per row."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_comment_line("results", cfg_hash))
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for row in rows:
            fh.write(format_result_row(row) + "\n")


def read_results(path):
    """Read a results CSV back as ``(config_hash, rows)`` with typed cells."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2 or not lines[0].startswith("#"):
        raise ConfigError(f"{path} is not a results file")
    kind, schema, cfg_hash = parse_comment_line(lines[0])
    if kind != "results" or schema != SCHEMA_VERSION:
        raise ConfigError(
            f"{path} is a {kind!r} file of schema {schema}, "
            f"expected results of schema {SCHEMA_VERSION}"
        )
    header = tuple(lines[1].split(","))
    if header != RESULT_COLUMNS:
        raise ConfigError(f"{path} has columns {header}, expected {RESULT_COLUMNS}")
    rows = []
    for line in lines[2:]:
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != len(RESULT_COLUMNS):
            raise ConfigError(f"results row {line!r} has {len(cells)} cells")
        row = {}
        for name, cell in zip(RESULT_COLUMNS, cells):
            if name in _INT_COLUMNS:
                row[name] = int(cell)
            elif name in _FLOAT_COLUMNS:
                row[name] = float(cell)
            else:
                row[name] = cell
        rows.append(row)
    return cfg_hash, rows


def history_csv_text(history, cfg_hash):
    """Training-history CSV text with a provenance comment on top."""
    buf = io.StringIO()
    buf.write(_comment_line("history", cfg_hash))
    history.to_csv(buf)
    return buf.getvalue()


def write_history(path, history, cfg_hash):
    """Write a training-history CSV with a provenance comment on top."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(history_csv_text(history, cfg_hash))
