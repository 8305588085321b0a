"""On-disk formats: flat binary arrays with JSON sidecars, locale-independent
CSV, canonical config hashing, and run manifests.

Every array file is little-endian float64, C order, with a ``.json`` sidecar
recording the shape and provenance.  CSV output uses 17 significant digits,
'.' as the decimal separator, and LF line endings, so files are byte-identical
across platforms and worker counts.
"""

from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import dataclass, field as dc_field, asdict
from pathlib import Path

import numpy as np

from .lattice import LatticeBox, build_box

_FORMAT_VERSION = 1


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def write_array(path, values: np.ndarray, meta: dict | None = None) -> Path:
    """Array as flat little-endian float64 plus a JSON sidecar."""
    path = Path(path)
    arr = np.ascontiguousarray(values, dtype="<f8")
    path.write_bytes(arr.tobytes())
    sidecar = {
        "format_version": _FORMAT_VERSION,
        "dtype": "<f8",
        "order": "C",
        "shape": list(arr.shape),
        **(meta or {}),
    }
    _sidecar_path(path).write_text(canonical_json(sidecar) + "\n")
    return path


def read_array(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(_sidecar_path(path).read_text())
    if meta.get("dtype") != "<f8":
        raise ValueError(f"unsupported dtype {meta.get('dtype')!r}")
    arr = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(meta["shape"])
    return arr.copy(), meta


def write_field(path, field) -> Path:
    """Scalar field or passage weights with box geometry in the sidecar."""
    box = field.box
    meta = {
        "kind": type(field).__name__,
        "box": {"d": box.d, "sides": list(box.sides), "offset": list(box.offset)},
        "provenance": _jsonable(getattr(field, "provenance", {})),
    }
    if hasattr(field, "mode"):
        meta["mode"] = field.mode
    return write_array(path, field.values, meta)


def read_field(path):
    from .environments import PassageWeights, ScalarField

    values, meta = read_array(path)
    b = meta["box"]
    box = build_box(b["d"], b["sides"], b["offset"])
    if meta.get("kind") == "PassageWeights":
        return PassageWeights(box=box, values=values, mode=meta["mode"])
    return ScalarField(box=box, values=values, provenance=meta.get("provenance", {}))


def format_float(x: float) -> str:
    """17-significant-digit repr; round-trips every float64 exactly."""
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> Path:
    """CSV with LF endings and locale-independent float formatting."""
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(format_float(v))
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, minimal separators, no NaN literals."""
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if x != x or x in (float("inf"), float("-inf")):
            return repr(x)
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def config_hash(config: dict) -> str:
    """sha256 of the canonical JSON form; stable under key reordering."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


@dataclass
class RunManifest:
    experiment: str
    config: dict
    seed: int
    outputs: list = dc_field(default_factory=list)
    notes: dict = dc_field(default_factory=dict)

    def write(self, path) -> Path:
        from . import __version__

        path = Path(path)
        payload = {
            "experiment": self.experiment,
            "config": _jsonable(self.config),
            "config_hash": config_hash(self.config),
            "seed": self.seed,
            "outputs": [str(o) for o in self.outputs],
            "notes": _jsonable(self.notes),
            "package_version": __version__,
            "numpy_version": np.__version__,
            "python_version": platform.python_version(),
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path
