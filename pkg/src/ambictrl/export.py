"""
Instance loading and artifact writers.

Curves and paths are written as CSV, configurations and summaries as JSON.
Floats are written with their shortest round-trip repr so that artifacts are
byte-identical across runs.
"""

import csv
import hashlib
import json
import logging
import math
from importlib.resources import files
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ambictrl.hjb import ValueSolution
from ambictrl.model import InstanceValidationError, MultiClassInstance
from ambictrl.simulate import LiftedPath, SimPath

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_INSTANCE = "three_class.json"


def default_instance_bytes() -> bytes:
    """Raw bytes of the instance file shipped with the package."""
    return (files("ambictrl") / "data" / DEFAULT_INSTANCE).read_bytes()


def instance_digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def load_instance(path: Optional[PathLike] = None, renormalize: bool = False) -> Tuple[MultiClassInstance, str]:
    """
    Load an instance file.

    Args:
        path: JSON instance file; None loads the shipped default instance
        renormalize: Rescale lambda to exact critical load

    Returns:
        The instance and the sha256 of the file contents

    Raises:
        InstanceValidationError: If the file is missing, not JSON, or invalid
    """
    try:
        raw = default_instance_bytes() if path is None else Path(path).read_bytes()
    except OSError as e:
        raise InstanceValidationError(f"cannot read instance file {path}: {e}", "instance") from e
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise InstanceValidationError(f"instance file {path} is not valid JSON: {e}", "instance") from e
    if not isinstance(data, dict):
        raise InstanceValidationError("instance file must hold a JSON object", "instance")
    inst = MultiClassInstance.from_mapping(data, renormalize=renormalize)
    logger.debug(f"Loaded {inst.class_count}-class instance from {path or DEFAULT_INSTANCE}")
    return inst, instance_digest(raw)


def jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats (to None) recursively."""
    if isinstance(value, Mapping):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path: PathLike, payload: Mapping[str, Any]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as handle:
        json.dump(jsonable(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return out


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return repr(value) if math.isfinite(value) else ""
    return value


def write_csv(path: PathLike, fieldnames: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(v) for k, v in row.items()})
    return out


def _columns(path: PathLike, columns: Dict[str, np.ndarray]) -> Path:
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    return write_csv(path, names, (dict(zip(names, values)) for values in zip(*arrays)))


def write_value_csv(path: PathLike, sol: ValueSolution) -> Path:
    """Columns x, V, V_prime, V_second on the solver grid."""
    return _columns(path, {"x": sol.grid, "V": sol.V, "V_prime": sol.V_prime, "V_second": sol.V_second})


def write_path_csv(path: PathLike, sim: SimPath) -> Path:
    """Columns t, X, Y, R, B, psi."""
    return _columns(path, {"t": sim.t, "X": sim.X, "Y": sim.Y, "R": sim.R, "B": sim.B, "psi": sim.psi})


def write_lifted_csv(path: PathLike, lifted: LiftedPath) -> Path:
    """Column t followed by X_hat_i, Y_hat_i, R_hat_i and psi_hat_i for every class."""
    columns: Dict[str, np.ndarray] = {"t": lifted.t}
    for name, block in (("X_hat", lifted.X_hat), ("Y_hat", lifted.Y_hat), ("R_hat", lifted.R_hat), ("psi_hat", lifted.psi_hat)):
        for i in range(block.shape[1]):
            columns[f"{name}_{i}"] = block[:, i]
    return _columns(path, columns)


def write_sweep_csv(path: PathLike, rows: Sequence[Mapping[str, Any]]) -> Path:
    """One row per eps: eps, s_star, beta, beta_hat, sup_diff, margin, slack."""
    return write_csv(path, ["eps", "s_star", "beta", "beta_hat", "sup_diff", "margin", "slack"], rows)
