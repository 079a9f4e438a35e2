"""Experiment configuration: flat dotted-key TOML with validation.

Every key is ``section.name = value`` (TOML tables are accepted too and are
flattened the same way). Unknown keys, wrong types and out-of-range values
raise :class:`ConfigError` carrying the file name and line number.
"""

import hashlib
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SOLVER_NAMES = ("pnp-ista", "pnp-admm", "p2np-f-binomial", "p2np-f-cheb", "p2np-f-custom",
                "p2np-d")
DENOISER_KINDS = ("wiener-gradient", "conv", "identity", "soft-threshold")
TRAJECTORY_CHOICES = ("radial", "spiral", "cartesian-mask", "file")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``line`` is 1-based or ``None``."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


_NUM = (int, float)

# key -> (accepted types, default); ``None`` default means optional
_GLOBAL_KEYS = {
    "experiment.name": (str, "experiment"),
    "experiment.output_dir": (str, "p2np-run"),
    "experiment.reference": (str, "pnp-admm"),
    "experiment.walltime": (bool, True),
    "experiment.images": (bool, True),
    "phantom.size": (int, 64),
    "phantom.kind": (str, "shepp-logan"),
    "phantom.phase": (str, "none"),
    "phantom.seed": (int, 0),
    "trajectory.kind": (str, "radial"),
    "trajectory.spokes": (int, 21),
    "trajectory.readout": (int, 128),
    "trajectory.golden_angle": (bool, True),
    "trajectory.interleaves": (int, 6),
    "trajectory.accel": (_NUM, 4.0),
    "trajectory.center_fraction": (_NUM, 0.08),
    "trajectory.seed": (int, 0),
    "trajectory.path": (str, None),
    "coils.count": (int, 4),
    "noise.variance": (_NUM, 3e-4),
    "noise.seed": (int, 1),
    "denoiser.kind": (str, "wiener-gradient"),
    "denoiser.strength": (_NUM, None),
    "denoiser.sigma": (_NUM, None),
    "denoiser.width": (_NUM, 0.7),
    "denoiser.threshold": (_NUM, 0.0),
    "solvers.names": (list, ["pnp-ista", "pnp-admm", "p2np-f-binomial", "p2np-f-cheb", "p2np-d"]),
    "solvers.max_iters": (int, 100),
    "solvers.alpha": (_NUM, None),
    "solvers.cg_tol": (_NUM, 1e-10),
    "solvers.cg_max_iter": (int, 200),
    "solvers.delta": (_NUM, 1e-8),
    "solvers.theta1": (_NUM, 2e-6),
    "solvers.theta2": (_NUM, 200.0),
    "solvers.e_tol": (_NUM, None),
    "solvers.seed": (int, 0),
}

# per-solver overrides: solver.<name>.<key>
_SOLVER_KEYS = {
    "max_iters": int,
    "sigma": _NUM,
    "gamma": int,
    "e_tol": _NUM,
    "coeffs": (list, str),
}


def parse_coeffs(value):
    """Polynomial coefficients from a list of numbers or a comma-separated string."""
    items = value.split(",") if isinstance(value, str) else value
    out = []
    for item in items:
        if isinstance(item, bool):
            raise ValueError("booleans are not coefficients")
        out.append(float(item))
    if not out or not all(math.isfinite(c) for c in out):
        raise ValueError("need at least one finite coefficient")
    return out


@dataclass
class ExperimentConfig:
    """Validated settings; ``values`` maps dotted keys to values with defaults filled in."""

    values: Dict[str, Any]
    solver_overrides: Dict[str, Dict[str, Any]]
    source: Optional[str] = None
    sha256: str = ""
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def solvers(self) -> List[str]:
        return list(self.values["solvers.names"])

    @property
    def output_dir(self) -> Path:
        out = Path(self.values["experiment.output_dir"])
        return out if out.is_absolute() else (self.base_dir / out).resolve()

    def seeds(self):
        return {"phantom": self["phantom.seed"], "trajectory": self["trajectory.seed"],
                "noise": self["noise.seed"], "power_method": self["solvers.seed"]}

    def solver_setting(self, solver, key, default=None):
        return self.solver_overrides.get(solver, {}).get(key, default)


def _flatten(tree, prefix=""):
    out = {}
    for k, v in tree.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, name + "."))
        else:
            out[name] = v
    return out


def _key_lines(text):
    """Best-effort map from dotted key to the line defining it."""
    lines = {}
    table = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", line)
        if m:
            table = m.group(1).replace(" ", "").replace('"', "") + "."
            continue
        m = re.match(r"^([A-Za-z0-9_.\-\" ]+?)\s*=", line)
        if m:
            key = m.group(1).replace(" ", "").replace('"', "")
            lines.setdefault(table + key, lineno)
    return lines


def _type_ok(value, types):
    if types is bool:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    return isinstance(value, types)


def parse_config(text, source=None, base_dir=None):
    """Parse and validate configuration text."""
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", source, int(m.group(1)) if m else None) from None
    flat = _flatten(tree)
    where = _key_lines(text)

    def fail(msg, key):
        raise ConfigError(msg, source, where.get(key))

    values = {k: v for k, (_, v) in _GLOBAL_KEYS.items()}
    overrides: Dict[str, Dict[str, Any]] = {}
    for key, value in flat.items():
        if key.startswith("solver."):
            parts = key.split(".")
            if len(parts) != 3 or parts[1] not in SOLVER_NAMES or parts[2] not in _SOLVER_KEYS:
                fail(f"unknown per-solver key {key!r}", key)
            if not _type_ok(value, _SOLVER_KEYS[parts[2]]):
                fail(f"{key} has the wrong type ({type(value).__name__})", key)
            if parts[2] == "coeffs":
                try:
                    value = parse_coeffs(value)
                except ValueError as exc:
                    fail(f"{key}: {exc}", key)
            overrides.setdefault(parts[1], {})[parts[2]] = value
            continue
        if key not in _GLOBAL_KEYS:
            fail(f"unknown key {key!r}", key)
        types = _GLOBAL_KEYS[key][0]
        if not _type_ok(value, types):
            fail(f"{key} has the wrong type ({type(value).__name__})", key)
        values[key] = float(value) if types is _NUM else value

    def check(key, ok, msg):
        if not ok:
            fail(f"{key}: {msg}", key)

    check("phantom.size", values["phantom.size"] >= 8, "must be >= 8")
    check("phantom.kind", values["phantom.kind"] in ("shepp-logan", "blobs"),
          "must be shepp-logan or blobs")
    check("phantom.phase", values["phantom.phase"] in ("none", "smooth"), "must be none or smooth")
    check("trajectory.kind", values["trajectory.kind"] in TRAJECTORY_CHOICES,
          f"must be one of {', '.join(TRAJECTORY_CHOICES)}")
    if values["trajectory.kind"] == "file":
        check("trajectory.kind", values["trajectory.path"] is not None,
              "kind 'file' needs trajectory.path")
    for key in ("trajectory.spokes", "trajectory.readout", "trajectory.interleaves",
                "coils.count", "solvers.max_iters", "solvers.cg_max_iter"):
        check(key, values[key] >= 1, "must be >= 1")
    check("trajectory.accel", values["trajectory.accel"] >= 1, "must be >= 1")
    check("noise.variance", values["noise.variance"] >= 0, "must be >= 0")
    check("denoiser.kind", values["denoiser.kind"] in DENOISER_KINDS,
          f"must be one of {', '.join(DENOISER_KINDS)}")
    if values["denoiser.kind"] == "wiener-gradient":
        check("denoiser.kind",
              (values["denoiser.strength"] is None) != (values["denoiser.sigma"] is None),
              "wiener-gradient needs exactly one of denoiser.strength or denoiser.sigma")
    for key in ("denoiser.strength", "denoiser.sigma", "denoiser.threshold"):
        if values[key] is not None:
            check(key, values[key] >= 0 and math.isfinite(values[key]), "must be finite and >= 0")
    check("denoiser.width", values["denoiser.width"] > 0, "must be > 0")
    if values["solvers.alpha"] is not None:
        check("solvers.alpha", values["solvers.alpha"] > 0, "must be > 0")
    names = values["solvers.names"]
    check("solvers.names", len(names) > 0 and all(isinstance(n, str) for n in names),
          "must be a nonempty list of solver names")
    for n in names:
        check("solvers.names", n in SOLVER_NAMES, f"unknown solver {n!r}")
    check("solvers.names", len(set(names)) == len(names), "duplicate solver names")
    check("experiment.reference", values["experiment.reference"] in names,
          "reference solver must be listed in solvers.names")
    if "p2np-f-custom" in names and "coeffs" not in overrides.get("p2np-f-custom", {}):
        check("solvers.names", False, "p2np-f-custom needs solver.p2np-f-custom.coeffs")
    for name, opts in overrides.items():
        if "gamma" in opts:
            check(f"solver.{name}.gamma", opts["gamma"] >= 1, "must be >= 1")
        if "max_iters" in opts:
            check(f"solver.{name}.max_iters", opts["max_iters"] >= 1, "must be >= 1")

    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return ExperimentConfig(values, overrides, source, digest,
                            Path(base_dir) if base_dir is not None else Path.cwd())


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path), path.resolve().parent)
