"""End-to-end reconstruction experiments driven by a config file."""

import csv
import json
import logging
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .denoisers import (ConvDenoiser, IdentityDenoiser, SoftThresholdDenoiser,
                        WienerDenoiser)
from .diagnostics import psnr, read_trace_csv, trace_to_csv
from .io import write_image_pgm, write_kspace, read_trajectory_csv, write_trajectory_csv
from .mri import (ForwardModel, add_noise, density_compensated_adjoint,
                  make_cartesian_mask, make_radial_trajectory, make_spiral_trajectory,
                  ramp_density_weights, synth_sensitivity_maps)
from .operators import GramOperator
from .phantom import make_phantom
from .preconditioners import PolynomialPreconditioner, binomial_coeffs, cheb2_coeffs
from .solvers import (DivergenceError, SolveConfig, p2np_dynamic, p2np_fixed, pnp_admm,
                      pnp_ista, step_size)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALL_DIVERGED = 3

SUMMARY_HEADER = ("solver", "status", "iterations", "best_psnr_db", "best_iter",
                  "iters_to_reference", "wall_ms_to_reference", "total_wall_ms", "n_gram")


def gradient_prior_spectrum(shape):
    """Prior power ``1 / |discrete Laplacian symbol|`` with ``inf`` at DC.

    The Wiener filter built on it is the prox of a quadratic finite-difference
    penalty. DC passes unchanged, which makes the filter
    normalization-equivariant.
    """
    fx = np.fft.fftfreq(shape[0])[:, None]
    fy = np.fft.fftfreq(shape[1])[None, :]
    lap = 4 * np.sin(np.pi * fx) ** 2 + 4 * np.sin(np.pi * fy) ** 2
    with np.errstate(divide="ignore"):
        return 1.0 / lap


def build_trajectory(cfg: ExperimentConfig):
    kind = cfg["trajectory.kind"]
    n = cfg["phantom.size"]
    if kind == "radial":
        return make_radial_trajectory(cfg["trajectory.spokes"], cfg["trajectory.readout"],
                                      cfg["trajectory.golden_angle"])
    if kind == "spiral":
        return make_spiral_trajectory(cfg["trajectory.interleaves"], cfg["trajectory.readout"],
                                      grid_size=n)
    if kind == "cartesian-mask":
        return make_cartesian_mask(n, n, cfg["trajectory.accel"], cfg["trajectory.center_fraction"],
                                   seed=cfg["trajectory.seed"])
    path = Path(cfg["trajectory.path"])
    if not path.is_absolute():
        path = cfg.base_dir / path
    return read_trajectory_csv(path, grid_shape=(n, n))


def solver_sigma(cfg: ExperimentConfig, solver, alpha):
    """Denoiser strength for ``solver``.

    A per-solver ``sigma`` wins. Otherwise ``denoiser.sigma`` is used as is,
    or ``denoiser.strength = lam`` is turned into the noise level of the prox
    of ``lam * phi``: ``sqrt(lam * alpha)`` after a gradient step of size
    ``alpha``, ``sqrt(lam)`` for ADMM's unit penalty.
    """
    override = cfg.solver_setting(solver, "sigma")
    if override is not None:
        return float(override)
    if cfg["denoiser.sigma"] is not None:
        return float(cfg["denoiser.sigma"])
    lam = cfg["denoiser.strength"]
    if lam is None:
        return None
    return math.sqrt(lam) if solver == "pnp-admm" else math.sqrt(lam * alpha)


def build_denoiser(cfg: ExperimentConfig, shape, sigma):
    kind = cfg["denoiser.kind"]
    if kind == "wiener-gradient":
        return WienerDenoiser(gradient_prior_spectrum(shape), sigma)
    if kind == "conv":
        return ConvDenoiser(cfg["denoiser.width"], shape)
    if kind == "identity":
        return IdentityDenoiser()
    return SoftThresholdDenoiser(cfg["denoiser.threshold"])


def _solve_config(cfg: ExperimentConfig, solver, sigma):
    return SolveConfig(
        max_iters=cfg.solver_setting(solver, "max_iters", cfg["solvers.max_iters"]),
        alpha=cfg["solvers.alpha"], sigma=sigma, cg_tol=cfg["solvers.cg_tol"],
        cg_max_iter=cfg["solvers.cg_max_iter"], delta=cfg["solvers.delta"],
        theta1=cfg["solvers.theta1"], theta2=cfg["solvers.theta2"],
        e_tol=cfg.solver_setting(solver, "e_tol", cfg["solvers.e_tol"]), seed=cfg["solvers.seed"])


def run_solver(cfg: ExperimentConfig, solver, model, y, x_true, alpha):
    sigma = solver_sigma(cfg, solver, alpha)
    d = build_denoiser(cfg, model.grid_shape, sigma)
    scfg = _solve_config(cfg, solver, sigma)
    if solver == "pnp-ista":
        return pnp_ista(model, y, d, scfg, x_true)
    if solver == "pnp-admm":
        return pnp_admm(model, y, d, scfg, x_true)
    if solver == "p2np-d":
        return p2np_dynamic(model, y, d, scfg, x_true)
    if solver == "p2np-f-binomial":
        coeffs = binomial_coeffs(cfg.solver_setting(solver, "gamma", 2))
    elif solver == "p2np-f-custom":
        coeffs = cfg.solver_setting(solver, "coeffs")
    else:
        coeffs = cheb2_coeffs()
    P = PolynomialPreconditioner(coeffs, alpha, GramOperator(model))
    return p2np_fixed(model, y, d, P, scfg, x_true, name=solver)


def first_reaching(psnr_values, threshold):
    """1-based index of the first value ``>= threshold``, or ``None``."""
    hits = np.nonzero(np.asarray(psnr_values) >= threshold)[0]
    return int(hits[0]) + 1 if hits.size else None


def summarize_traces(traces: Dict[str, dict], reference):
    """Summary rows from parsed trace CSVs (see :func:`read_trace_csv`).

    The benchmark is the best PSNR of the ``reference`` trace; each solver's
    row records the first iteration reaching it and the elapsed wall time then.
    """
    ref = traces.get(reference)
    ref_psnr = float(np.max(ref["psnr_db"])) if ref is not None and len(ref["psnr_db"]) else math.nan
    rows = []
    for name, tr in traces.items():
        p = tr["psnr_db"]
        n = len(p)
        hit = first_reaching(p, ref_psnr) if n and not math.isnan(ref_psnr) else None
        rows.append({
            "solver": name,
            "iterations": n,
            "best_psnr_db": float(np.max(p)) if n else math.nan,
            "best_iter": int(np.argmax(p)) + 1 if n else 0,
            "iters_to_reference": hit,
            "wall_ms_to_reference": float(tr["wall_ms"][hit - 1]) if hit else math.nan,
            "total_wall_ms": float(tr["wall_ms"][-1]) if n else 0.0,
        })
    return ref_psnr, rows


def _json_num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ExperimentResult:
    exit_code: int
    output_dir: Path
    statuses: Dict[str, str] = field(default_factory=dict)
    summary: List[dict] = field(default_factory=list)
    reference_psnr: float = math.nan
    dc_psnr: float = math.nan


def _validate_combinations(cfg: ExperimentConfig):
    if "p2np-d" in cfg.solvers and cfg["denoiser.kind"] == "soft-threshold":
        raise ConfigError("p2np-d needs a normalization-equivariant denoiser; "
                          "soft-threshold is not", cfg.source)


def run_experiment(config) -> ExperimentResult:
    """Run every configured solver and write traces, images, summary and manifest.

    ``config`` is a path or an :class:`ExperimentConfig`. Configuration
    problems raise :class:`ConfigError`. A diverging solver is recorded with
    status ``diverged`` (its partial trace is still written) and the rest
    continue; the exit code is 3 only when every solver diverged.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    _validate_combinations(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    n = cfg["phantom.size"]
    x_true = make_phantom(n, cfg["phantom.kind"], cfg["phantom.phase"], cfg["phantom.seed"])
    traj = build_trajectory(cfg)
    model = ForwardModel(traj, synth_sensitivity_maps(cfg["coils.count"], n, n), shape=(n, n))
    y = add_noise(model.forward(x_true), cfg["noise.variance"], cfg["noise.seed"])
    alpha = cfg["solvers.alpha"] or step_size(model, seed=cfg["solvers.seed"])
    write_kspace(out / "kspace.p2np", y, (n, n), model.n_coils, traj.kind)
    write_trajectory_csv(out / "trajectory.csv", traj)

    images = cfg["experiment.images"]
    walltime = cfg["experiment.walltime"]
    if images:
        write_image_pgm(x_true, out / "truth.pgm")

    if traj.kind == "cartesian-mask":
        dc = model.backward(y)
    else:
        dc = density_compensated_adjoint(model, y, ramp_density_weights(traj))
    dc_psnr = psnr(dc, x_true)
    if images:
        write_image_pgm(dc, out / "dc.pgm")
        write_image_pgm(dc - x_true, out / "dc_error5.pgm", mode="error5")

    statuses, gram_counts = {}, {}
    for name in cfg.solvers:
        log.info("running %s", name)
        try:
            trace = run_solver(cfg, name, model, y, x_true, alpha)
            statuses[name] = "ok"
        except DivergenceError as exc:
            log.warning("%s", exc)
            trace = exc.trace
            statuses[name] = "diverged"
        trace_to_csv(trace, out / f"{name}.csv", walltime=walltime)
        gram_counts[name] = trace.n_gram_total
        final = trace.x_final
        if final is None and trace.iterates:
            final = trace.iterates[-1]
        if images and final is not None:
            img = np.asarray(final).reshape(n, n)
            write_image_pgm(img, out / f"{name}.pgm")
            write_image_pgm(img - x_true, out / f"{name}_error5.pgm", mode="error5")

    traces = {name: read_trace_csv(out / f"{name}.csv") for name in cfg.solvers}
    ref_psnr, rows = summarize_traces(traces, cfg["experiment.reference"])
    for row in rows:
        row["status"] = statuses[row["solver"]]
        row["n_gram"] = gram_counts[row["solver"]]
    rows.append({"solver": "dc", "status": "ok", "iterations": 0, "best_psnr_db": dc_psnr,
                 "best_iter": 0, "iters_to_reference": None, "wall_ms_to_reference": math.nan,
                 "total_wall_ms": 0.0, "n_gram": 0})
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in SUMMARY_HEADER])

    manifest = {
        "name": cfg["experiment.name"],
        "config_path": cfg.source,
        "config_sha256": cfg.sha256,
        "seeds": cfg.seeds(),
        "version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "alpha": alpha,
        "reference_solver": cfg["experiment.reference"],
        "reference_psnr_db": _json_num(ref_psnr),
        "dc_psnr_db": _json_num(dc_psnr),
        "solvers": statuses,
        "traces": {name: f"{name}.csv" for name in cfg.solvers},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, allow_nan=False) + "\n")

    code = EXIT_ALL_DIVERGED if all(s == "diverged" for s in statuses.values()) else EXIT_OK
    return ExperimentResult(code, out, statuses, rows, ref_psnr, dc_psnr)
