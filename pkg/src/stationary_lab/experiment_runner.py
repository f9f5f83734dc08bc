"""Experiment runner: binds a subcommand to the lab modules and writes one run directory"""

import json
import logging
import math
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .. import __version__
from ..config import LabSettings, params_dict, resolve_params
from ..models import OrbitReport
from .cartan import (check_growth_contraction, density_convergence, growth_lower_bound, lyapunov_estimate,
                     lyapunov_spectrum)
from .core_model import (REFERENCE_MODEL_NAME, StateXT, TorusPoint, WalkConfig, Word, walk_config_from_mapping,
                         word_product)
from .empirical import (EmpiricalMeasure, atom_detect, marginal_table, pushforward_convergence, trajectory_measure,
                        weyl_table)
from .exceptions import ConfigError, GapError, PreconditionError
from .fiber_lab import BasePoint, WindowSpec, drift_demo, fiber_equidistribution, law_of_angles
from .llt_lab import LatticeDist, joint_llt_estimate, llt_1d_check, period_detect, return_time_dp
from .orbits import block_orbit_components, rational_orbit, stationarity_residual
from .result_writer import ResultWriter
from .utils import replica_rng, stream_rng
from .walk_sim import (Certificate, conservativity_check, drift_certify, heavy_tail_diagnostic, return_tail,
                       search_drift_certificate, simulate)

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[str, int, str, Optional[Dict]], None]

PUSHFORWARD_STREAM = 0x505553


def parse_point(text: str, dim: int) -> TorusPoint:
    """
    "1/4,0" gives an exact point; any decimal coordinate makes the point float.
    """
    tokens = [t.strip() for t in str(text).split(",")]
    if len(tokens) != dim:
        raise ConfigError(f"Point {text!r} has {len(tokens)} coordinates, model has d={dim}")
    try:
        if any("." in t or "e" in t.lower() for t in tokens):
            return TorusPoint.from_floats([float(t) for t in tokens])
        return TorusPoint(tuple(Fraction(t) for t in tokens), exact=True)
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError(f"Cannot parse point {text!r}: {e}") from e


def window_from_params(U: Sequence[float], I: Sequence[float], dim: int) -> WindowSpec:
    """U is a flat (lo, hi, lo, hi, ...) list for the first d - 1 a-coordinates."""
    if len(U) != 2 * (dim - 1):
        raise ConfigError(f"Window U needs {2 * (dim - 1)} numbers for d={dim}, got {list(U)}")
    return WindowSpec(tuple((U[2 * i], U[2 * i + 1]) for i in range(dim - 1)), tuple(I))


def load_model_document(config: Union[str, Path]) -> Dict[str, Any]:
    """The raw config mapping; the reference model name maps to {"model": "ref-sl2"}."""
    if str(config) == REFERENCE_MODEL_NAME:
        return {"model": REFERENCE_MODEL_NAME}
    path = Path(config)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must contain a JSON object")
    return data


class ExperimentRunner:
    """Run one subcommand on a walk model and emit its run directory"""

    SUBCOMMANDS = ("simulate", "orbit", "lyapunov", "cartan-check", "tail", "certify",
                   "llt1d", "jointllt", "angles", "drift", "equidist", "weyl")

    def __init__(self, cfg: WalkConfig, subcommand: str, params, seed: int,
                 output_root: Union[str, Path], workers: Optional[int] = None,
                 progress_callback: Optional[ProgressCallback] = None):
        """
        Initialize runner.

        Args:
            cfg: Walk configuration
            subcommand: One of SUBCOMMANDS
            params: Resolved parameter dataclass for the subcommand
            seed: Experiment seed
            output_root: Parent directory of run directories
            workers: Parallelism degree (results do not depend on it)
            progress_callback: Optional callback(step, progress, message, stats)
        """
        if subcommand not in self.SUBCOMMANDS:
            raise ConfigError(f"Unknown subcommand {subcommand!r}")
        self.cfg = cfg
        self.subcommand = subcommand
        self.params = params
        self.seed = seed
        self.output_root = Path(output_root)
        self.workers = workers
        self.progress_callback = progress_callback
        self.stats: Dict[str, Any] = {}
        self.writer = ResultWriter(self.output_root, subcommand, cfg.to_dict(), params_dict(params), seed)

        logger.info("Initialized ExperimentRunner")
        logger.info(f"  Subcommand: {subcommand}")
        logger.info(f"  Model: {cfg.name} (d={cfg.dim}, {cfg.n_generators} generators)")
        logger.info(f"  Seed: {seed}, workers: {workers}")

    def run(self) -> Path:
        """
        Execute the experiment and write its run directory.

        Returns:
            Path of the run directory
        """
        started = time.perf_counter()
        try:
            logger.info(f"[Step 1] Running {self.subcommand}...")
            self._progress("running", 10, f"Running {self.subcommand}...")
            handler = getattr(self, "_run_" + self.subcommand.replace("-", "_"))
            handler()

            logger.info("[Step 2] Writing results...")
            self._progress("writing", 90, "Writing results...")
            run_dir = self.writer.commit(__version__, time.perf_counter() - started)

            logger.info(f"{self.subcommand} complete: {run_dir}")
            self._progress("complete", 100, f"{self.subcommand} complete", self.stats)
            return run_dir
        except Exception as e:
            logger.error(f"{self.subcommand} failed: {e}")
            raise

    def _progress(self, step: str, progress: int, message: str, stats: Optional[Dict] = None) -> None:
        """Call progress callback if available"""
        if self.progress_callback:
            try:
                self.progress_callback(step, progress, message, stats)
            except Exception as e:
                logger.warning(f"Progress callback error: {e}")

    def _record(self, key: str, value: Any, line: Optional[str] = None) -> None:
        self.stats[key] = value
        self.writer.metadata[key] = value
        if line:
            self.writer.add_summary(line)

    def _run_simulate(self) -> None:
        p = self.params
        start = StateXT(parse_point(p.start, self.cfg.dim), p.t0)
        trajectory = simulate(self.cfg, start, p.n, self.seed)
        self.writer.add_table("trajectory", trajectory.to_frame())
        t = trajectory.times()
        ratio = float(np.max(np.abs(t - p.t0)) / math.sqrt(p.n)) if p.n else 0.0
        self._record("max_abs_t_over_sqrt_n", ratio, f"max |t - t0| / sqrt(n) = {ratio:.4f}")
        if start.x.exact:
            distinct = len({s.x for s in trajectory.states})
            self._record("distinct_torus_points", distinct, f"Distinct torus points visited: {distinct}")

    def _run_orbit(self) -> None:
        p = self.params
        x = parse_point(p.x, self.cfg.dim)
        if not x.exact:
            raise PreconditionError("orbit needs an exact rational start point")
        orbit = rational_orbit(x, self.cfg)
        components = block_orbit_components(x, self.cfg, p.modulus) if self.cfg.integer_chi else []
        residual = stationarity_residual(orbit, self.cfg)
        report = OrbitReport(
            start=x.pairs(),
            denominator=x.denominator,
            size=len(orbit),
            points=[y.pairs() for y in orbit],
            modulus=p.modulus,
            components=[[(y.pairs(), k) for y, k in sorted(c, key=lambda v: (v[0].coords, v[1]))]
                        for c in components],
            stationarity_residual=str(residual),
        )
        self.writer.add_json("orbit", report)
        self._record("orbit_size", len(orbit), f"Orbit of {p.x}: {len(orbit)} points, residual {residual}")
        self._record("components", len(components), f"Block components mod {p.modulus}: {len(components)}")

    def _run_lyapunov(self) -> None:
        p = self.params
        first = lyapunov_estimate(self.cfg, p.n, p.N, self.seed)
        second = lyapunov_estimate(self.cfg, p.n, p.N, self.seed + 1)
        table = pd.concat([first.to_frame(), second.to_frame()], ignore_index=True)
        table.insert(0, "seed", [self.seed, self.seed + 1])
        self.writer.add_table("lyapunov", table)
        gap = abs(first.lambda_hat - second.lambda_hat)
        width = max(first.ci_width, second.ci_width)
        self._record("lambda_hat", first.lambda_hat,
                     f"lambda_hat = {first.lambda_hat:.6f} [{first.ci_lo:.6f}, {first.ci_hi:.6f}]")
        self._record("seed_agreement_widths", gap / width if width > 0 else float("inf"),
                     f"Seeds {self.seed} and {self.seed + 1} differ by {gap:.6f} ({gap / width if width else 0:.2f} CI widths)")

        spectrum = lyapunov_spectrum(self.cfg, p.n, p.N, self.seed)
        self.writer.add_table("spectrum", pd.DataFrame({
            "index": np.arange(1, self.cfg.dim + 1),
            "exponent": spectrum.exponents,
            "ci_lo": spectrum.ci_lo,
            "ci_hi": spectrum.ci_hi,
        }))
        self._progress("running", 50, "Density point convergence...")
        density = density_convergence(self.cfg, p.density_n_list, p.density_N, self.seed)
        self.writer.add_table("density", density.table)
        self._record("density_rate", density.rate, f"Density point convergence rate = {density.rate:.4f}")
        horizon = max(p.density_n_list) * 5
        fraction = growth_lower_bound(self.cfg, min(p.density_n_list), horizon, p.density_N, self.seed,
                                      first.lambda_hat)
        self._record("growth_lower_bound_fraction", fraction,
                     f"Fraction with ||b_n...b_1|| >= e^(n lambda/2) on [{min(p.density_n_list)}, {horizon}]: {fraction:.4f}")

    def _run_cartan_check(self) -> None:
        p = self.params
        rows = []
        skipped = 0
        for i in range(p.samples):
            rng = replica_rng(self.seed, i)
            length = int(rng.integers(1, p.max_length + 1))
            g = word_product(Word(tuple(self.cfg.sample_letters(rng, length))), self.cfg)
            v = rng.standard_normal(self.cfg.dim)
            try:
                report = check_growth_contraction(g, v / np.linalg.norm(v))
            except GapError:
                skipped += 1
                continue
            rows.append({"sample": i, "length": length, "norm_gv": report.norm_gv,
                         "lower_bound": report.lower_bound, "upper_bound": report.upper_bound,
                         "contraction_distance": report.contraction_distance,
                         "contraction_bound": report.contraction_bound, "ok": report.ok})
        table = pd.DataFrame(rows)
        self.writer.add_table("growth_contraction", table)
        violations = int((~table["ok"]).sum()) if len(table) else 0
        self._record("violations", violations, f"Growth/contraction violations: {violations} of {len(table)}")
        self._record("skipped_without_gap", skipped, f"Skipped (no singular gap): {skipped}")

    def _run_tail(self) -> None:
        p = self.params
        tail = return_tail(self.cfg, p.kmax, p.N, self.seed, window=tuple(p.window), workers=self.workers)
        self.writer.add_table("return_tail", tail.table)
        self._record("tail_slope", tail.slope, f"log-log slope of P(tau >= k) over {tail.window}: {tail.slope:.4f}")
        self._record("censored", tail.censored, f"Censored excursions: {tail.censored}")

        exact = return_time_dp(LatticeDist.from_config(self.cfg), p.oracle_kmax)
        survival = [Fraction(1)]
        for mass in exact[:-1]:
            survival.append(survival[-1] - mass)
        oracle = tail.table[tail.table["k"] <= p.oracle_kmax].copy()
        oracle["exact"] = [float(survival[k - 1]) for k in oracle["k"]]
        width = oracle["ci_hi"] - oracle["ci_lo"]
        oracle["within_3ci"] = (oracle["p_hat"] - oracle["exact"]).abs() <= 3 * width
        self.writer.add_table("return_oracle", oracle)
        self._record("oracle_agreement", bool(oracle["within_3ci"].all()),
                     f"Monte Carlo within 3 CI widths of the exact law for k <= {p.oracle_kmax}: "
                     f"{bool(oracle['within_3ci'].all())}")

        if p.heavy_tail:
            self._progress("running", 60, "Heavy-tail diagnostic...")
            heavy = heavy_tail_diagnostic(self.cfg, p.heavy_N_list, self.seed, cap=p.cap, workers=self.workers)
            self.writer.add_table("heavy_tail", heavy.table)
            self._record("tail_exponent", heavy.tail_exponent,
                         f"Tail exponent of log||b_1...b_tau||: {heavy.tail_exponent:.4f}")

        if p.conservativity and p.horizons:
            self._progress("running", 80, "Conservativity check...")
            start = StateXT(parse_point(p.start, self.cfg.dim), 0.0)
            returns = conservativity_check(self.cfg, start, p.return_radius, p.horizons, p.conservativity_N,
                                           self.seed, workers=self.workers)
            self.writer.add_table("conservativity", returns)
            fraction = float(returns["fraction"].iloc[-1])
            self._record("return_fraction", fraction,
                         f"Fraction back within {p.return_radius} of the start by n={max(p.horizons)}: {fraction:.4f}")

    def _run_certify(self) -> None:
        p = self.params
        if p.k > 0:
            result = drift_certify(self.cfg, p.delta, p.k, p.grid_per_axis, p.N, self.seed, cap=p.cap,
                                   workers=self.workers, confidence=p.confidence)
        else:
            result = search_drift_certificate(self.cfg, p.delta, p.grid_per_axis, p.N, self.seed,
                                              k_max=p.k_max, cap=p.cap, workers=self.workers,
                                              confidence=p.confidence)
        self.writer.add_table("certificate", result.table)
        if isinstance(result, Certificate):
            self.writer.add_json("certificate", {"status": "certificate", "delta": result.delta, "k": result.k,
                                                 "a": result.a, "C": result.C, "confidence": result.confidence})
            self._record("certified", True, f"Certificate: delta={result.delta}, k={result.k}, "
                                            f"a={result.a:.4f}, C={result.C:.4f}")
        else:
            self.writer.add_json("certificate", {"status": "failure", "delta": result.delta, "k": result.k,
                                                 "a": result.a, "reason": result.reason,
                                                 "violators": result.violators.to_dict(orient="records")})
            self._record("certified", False, f"No certificate: {result.reason}")

    def _run_llt1d(self) -> None:
        p = self.params
        dist = LatticeDist.from_config(self.cfg, rational=p.rational)
        table = llt_1d_check(dist, p.n_list)
        self.writer.add_table("llt1d", table)
        if len(table):
            last = table.iloc[-1]
            self._record("rel_err_last", float(last["rel_err"]),
                         f"sqrt(n) P(S_n = 0) at n={int(last['n'])}: rel_err {float(last['rel_err']):.5f}")
        exact = return_time_dp(LatticeDist.from_config(self.cfg, rational=True), p.return_kmax)
        self.writer.add_table("return_time_dp", pd.DataFrame({
            "k": np.arange(1, len(exact) + 1),
            "p_exact": [str(m) for m in exact],
            "p_float": [float(m) for m in exact],
        }))
        self._record("p_tau_1", str(exact[0]), f"P(tau = 1) = {exact[0]}")

    def _run_jointllt(self) -> None:
        p = self.params
        result = joint_llt_estimate(self.cfg, tuple(p.U), tuple(p.I), p.n_list, p.N, self.seed,
                                    lookahead=p.lookahead, workers=self.workers)
        self.writer.add_table("jointllt", result.table)
        scaled = result.table["scaled"]
        spread = float((scaled.max() - scaled.min()) / scaled.mean()) if scaled.mean() > 0 else float("nan")
        self._record("lambda_hat", result.lambda_hat, f"Centering lambda_hat = {result.lambda_hat:.6f}")
        self._record("scaled_spread", spread, f"Relative spread of n p_n: {spread:.4f}")
        if self.cfg.integer_chi:
            self._record("chi_period", period_detect(self.cfg, min(p.N, 1000), max(p.n_list), self.seed))

    def _base_point(self, length: int) -> BasePoint:
        return BasePoint.random(self.cfg, length, self.seed)

    def _window(self) -> WindowSpec:
        W = window_from_params(self.params.U, self.params.I, self.cfg.dim)
        W.validate_for(self.cfg)
        return W

    def _run_angles(self) -> None:
        p = self.params
        c = self._base_point(p.n + p.lookahead)
        result = law_of_angles(self.cfg, c, p.n, self._window(), p.N, self.seed, p.budget, p.lookahead)
        self.writer.add_table("angles", result.table)
        self._record("ks", result.ks, f"Circular KS distance: {result.ks:.4f} ({result.accepted} accepted)")
        self._record("ks_pvalue", result.ks_pvalue)
        self._record("dropped", result.dropped)

    def _run_drift(self) -> None:
        p = self.params
        c = self._base_point(p.n_max + p.lookahead)
        result = drift_demo(self.cfg, c, p.u_norm, p.directions, self._window(), p.eps1, p.eps2, self.seed,
                            N_per_direction=p.N_per_direction, budget=p.budget, n_max=p.n_max,
                            calibration_n=p.calibration_n, lookahead=p.lookahead)
        self.writer.add_table("drift", result.table)
        self._record("C", result.C, f"Calibrated norm constant C = {result.C:.4f}")
        self._record("fraction_in_window", result.fraction_in_window,
                     f"Fraction with |log_ratio| <= log C: {result.fraction_in_window:.4f}")
        self._record("delta_hat", result.delta_hat, f"Fitted direction rate delta_hat = {result.delta_hat:.4f}")
        self._record("aborted", {str(k): v for k, v in result.aborted.items()})

    def _run_equidist(self) -> None:
        p = self.params
        c = self._base_point(max(p.n_list) + p.lookahead)
        result = fiber_equidistribution(self.cfg, c, p.n_list, self._window(), tuple(p.partition), p.N,
                                        self.seed, p.budget, p.lookahead)
        self.writer.add_table("equidist", result.table)
        self._record("l1_diffs", result.l1_diffs, f"Successive L1 differences: {result.l1_diffs}")

    def _run_weyl(self) -> None:
        p = self.params
        start = StateXT(parse_point(p.start, self.cfg.dim), 0.0)
        trajectory = simulate(self.cfg, start, p.n, self.seed)
        measure = trajectory_measure(trajectory.states, p.burn_in)
        table = weyl_table(measure, p.kmax)
        self.writer.add_table("weyl", table)
        worst = float(table["abs"].max()) if len(table) else 0.0
        self._record("max_abs_weyl", worst, f"max |W_k| over {len(table)} frequencies: {worst:.5f}")
        shifts = sorted({float(c) for c in self.cfg.chi_values if c != 0})
        if shifts:
            marginal = marginal_table(measure, shifts, p.bins, tuple(p.window), chi_values=self.cfg.chi_values)
            self.writer.add_table("marginal", marginal)
            self._record("max_marginal_discrepancy", float(marginal["discrepancy"].max()),
                         f"Real-marginal shift discrepancy: {float(marginal['discrepancy'].max()):.5f}")
        atoms = atom_detect(measure, 0.01, 0.05)
        self._record("atoms", len(atoms), f"Atoms (radius 0.01, mass >= 0.05): {len(atoms)}")

        checkpoints = [c for c in p.pushforward_checkpoints if c <= len(trajectory.word)]
        if p.pushforward_size > 0 and checkpoints:
            rng = stream_rng(self.seed, PUSHFORWARD_STREAM)
            m0 = EmpiricalMeasure.from_arrays(rng.random((p.pushforward_size, self.cfg.dim)))
            push = pushforward_convergence(self.cfg, m0, trajectory.word, checkpoints, p.kmax)
            self.writer.add_table("pushforward", push.table)
            diff = float(push.table["cauchy_diff"].iloc[-1])
            self._record("pushforward_cauchy_last", diff,
                         f"Pushforward change up to n={max(checkpoints)}: {diff:.5f}")


def run(subcommand: str, config: Union[str, Path] = REFERENCE_MODEL_NAME, overrides: Sequence[str] = (),
        seed: Optional[int] = None, out: Optional[Union[str, Path]] = None, replicas: Optional[int] = None,
        settings: Optional[LabSettings] = None,
        progress_callback: Optional[ProgressCallback] = None) -> Path:
    """
    Load a model, resolve parameters and run one subcommand.

    Args:
        subcommand: Experiment name
        config: Model name or JSON path
        overrides: `key=value` parameter overrides
        seed: Seed (default: the model's seed)
        out: Output root (default: LabSettings.output_dir)
        replicas: Replica count for the subcommand's main Monte Carlo size

    Returns:
        Path of the run directory
    """
    settings = settings or LabSettings()
    if subcommand not in ExperimentRunner.SUBCOMMANDS:
        raise ConfigError(f"Unknown subcommand {subcommand!r}")
    document = load_model_document(config)
    cfg = walk_config_from_mapping(document)
    params = resolve_params(subcommand, document.get("params"), overrides, replicas)
    workers = document.get("workers") or settings.workers
    runner = ExperimentRunner(cfg, subcommand, params, cfg.seed if seed is None else seed,
                              out or settings.output_dir, workers, progress_callback)
    return runner.run()
