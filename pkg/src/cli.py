#!/usr/bin/env python3
"""
Command-line front end.

Every command validates its parameters, runs, writes its data files plus
<out>.manifest.json, and records the manifest in the DuckDB run ledger.
Exit codes: 0 success, 1 failed identity or verification, 2 bad parameters,
3 numerical non-convergence, 4 underpowered Monte Carlo run.
"""

import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.config import Settings, load_settings
from src.errors import DomainError, InvariantError, LLTError, ParameterError
from src.graph_core import GraphParams
from src.ledger import RunLedger, RunManifest
from src.limit_law import check_power, discrepancy_trend, empirical_pmf, sup_discrepancy
from src.moments import mean_triangles, moment_report, variance_triangles
from src.oracle import MAX_EXACT_N, exact_pmf
from src.probe import build_matching_plan, run_decomposition_trials, run_h_experiments
from src.spectral import (
    DEFAULT_A,
    DEFAULT_D,
    certify_bernoulli_bound,
    certify_cosine_bound,
    decay_profile,
    empirical_charfun,
    integrated_gap,
    t_grid_from_spec,
)
from src.tri_count import triangle_count_stream

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


@dataclass
class CliState:
    settings: Settings
    use_ledger: bool


class LLTGroup(click.Group):
    """Maps package exceptions to exit codes"""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except LLTError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"Error: {e}", err=True)
            ctx.exit(e.exit_code)
        except ValidationError as e:
            click.echo(f"Error: invalid parameters\n{e}", err=True)
            ctx.exit(ParameterError.exit_code)


def _manifest_path(out: Path) -> Path:
    return Path(str(out) + ".manifest.json")


def _finish(ctx: click.Context, primary: Path, outputs: List[Path], parameters: Dict[str, Any],
            started: float, seed: Optional[int] = None, sample_count: Optional[int] = None) -> None:
    """Write the manifest next to primary and record it in the ledger"""
    state: CliState = ctx.obj
    manifest = RunManifest(
        command=ctx.command_path,
        argv=sys.argv[1:],
        parameters={**parameters, "threads": state.settings.threads,
                    "batch_size": state.settings.batch_size},
        seed=seed,
        sample_count=sample_count,
        wall_time_seconds=time.perf_counter() - started,
    )
    for path in outputs:
        manifest.add_output(path)
    manifest.write(_manifest_path(primary))
    if state.use_ledger:
        ledger = RunLedger(state.settings.ledger_path)
        try:
            run_id = ledger.record_run(manifest)
        finally:
            ledger.close()
        click.echo(f"run_id: {run_id}")


def _params(n: int, p: float, seed: int) -> GraphParams:
    return GraphParams(n=n, p=p, seed=seed)


def _seed(ctx: click.Context, seed: Optional[int]) -> int:
    return ctx.obj.settings.seed if seed is None else seed


@click.group(cls=LLTGroup)
@click.option("--threads", type=int, default=None, help="Worker threads (default GNP_LLT_THREADS)")
@click.option("--batch-size", type=int, default=None, help="Graphs per batch (default GNP_LLT_BATCH_SIZE)")
@click.option("--ledger/--no-ledger", default=True, show_default=True, help="Record runs in the ledger")
@click.option("--ledger-path", default=None, help="Ledger file (default GNP_LLT_LEDGER_PATH)")
@click.option("--log-level", default=None, help="Log level (default GNP_LLT_LOG_LEVEL)")
@click.pass_context
def cli(ctx, threads, batch_size, ledger, ledger_path, log_level):
    """Local limit law experiments for triangle counts in G(n,p)."""
    overrides = {
        key: value for key, value in {
            "threads": threads,
            "batch_size": batch_size,
            "ledger_path": ledger_path,
            "log_level": log_level,
        }.items() if value is not None
    }
    settings = Settings(**{**load_settings().model_dump(), **overrides})
    logging.basicConfig(level=settings.log_level, format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(settings.log_level)
    ctx.obj = CliState(settings=settings, use_ledger=ledger)


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Vertex count")
@click.option("--p", "p", type=float, required=True, help="Edge probability")
@click.option("--samples", type=int, default=None, help="Monte Carlo sample count")
@click.option("--exact", is_flag=True, default=False, help="Enumerate every graph (n <= 7)")
@click.option("--allow-large", is_flag=True, default=False, help="Lift the exact-enumeration guard")
@click.option("--seed", type=int, default=None, help="RNG seed (default GNP_LLT_SEED)")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Output CSV (k, prob)")
@click.pass_context
def pmf(ctx, n, p, samples, exact, allow_large, seed, out):
    """Tabulate the distribution of the triangle count."""
    started = time.perf_counter()
    seed = _seed(ctx, seed)
    params = _params(n, p, seed)
    if exact == (samples is not None):
        raise ParameterError("give exactly one of --exact or --samples")
    if exact and n > MAX_EXACT_N and not allow_large:
        raise ParameterError(
            f"exact enumeration of 2^{math.comb(n, 2)} graphs refused for n={n} "
            f"(limit n <= {MAX_EXACT_N}; pass --allow-large to override)"
        )
    state: CliState = ctx.obj
    if exact:
        table = exact_pmf(n, p, allow_large=allow_large)
    else:
        table = empirical_pmf(params, samples, threads=state.settings.threads,
                              batch_size=state.settings.batch_size)
    json_path = out.with_suffix(".json")
    table.write_csv(out)
    table.write_json(json_path)
    click.echo(f"{table.kind} pmf: n={n} p={p} support={len(table.support)} points")
    _finish(ctx, out, [out, json_path], {"n": n, "p": p, "exact": exact, "samples": samples},
            started, seed=None if exact else seed, sample_count=samples)


@cli.command()
@click.option("--n", "n_values", type=int, multiple=True, required=True,
              help="Vertex count; repeat for a sweep")
@click.option("--p", "p", type=float, required=True, help="Edge probability")
@click.option("--samples", type=int, default=None, help="Monte Carlo samples per n")
@click.option("--exact", is_flag=True, default=False, help="Use the exact pmf (n <= 7)")
@click.option("--seed", type=int, default=None, help="RNG seed (default GNP_LLT_SEED)")
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Report JSON; a sweep writes a JSON-lines trend here")
@click.pass_context
def llt(ctx, n_values, p, samples, exact, seed, out):
    """Measure the sup-norm local limit discrepancy."""
    started = time.perf_counter()
    seed = _seed(ctx, seed)
    state: CliState = ctx.obj
    if exact == (samples is not None):
        raise ParameterError("give exactly one of --exact or --samples")
    for n in n_values:
        _params(n, p, seed)
        if n < 4:
            raise DomainError(f"the local limit comparison needs n >= 4, got n={n}")
        if exact and n > MAX_EXACT_N:
            raise ParameterError(f"exact pmf refused for n={n} (limit n <= {MAX_EXACT_N})")
        if not exact:
            check_power(n, p, samples)

    reports = []
    for n in n_values:
        table = exact_pmf(n, p) if exact else empirical_pmf(
            _params(n, p, seed), samples, threads=state.settings.threads,
            batch_size=state.settings.batch_size)
        report = sup_discrepancy(table, n, p)
        reports.append(report)
        click.echo(f"n={n} delta={report.sup_discrepancy:.10g} argmax_k={report.argmax_k} "
                   f"argmax_x={report.argmax_x:.6f} mc_error_bound={report.mc_error_bound:.6g}")

    parameters = {"n": list(n_values), "p": p, "exact": exact, "samples": samples}
    if len(reports) == 1:
        csv_path = out.with_suffix(".csv")
        reports[0].write_json(out)
        reports[0].write_csv(csv_path)
        outputs = [out, csv_path]
    else:
        trend = discrepancy_trend(reports)
        trend.write_jsonl(out)
        outputs = [out]
        for report in reports:
            path = out.with_name(f"{out.stem}.n{report.n}.json")
            report.write_json(path)
            outputs.append(path)
        click.echo(f"decreasing={trend.decreasing} combined_error={trend.combined_error:.6g}")
    _finish(ctx, out, outputs, parameters, started,
            seed=None if exact else seed, sample_count=samples)


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Vertex count")
@click.option("--p", "p", type=float, required=True, help="Edge probability")
@click.option("--samples", type=int, required=True, help="Monte Carlo sample count")
@click.option("--t-grid", "t_grid", required=True,
              help='Grid: "start:stop:step", "log:start:stop:count" or "t1,t2,..."')
@click.option("--a-boundary", type=float, default=DEFAULT_A, show_default=True, help="R1/R2 boundary A")
@click.option("--d-constant", type=float, default=DEFAULT_D, show_default=True,
              help="Constant D of the decay bounds")
@click.option("--seed", type=int, default=None, help="RNG seed (default GNP_LLT_SEED)")
@click.option("--out", type=click.Path(path_type=Path), required=True,
              help="Profile CSV (t, re, im, abs, stderr, region)")
@click.pass_context
def charfun(ctx, n, p, samples, t_grid, a_boundary, d_constant, seed, out):
    """Estimate the characteristic function of the standardized count."""
    started = time.perf_counter()
    seed = _seed(ctx, seed)
    params = _params(n, p, seed)
    if n < 4:
        raise DomainError(f"standardization needs n >= 4, got n={n}")
    if samples < 1:
        raise ParameterError("samples must be at least 1")
    grid = t_grid_from_spec(t_grid)
    state: CliState = ctx.obj

    counts = triangle_count_stream(params, samples, threads=state.settings.threads,
                                   batch_size=state.settings.batch_size)
    r = (counts - mean_triangles(n, p)) / math.sqrt(variance_triangles(n, p))
    profile = empirical_charfun(r, grid, n=n, p=p, a_boundary=a_boundary)
    table = decay_profile(profile, d_constant=d_constant)
    decay_path = out.with_name(f"{out.stem}.decay.csv")
    profile.write_csv(out)
    table.write_csv(decay_path)

    gaps = integrated_gap(profile)
    r1 = [abs(est - math.exp(-t * t / 2)) for t, est, region in
          zip(profile.t_values, profile.estimates, profile.region_labels) if region == "R1"]
    if r1:
        click.echo(f"max R1 gap to exp(-t^2/2): {max(r1):.6g}")
    click.echo(f"integrated gap by region: {gaps}")
    click.echo(f"decay verdicts: {table.verdict_counts()}")
    _finish(ctx, out, [out, decay_path],
            {"n": n, "p": p, "samples": samples, "t_grid": t_grid,
             "a_boundary": a_boundary, "d_constant": d_constant},
            started, seed=seed, sample_count=samples)


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Vertex count")
@click.option("--p", "p", type=float, required=True, help="Edge probability")
@click.option("--samples", type=int, required=True, help="Monte Carlo sample count")
@click.option("--k-max", type=int, default=4, show_default=True, help="Highest moment order")
@click.option("--seed", type=int, default=None, help="RNG seed (default GNP_LLT_SEED)")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Report JSON")
@click.pass_context
def moments(ctx, n, p, samples, k_max, seed, out):
    """Compare sampled moments of the standardized count with predictions."""
    started = time.perf_counter()
    seed = _seed(ctx, seed)
    params = _params(n, p, seed)
    if n < 4:
        raise DomainError(f"standardized moments need n >= 4, got n={n}")
    if samples < 1:
        raise ParameterError("samples must be at least 1")
    if not 1 <= k_max <= 8:
        raise ParameterError(f"k_max must be in 1..8, got {k_max}")
    state: CliState = ctx.obj
    counts = triangle_count_stream(params, samples, threads=state.settings.threads,
                                   batch_size=state.settings.batch_size)
    report = moment_report(n, p, counts, k_max=k_max)
    out.write_text(report.model_dump_json(indent=2) + "\n")
    for k in range(1, k_max + 1):
        click.echo(f"E[R^{k}] = {report.empirical_moments[k]:.6f} "
                   f"± {report.empirical_std_errors[k]:.6f} (gaussian {report.predicted_moments[k]:g})")
    _finish(ctx, out, [out], {"n": n, "p": p, "samples": samples, "k_max": k_max},
            started, seed=seed, sample_count=samples)


@cli.command()
@click.option("--p-points", type=int, default=1000, show_default=True, help="Grid points in p")
@click.option("--theta-points", type=int, default=1000, show_default=True, help="Grid points in theta")
@click.option("--t-points", type=int, default=1_000_000, show_default=True,
              help="Grid points for the cosine inequality")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Certificate JSON")
@click.pass_context
def certify(ctx, p_points, theta_points, t_points, out):
    """Certify the Bernoulli modulus bound and the cosine inequality on grids."""
    started = time.perf_counter()
    if min(p_points, theta_points, t_points) < 2:
        raise ParameterError("every grid needs at least 2 points")
    p_grid = np.linspace(0.0, 1.0, p_points + 2)[1:-1]
    theta_grid = np.linspace(-4 * np.pi, 4 * np.pi, theta_points)
    bernoulli = certify_bernoulli_bound(p_grid, theta_grid)
    cosine = certify_cosine_bound(np.linspace(-np.pi, np.pi, t_points))
    frame = pd.DataFrame([
        {"inequality": "bernoulli", **bernoulli.model_dump()},
        {"inequality": "cosine", **cosine.model_dump()},
    ])
    frame.to_json(out, orient="records", indent=2)
    click.echo(frame.to_string(index=False))
    _finish(ctx, out, [out], {"p_points": p_points, "theta_points": theta_points,
                              "t_points": t_points}, started)
    if bernoulli.violations or cosine.violations:
        raise InvariantError("grid certification found violations")


@cli.group(cls=LLTGroup)
def probe():
    """Conditioning experiments."""


@probe.command()
@click.option("--n", "n", type=int, required=True, help="Even vertex count")
@click.option("--p", "p", type=float, default=0.5, show_default=True, help="Edge probability")
@click.option("--k", "k", type=int, default=1, show_default=True, help="Number of matchings")
@click.option("--trials", type=int, default=1000, show_default=True, help="Sampled graphs")
@click.option("--t-grid", "t_grid", default=None, help="Optional t grid for the conditional modulus")
@click.option("--seed", type=int, default=None, help="RNG seed (default GNP_LLT_SEED)")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Report JSON")
@click.pass_context
def decomposition(ctx, n, p, k, trials, t_grid, seed, out):
    """Matching decomposition S = C + Y + Z."""
    started = time.perf_counter()
    seed = _seed(ctx, seed)
    params = _params(n, p, seed)
    plan = build_matching_plan(n, k)
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    grid = None if t_grid is None else t_grid_from_spec(t_grid).tolist()
    state: CliState = ctx.obj
    report = run_decomposition_trials(params, plan, trials, threads=state.settings.threads,
                                      batch_size=state.settings.batch_size, t_grid=grid)
    report.write_json(out)
    click.echo(f"z_var={report.z_var:.4f} bound={report.z_var_bound} "
               f"bad_L_freq={report.bad_L_freq} y_e_min={report.y_e_min} "
               f"bad_edge_freq={report.bad_edge_freq:.4g} exact={report.bad_edge_exact:.4g}")
    _finish(ctx, out, [out], {"n": n, "p": p, "k": k, "trials": trials, "t_grid": t_grid},
            started, seed=seed, sample_count=trials)


@probe.command()
@click.option("--n", "n", type=int, required=True, help="Vertex count")
@click.option("--p", "p", type=float, default=0.5, show_default=True, help="Edge probability")
@click.option("--usize", "u_size", type=int, required=True, help="|U|")
@click.option("--trials", type=int, default=1000, show_default=True, help="Sampled (A, A') pairs")
@click.option("--t-grid", "t_grid", default=None, help="Optional t grid for the conditional modulus")
@click.option("--coords-csv", type=click.Path(path_type=Path), default=None,
              help="Also write per-coordinate h statistics")
@click.option("--seed", type=int, default=None, help="RNG seed (default GNP_LLT_SEED)")
@click.option("--out", type=click.Path(path_type=Path), required=True, help="Report JSON")
@click.pass_context
def hvector(ctx, n, p, u_size, trials, t_grid, coords_csv, seed, out):
    """Bipartite exposure h-vector statistics."""
    started = time.perf_counter()
    seed = _seed(ctx, seed)
    _params(n, p, seed)
    if not 1 <= u_size <= n - 2:
        raise ParameterError(f"--usize must lie in 1..{n - 2}, got {u_size}")
    grid = None if t_grid is None else t_grid_from_spec(t_grid).tolist()
    state: CliState = ctx.obj
    report = run_h_experiments(n, p, u_size, trials, seed=seed, threads=state.settings.threads,
                               batch_size=state.settings.batch_size, t_grid=grid,
                               coordinate_stats=coords_csv is not None)
    report.write_json(out)
    outputs = [out]
    if coords_csv is not None:
        report.write_coordinate_csv(coords_csv)
        outputs.append(coords_csv)
    if u_size == 1:
        click.echo(f"good_pair_freq={report.good_pair_freq}")
    else:
        click.echo(f"gamma_hat={report.lambda_e_freq:.6f} exact={report.lambda_e_exact:.6f} "
                   f"asymptotic<={report.lambda_e_asymptotic} lambda_freq={report.lambda_freq}")
    _finish(ctx, out, outputs, {"n": n, "p": p, "u_size": u_size, "trials": trials,
                                "t_grid": t_grid}, started, seed=seed, sample_count=trials)


@cli.command()
@click.option("--limit", type=int, default=20, show_default=True, help="Number of runs")
@click.pass_context
def runs(ctx, limit):
    """List recent runs from the ledger."""
    ledger = RunLedger(ctx.obj.settings.ledger_path)
    try:
        rows = ledger.list_runs(limit)
    finally:
        ledger.close()
    if not rows:
        click.echo("no runs recorded")
        return
    frame = pd.DataFrame(rows)[["id", "command", "seed", "sample_count", "wall_time_seconds",
                                "created_at"]]
    click.echo(frame.to_string(index=False))


@cli.command()
@click.argument("run_id")
@click.pass_context
def verify(ctx, run_id):
    """Re-hash the outputs of a recorded run."""
    ledger = RunLedger(ctx.obj.settings.ledger_path)
    try:
        statuses = ledger.verify_run(run_id)
    except KeyError as e:
        raise ParameterError(str(e.args[0]))
    finally:
        ledger.close()
    for path, status in statuses.items():
        click.echo(f"{status}\t{path}")
    if any(status != "ok" for status in statuses.values()):
        raise InvariantError(f"run {run_id} has outputs that no longer match their digests")


def main():
    cli(prog_name="gnp-llt")


if __name__ == "__main__":
    main()
