"""Command-line driver: ``bfdarcy run | verify | resume``.

Exit codes: 0 success, 2 configuration error, 3 invariant violation, 4 blow-up.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, dynamics
from .diagnostics import BudgetAccumulator, compute_record, vertical_budget
from .dynamics import BlowUpError, step
from .inequalities import (
    calibrate_gamma,
    check_damping_monotonicity,
    check_dual_bound,
    check_interpolation_p1,
    check_ladyzhenskaya,
    check_trace_p2,
    check_triple_product,
    random_vector_pairs,
    scalar_ensemble,
    slice_vanishing_ensemble,
    triple_ensemble,
    velocity_ensemble,
    write_reports_csv,
)
from .io import (
    ConfigError,
    CsvWriter,
    RunConfig,
    SnapshotError,
    initial_condition,
    load_config,
    metadata_line,
    read_diagnostics_csv,
    read_snapshot,
    write_snapshot,
)
from .spectral import make_grid, random_divergence_free
from .stability import GRONWALL_COLUMNS, TWIN_COLUMNS, gronwall_envelope, twin_run

log = logging.getLogger("bfdarcy")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_BLOWUP = 4

SUITES = ("inequalities", "budgets", "stability", "all")


def snapshot_name(step_index: int) -> str:
    return f"snapshot_{step_index:08d}.bin"


def _prepare_output(config: RunConfig) -> Path:
    out = config.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as err:
        raise ConfigError(f"output directory {out} is not writable: {err}") from err
    (out / "run_config.txt").write_text(f"# bfdarcy {__version__}\n" + config.resolved_text())
    return out


def _float_fields(x):
    return [repr(float(v)) if isinstance(v, (float, np.floating)) else str(v).lower() if isinstance(v, bool) else str(v)
            for v in x]


def _write_table(path, columns, rows, metadata=None):
    with open(path, "w", newline="") as fh:
        if metadata:
            fh.write(metadata)
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(_float_fields(row))


# -- time integration with diagnostics ------------------------------------------

def simulate(config: RunConfig, u, start_step: int, writer: CsvWriter | None, budget: BudgetAccumulator,
             out_dir: Path | None = None, record_start: bool = True):
    """Step from ``start_step`` to the end, writing records and snapshots at cadence.

    Returns the list of records written.  Raises :class:`BlowUpError` after
    flushing a final record of the last finite state.
    """
    params, stepper = config.physics, config.stepper
    dt = stepper.dt
    n_steps = config.n_steps
    records = []

    def emit(n, state):
        rec = compute_record(state, params.alpha, n * dt)
        if not rec.is_finite():
            raise BlowUpError("non-finite diagnostics", t=n * dt, state=state)
        rec = replace(rec, budget_residual=budget.push(rec))
        records.append(rec)
        if writer is not None:
            writer.write(rec)
        return rec

    if record_start:
        emit(start_step, u)
    last_written = start_step
    for n in range(start_step + 1, n_steps + 1):
        prev = u
        try:
            u = step(u, params, stepper)
            if n % config.diag_every == 0 or n == n_steps:
                emit(n, u)
                last_written = n
        except BlowUpError as err:
            if writer is not None:
                if last_written != n - 1:
                    writer.write(compute_record(prev, params.alpha, (n - 1) * dt))
                writer.comment(f"blow-up during step {n} (t={n * dt!r}): {err}")
                writer.flush()
            err.t = (n - 1) * dt
            raise
        if out_dir is not None and n % config.snapshot_every == 0:
            write_snapshot(out_dir / snapshot_name(n), u, n * dt)
    return records


# -- subcommands -----------------------------------------------------------------

def cmd_run(config: RunConfig) -> int:
    out = _prepare_output(config)
    u0 = initial_condition(config)
    budget = BudgetAccumulator(config.physics.nu, config.physics.a)
    with CsvWriter(out / "diagnostics.csv", metadata_line(config)) as writer:
        write_snapshot(out / snapshot_name(0), u0, 0.0)
        simulate(config, u0, 0, writer, budget, out)
    return EXIT_OK


def _changed_keys(original: RunConfig, resumed: RunConfig) -> list[str]:
    keys = sorted(set(original.values) | set(resumed.values))
    return [k for k in keys if original.values.get(k) != resumed.values.get(k)]


def cmd_resume(original: RunConfig, config: RunConfig, snapshot: Path) -> int:
    u, header = read_snapshot(snapshot, expect_grid=config.grid)
    dt = config.stepper.dt
    start = int(round(header["t"] / dt))
    if not math.isclose(start * dt, header["t"], rel_tol=1e-9, abs_tol=1e-12):
        raise ConfigError(f"snapshot time {header['t']!r} is not a multiple of dt={dt!r}")
    if start > config.n_steps:
        raise ConfigError(f"snapshot step {start} lies beyond t_end ({config.n_steps} steps)")
    out = _prepare_output(config)

    # replay the original budget ledger up to the resume point
    origin = "resume_point"
    budget = BudgetAccumulator(original.physics.nu, original.physics.a)
    source = original.output_dir / "diagnostics.csv"
    replayed = False
    if source.exists():
        _, previous = read_diagnostics_csv(source)
        upto = [r for r in previous if r.t <= header["t"] * (1 + 1e-12)]
        if upto and math.isclose(upto[-1].t, header["t"], rel_tol=1e-9, abs_tol=1e-12):
            for r in upto:
                budget.push(r)
            replayed = True
            origin = str(source)
    if not replayed:
        budget.push(compute_record(u, config.physics.alpha, header["t"]))
    budget.nu, budget.a = config.physics.nu, config.physics.a

    changed = _changed_keys(original, config)
    meta = metadata_line(
        config,
        resumed_from=Path(snapshot).name,
        resume_step=start,
        budget_origin=origin,
        changed=",".join(changed) if changed else "none",
    )
    name = out / f"diagnostics_resumed_{start}.csv"
    with CsvWriter(name, meta) as writer:
        simulate(config, u, start, writer, budget, out, record_start=False)
    return EXIT_OK


def _setting(config: RunConfig, key: str, conv):
    try:
        return conv(config.values[key])
    except ValueError as err:
        raise ConfigError(f"invalid value for {key}: {config.values[key]!r}") from err


def _kappa(config: RunConfig, alpha: float) -> float:
    if config.values["stability.kappa"].strip().lower() != "auto":
        return _setting(config, "stability.kappa", float)
    if not alpha > 1:
        return 0.0
    rep = check_damping_monotonicity(random_vector_pairs(100_000, seed=0), alpha)
    return max(0.0, rep.details["kappa"])


def suite_inequalities(config: RunConfig, out: Path) -> list[str]:
    n = _setting(config, "verify.samples", int)
    seed = _setting(config, "verify.seed", int)
    pairs = _setting(config, "verify.pairs", int)
    alphas = _setting(config, "verify.alphas", lambda s: [float(x) for x in s.replace(",", " ").split()])
    n_grid = _setting(config, "verify.grid_n", int)
    try:
        grid = make_grid(n_grid, n_grid, config.grid.box_lengths)
    except ValueError as err:
        raise ConfigError(f"verify.grid_n: {err}") from err

    reports = [
        check_ladyzhenskaya(scalar_ensemble(grid, n, seed=seed)),
        check_interpolation_p1(scalar_ensemble(grid, n, seed=seed, horizontal_mean_zero=True)),
        check_dual_bound(velocity_ensemble(grid, n, seed=seed)),
        check_trace_p2(scalar_ensemble(grid, n, seed=seed)),
        check_trace_p2(slice_vanishing_ensemble(grid, n, seed=seed), periodic=False),
    ]
    gamma = calibrate_gamma(list(velocity_ensemble(grid, min(n, 100), seed=seed)), alphas)
    triples = list(triple_ensemble(grid, n, seed=seed))
    vec_pairs = random_vector_pairs(pairs, seed=seed)
    hard = {r.name for r in reports[2:]}
    for alpha in alphas:
        params = dynamics.PhysicsParams(config.physics.nu, max(config.physics.a, 1.0), alpha)
        tp = check_triple_product(triples, alpha, params=params, gamma_hat=gamma["gamma_hat"])
        mono = check_damping_monotonicity(vec_pairs, alpha)
        reports += [tp, mono]
        hard |= {tp.name, mono.name}
    write_reports_csv(out / "inequalities.csv", reports)
    _write_table(out / "gamma_calibration.csv", ("alpha", "gamma_empirical"),
                 [(a, gamma[float(a)]) for a in alphas] + [("max", gamma["gamma_hat"]), ("spread", gamma["spread"])])
    failures = []
    for r in reports:
        if r.name in hard and r.violated:
            failures.append(f"{r.name}: max_ratio={r.max_ratio!r}")
        elif r.violated:
            log.warning("soft check %s reported a non-finite constant", r.name)
    return failures


def _base_run(config: RunConfig, u0):
    budget = BudgetAccumulator(config.physics.nu, config.physics.a)
    return simulate(config, u0, 0, None, budget)


def suite_budgets(config: RunConfig, out: Path) -> list[str]:
    u0 = initial_condition(config)
    records = _base_run(config, u0)
    tol = _setting(config, "verify.budget_tol", float)
    with CsvWriter(out / "budgets.csv", metadata_line(config)) as writer:
        for r in records:
            writer.write(r)
    rel = abs(records[-1].budget_residual) / records[0].energy if records[0].energy > 0 else 0.0
    report = vertical_budget(records, config.physics)
    _write_table(out / "vertical_budget.csv",
                 ("eta_empirical", "bound_satisfied", "margin", "energy_residual_rel"),
                 [(report.eta_empirical, report.bound_satisfied, report.margin, rel)],
                 metadata_line(config))
    failures = []
    if not rel <= tol:
        failures.append(f"energy budget residual {rel!r} exceeds {tol!r}")
    if not report.bound_satisfied:
        failures.append(f"vertical budget bound failed (margin {report.margin!r})")
    return failures


def suite_stability(config: RunConfig, out: Path) -> list[str]:
    params, stepper = config.physics, config.stepper
    u0 = initial_condition(config)
    failures = []

    # base trajectory must close its energy ledger before twins mean anything
    failures += [f"base run: {f}" for f in suite_budgets(config, out)]

    # determinism: identical initial data stays bit-identical
    u, v = u0, initial_condition(config)
    for _ in range(min(10, config.n_steps)):
        u, v = step(u, params, stepper), step(v, params, stepper)
    if not np.array_equal(u.coefficients, v.coefficients):
        failures.append("identical twins diverged")

    delta = _setting(config, "stability.delta", float)
    pseed = _setting(config, "stability.perturbation_seed", int)
    # perturbation measured relative to the base energy (box volume for a zero base)
    energy = compute_record(u0, params.alpha).energy or config.grid.volume
    direction = random_divergence_free(config.grid, seed=pseed, energy=energy)
    v0 = u0 + direction * delta
    every = _setting(config, "stability.record_every", int)
    records = twin_run(u0, v0, params, stepper, config.t_end, record_every=every)
    kappa = _kappa(config, params.alpha)
    report = gronwall_envelope(records, params=params, kappa=kappa)
    _write_table(out / "twin.csv", TWIN_COLUMNS, [r.as_row() for r in records], metadata_line(config))
    _write_table(out / "gronwall.csv", GRONWALL_COLUMNS + ("kappa",), [report.as_row() + (kappa,)],
                 metadata_line(config))
    if not (report.envelope_satisfied and math.isfinite(report.c_empirical)):
        failures.append(f"Gronwall envelope failed (c_empirical={report.c_empirical!r})")
    return failures


def cmd_verify(config: RunConfig, suite: str) -> int:
    out = _prepare_output(config)
    names = ("inequalities", "budgets", "stability") if suite == "all" else (suite,)
    runners = {"inequalities": suite_inequalities, "budgets": suite_budgets, "stability": suite_stability}
    failures = []
    for name in names:
        found = runners[name](config, out)
        status = "FAIL" if found else "ok"
        print(f"{name}: {status}")
        for f in found:
            print(f"  {f}")
        failures += found
    return EXIT_INVARIANT if failures else EXIT_OK


# -- entry point -------------------------------------------------------------------

def _parse_sets(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, val = item.split("=", 1)
        out[k.strip()] = val.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bfdarcy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bfdarcy {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--output", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="seed for random initial data and ensembles")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("run", help="integrate and write diagnostics.csv and snapshots"))
    p_verify = sub.add_parser("verify", help="run a verification suite")
    common(p_verify)
    p_verify.add_argument("--suite", choices=SUITES, default="all")
    p_resume = sub.add_parser("resume", help="continue a run from a snapshot")
    common(p_resume)
    p_resume.add_argument("--snapshot", required=True, help="snapshot file written by run")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = _parse_sets(args.set)
        if args.seed is not None:
            overrides["ic.seed"] = str(args.seed)
            overrides["verify.seed"] = str(args.seed)
        if args.output is not None:
            overrides["output_dir"] = args.output
        if args.command == "resume":
            base = {k: val for k, val in overrides.items() if k == "output_dir"}
            original = load_config(args.config, base)
            config = load_config(args.config, overrides)
            return cmd_resume(original, config, Path(args.snapshot))
        config = load_config(args.config, overrides)
        if args.command == "run":
            return cmd_run(config)
        return cmd_verify(config, args.suite)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SnapshotError as err:
        print(f"snapshot error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as err:
        print(f"blow-up at t={err.t!r}: {err}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
