"""Command-line front end: generate problems, run optimization batches,
emit CSV traces and SVG plots, and print hardware noise estimates.

All outputs are pure functions of the run configuration; trace timing
columns are zeroed unless --timing is given, so repeated runs are
byte-identical.  QLMA_SEED_OFFSET shifts every seed for batch sweeps.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ba import (
    build_normal_equations,
    generate_problem,
    residuals_and_jacobian,
    save_problem,
    schur_reduce,
)
from .hhl import HhlConfig, embed_problem, hhl_gate_tally
from .noise import (
    RATE_PRESETS,
    REFERENCE_COUNTS,
    REFERENCE_GATE_TALLY,
    ErrorRates,
    repeated_success,
    success_probability,
)
from .optimizer import (
    SETUPS,
    ConvergenceTrace,
    LinearBackend,
    optimize,
    write_trace_csv,
)
from .svg import write_line_plot

DEFAULT_SEEDS = tuple(range(1, 10))
BACKEND_ALIASES = {
    "classical": "classical-schur",
    "classical-schur": "classical-schur",
    "classical-dense": "classical-dense",
    "hhl": "hhl",
}


@dataclass(frozen=True)
class RunConfig:
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    setup: int = 1
    backend: str = "classical"
    max_iters: int = 40
    output_dir: str = "."
    trotter_slices: int = 50
    phase_qubits: int = 3
    jobs: int = 1
    timing: bool = False
    noise_on: str = "points3d"

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.setup not in SETUPS:
            raise ValueError("setup must be 1 or 2")
        if self.backend not in BACKEND_ALIASES:
            raise ValueError(f"unknown backend {self.backend!r}")

    def resolved_backend(self) -> LinearBackend:
        kind = BACKEND_ALIASES[self.backend]
        return LinearBackend(kind, HhlConfig(n_phase_qubits=self.phase_qubits, slices=self.trotter_slices))


def _offset_seeds(seeds) -> tuple[int, ...]:
    offset = int(os.environ.get("QLMA_SEED_OFFSET", "0"))
    return tuple(int(s) + offset for s in seeds)


def _run_one(args: tuple) -> tuple[int, ConvergenceTrace]:
    seed, setup, backend_name, max_iters, slices, phase_qubits, noise_on = args
    cfg = RunConfig(
        seeds=(seed,), setup=setup, backend=backend_name, max_iters=max_iters,
        trotter_slices=slices, phase_qubits=phase_qubits, noise_on=noise_on,
    )
    problem = generate_problem(seed, noise_on=noise_on)
    trace = optimize(problem, SETUPS[setup], cfg.resolved_backend(), max_iters=max_iters, label=str(seed))
    return seed, trace


def run_batch(config: RunConfig) -> dict[int, ConvergenceTrace]:
    """Optimize every seed; independent seeds may run in parallel."""
    seeds = _offset_seeds(config.seeds)
    jobs = [
        (s, config.setup, config.backend, config.max_iters, config.trotter_slices, config.phase_qubits, config.noise_on)
        for s in seeds
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = dict(pool.map(_run_one, jobs))
    else:
        results = dict(map(_run_one, jobs))
    return {s: results[s] for s in seeds}


def _run_batch_preserving(config: RunConfig) -> tuple[dict[int, ConvergenceTrace], list[str]]:
    """Like run_batch, but a failing seed does not discard finished ones."""
    seeds = _offset_seeds(config.seeds)
    jobs = {
        s: (s, config.setup, config.backend, config.max_iters, config.trotter_slices, config.phase_qubits, config.noise_on)
        for s in seeds
    }
    traces: dict[int, ConvergenceTrace] = {}
    failures: list[str] = []
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = {s: pool.submit(_run_one, job) for s, job in jobs.items()}
            for s, fut in futures.items():
                try:
                    traces[s] = fut.result()[1]
                except Exception as exc:
                    failures.append(f"seed {s}: {exc}")
    else:
        for s, job in jobs.items():
            try:
                traces[s] = _run_one(job)[1]
            except Exception as exc:
                failures.append(f"seed {s}: {exc}")
    return traces, failures


def aligned_costs(traces: dict[int, ConvergenceTrace]) -> tuple[np.ndarray, list[int]]:
    """Per-iteration cost matrix (seeds x iterations); traces that stopped
    early carry their final cost forward."""
    seeds = list(traces)
    length = max(len(traces[s].records) for s in seeds)
    out = np.zeros((len(seeds), length))
    for row, s in enumerate(seeds):
        costs = traces[s].costs()
        out[row, : len(costs)] = costs
        out[row, len(costs) :] = costs[-1]
    return out, seeds


def write_summary(traces: dict[int, ConvergenceTrace], path) -> None:
    """Mean across seeds plus the curves of the best and worst seeds,
    ranked by their cost at the last iteration."""
    costs, seeds = aligned_costs(traces)
    finals = costs[:, -1]
    best_row = int(np.argmin(finals))
    worst_row = int(np.argmax(finals))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mean", "best", "worst"])
        for it in range(costs.shape[1]):
            writer.writerow(
                [it + 1, repr(float(costs[:, it].mean())), repr(float(costs[best_row, it])), repr(float(costs[worst_row, it]))]
            )


def _summary_series(summary_path) -> dict[str, tuple[list, list]]:
    rows = list(csv.DictReader(open(summary_path)))
    its = [int(r["iteration"]) for r in rows]
    return {
        "mean": (its, [float(r["mean"]) for r in rows]),
        "best": (its, [float(r["best"]) for r in rows]),
        "worst": (its, [float(r["worst"]) for r in rows]),
    }


def cmd_run(config: RunConfig) -> int:
    os.makedirs(config.output_dir, exist_ok=True)
    traces, failures = _run_batch_preserving(config)
    for seed, trace in traces.items():
        write_trace_csv(trace, os.path.join(config.output_dir, f"trace_seed{seed}.csv"), config.timing)
    if traces:
        summary = os.path.join(config.output_dir, "summary.csv")
        write_summary(traces, summary)
        title = f"setup {config.setup} / {config.backend}"
        write_line_plot(os.path.join(config.output_dir, "summary.svg"), _summary_series(summary), title)
    for failure in failures:
        print(f"run failed: {failure}", file=sys.stderr)
    return 1 if failures else 0


def cmd_compare(config_a: RunConfig, config_b: RunConfig, output_dir: str) -> int:
    if _offset_seeds(config_a.seeds) != _offset_seeds(config_b.seeds):
        print("compare requires both configurations to share seeds", file=sys.stderr)
        return 1
    os.makedirs(output_dir, exist_ok=True)
    try:
        traces_a = run_batch(config_a)
        traces_b = run_batch(config_b)
    except Exception as exc:
        print(f"compare failed: {exc}", file=sys.stderr)
        return 1
    label_a = f"{config_a.backend}-setup{config_a.setup}"
    label_b = f"{config_b.backend}-setup{config_b.setup}"
    if label_a == label_b:
        label_a += "-a"
        label_b += "-b"
    costs_a, seeds = aligned_costs(traces_a)
    costs_b, _ = aligned_costs(traces_b)
    for row, seed in enumerate(seeds):
        path = os.path.join(output_dir, f"compare_seed{seed}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", f"cost_{label_a}", f"cost_{label_b}"])
            length = max(costs_a.shape[1], costs_b.shape[1])
            for it in range(length):
                a = costs_a[row, min(it, costs_a.shape[1] - 1)]
                b = costs_b[row, min(it, costs_b.shape[1] - 1)]
                writer.writerow([it + 1, repr(float(a)), repr(float(b))])
        series = {
            label_a: (list(range(1, costs_a.shape[1] + 1)), list(costs_a[row])),
            label_b: (list(range(1, costs_b.shape[1] + 1)), list(costs_b[row])),
        }
        write_line_plot(os.path.join(output_dir, f"compare_seed{seed}.svg"), series, f"problem {seed}")
    return 0


def cmd_noise(
    rates: ErrorRates,
    measured_qubits: int,
    iterations: int,
    own_counts: bool,
    slices: int,
    phase_qubits: int,
    p_single: float | None = None,
) -> int:
    n1, n2 = REFERENCE_COUNTS
    print("reference gate tally:", " ".join(f"{k}={v}" for k, v in REFERENCE_GATE_TALLY.items()))
    print(f"reference totals: one-qubit={n1} two-qubit={n2}")
    print(
        f"rates: one-qubit={rates.one_qubit_gate} two-qubit={rates.two_qubit_gate} "
        f"measurement={rates.measurement}"
    )
    gate_only = success_probability((n1, n2), 0, rates)
    with_meas = success_probability((n1, n2), measured_qubits, rates)
    print(f"single-run success (gates only): {gate_only:.6f}")
    print(f"single-run success ({measured_qubits} measured qubits): {with_meas:.6f}")
    single = p_single if p_single is not None else gate_only
    print(f"{iterations}-iteration compound success (p={single:.6g}): {repeated_success(single, iterations):.6e}")
    if own_counts:
        problem = generate_problem(1)
        r, jac = residuals_and_jacobian(problem.initial, problem.initial.initial_params())
        ne = build_normal_equations(r, jac, SETUPS[1].lambda1_init, SETUPS[1].lambda2, m_c=problem.initial.n_camera_params)
        s, rhs = schur_reduce(ne)
        embedded = embed_problem(s, -rhs, force_dilation=True)
        one, two, per = hhl_gate_tally(embedded, HhlConfig(n_phase_qubits=phase_qubits, slices=slices))
        print("own unrolled tally:", " ".join(f"{k}={v}" for k, v in sorted(per.items())))
        print(f"own totals: one-qubit={one} two-qubit={two}")
        print(f"single-run success with own counts: {success_probability((one, two), 0, rates):.6e}")
        print(
            "note: the unrolled product-formula circuit exceeds the reference tally, "
            "which counts composite instructions"
        )
    return 0


def cmd_gen(seeds, output_dir: str, noise_on: str) -> int:
    os.makedirs(output_dir, exist_ok=True)
    for seed in _offset_seeds(seeds):
        problem = generate_problem(seed, noise_on=noise_on)
        save_problem(problem, os.path.join(output_dir, f"problem_seed{seed}.txt"))
    return 0


def _parse_seeds(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split(",") if s.strip())


def _load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _resolve(args: argparse.Namespace, file_values: dict[str, str], key: str, default, cast):
    cli_value = getattr(args, key, None)
    if cli_value is not None:
        return cli_value
    if key in file_values:
        return cast(file_values[key])
    return default


def _add_run_flags(parser: argparse.ArgumentParser, suffix: str = "") -> None:
    parser.add_argument(f"--seeds{suffix}", type=_parse_seeds, default=None, help="comma-separated seed list")
    parser.add_argument(f"--setup{suffix}", type=int, choices=(1, 2), default=None)
    parser.add_argument(f"--backend{suffix}", choices=sorted(BACKEND_ALIASES), default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qlma", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="optimize a batch of seeded problems")
    _add_run_flags(run)
    run.add_argument("--iters", type=int, default=None)
    run.add_argument("--slices", type=int, default=None)
    run.add_argument("--phase-qubits", dest="phase_qubits", type=int, default=None)
    run.add_argument("--out", default=None)
    run.add_argument("--jobs", type=int, default=None)
    run.add_argument("--timing", action="store_true", default=None)
    run.add_argument("--noise-on", dest="noise_on", choices=("points3d", "keypoints"), default=None)
    run.add_argument("--config", default=None, help="key=value config file; flags win")

    comp = sub.add_parser("compare", help="overlay two configurations per seed")
    _add_run_flags(comp, "")
    _add_run_flags(comp, "-b")
    comp.add_argument("--iters", type=int, default=None)
    comp.add_argument("--slices", type=int, default=None)
    comp.add_argument("--phase-qubits", dest="phase_qubits", type=int, default=None)
    comp.add_argument("--out", default=None)
    comp.add_argument("--jobs", type=int, default=None)
    comp.add_argument("--config", default=None)

    noise = sub.add_parser("noise", help="print hardware success estimates")
    noise.add_argument("--preset", choices=sorted(RATE_PRESETS), default=None)
    noise.add_argument("--one-qubit-rate", type=float, default=None)
    noise.add_argument("--two-qubit-rate", type=float, default=None)
    noise.add_argument("--measurement-rate", type=float, default=None)
    noise.add_argument("--measured-qubits", type=int, default=0)
    noise.add_argument("--iterations", type=int, default=10)
    noise.add_argument("--p-single", type=float, default=None)
    noise.add_argument("--own-counts", action="store_true")
    noise.add_argument("--slices", type=int, default=50)
    noise.add_argument("--phase-qubits", dest="phase_qubits", type=int, default=3)

    gen = sub.add_parser("gen", help="write problem files")
    gen.add_argument("--seeds", type=_parse_seeds, default=None)
    gen.add_argument("--out", default=None)
    gen.add_argument("--noise-on", dest="noise_on", choices=("points3d", "keypoints"), default=None)
    return parser


def _run_config_from(args: argparse.Namespace, file_values: dict[str, str], suffix: str = "") -> RunConfig:
    def key(name):
        return f"{name}{suffix.replace('-', '_')}"

    return RunConfig(
        seeds=_resolve(args, file_values, key("seeds"), DEFAULT_SEEDS, _parse_seeds),
        setup=_resolve(args, file_values, key("setup"), 1, int),
        backend=_resolve(args, file_values, key("backend"), "classical", str),
        max_iters=_resolve(args, file_values, "iters", 40, int),
        output_dir=_resolve(args, file_values, "out", ".", str),
        trotter_slices=_resolve(args, file_values, "slices", 50, int),
        phase_qubits=_resolve(args, file_values, "phase_qubits", 3, int),
        jobs=_resolve(args, file_values, "jobs", 1, int),
        timing=bool(_resolve(args, file_values, "timing", False, lambda v: v not in ("0", "false", ""))),
        noise_on=_resolve(args, file_values, "noise_on", "points3d", str),
    )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    file_values = _load_config_file(args.config) if getattr(args, "config", None) else {}

    if args.command == "run":
        return cmd_run(_run_config_from(args, file_values))
    if args.command == "compare":
        config_a = _run_config_from(args, file_values)
        config_b = _run_config_from(args, file_values, suffix="_b")
        if getattr(args, "seeds_b", None) is None and "seeds_b" not in file_values:
            config_b = RunConfig(**{**config_b.__dict__, "seeds": config_a.seeds})
        out = _resolve(args, file_values, "out", ".", str)
        return cmd_compare(config_a, config_b, out)
    if args.command == "noise":
        if args.preset:
            rates = RATE_PRESETS[args.preset]
        else:
            rates = ErrorRates(
                args.one_qubit_rate if args.one_qubit_rate is not None else 0.0,
                args.two_qubit_rate if args.two_qubit_rate is not None else 0.0,
                args.measurement_rate if args.measurement_rate is not None else 0.0,
            )
        return cmd_noise(
            rates, args.measured_qubits, args.iterations, args.own_counts,
            args.slices, args.phase_qubits, args.p_single,
        )
    if args.command == "gen":
        seeds = args.seeds if args.seeds is not None else DEFAULT_SEEDS
        out = args.out if args.out is not None else "."
        return cmd_gen(seeds, out, args.noise_on or "points3d")
    return 2


if __name__ == "__main__":
    sys.exit(main())
