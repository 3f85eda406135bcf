"""Command-line interface.

Every pipeline stage is reachable as a subcommand::

    zonekit opf run       --case grid.json [--no-limits]
    zonekit ptdf dump     --case grid.json [--generalized]
    zonekit scenario gen  --case grid.json --count 100 --seed 42
    zonekit zones lmp     --case grid.json --gen-scenarios 100 --seed 42 --max-k 6
    zonekit zones ptdf    --case grid.json --gen-scenarios 100 --seed 42
    zonekit zones compare --case grid.json --gen-scenarios 100 --seed 42 --max-k 6

Flags override an optional TOML or JSON config file (--config); config
keys use the flag names with underscores, plus a "tolerances" table for
numerical tolerance overrides.  Logs go to stderr; machine-readable
output goes to stdout or files.  Floats in reports are fixed at 12
significant digits, so identical runs produce byte-identical files at
any parallelism degree.

Exit codes: 0 success, 1 usage/validation/config errors, 2 runs
dominated by infeasibility (the OPF or more than half the scenario set
unservable).
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from types import SimpleNamespace

from .clustering import partition_to_dot
from .config import DEFAULT_TOLERANCES
from .grid import CaseParseError, NetworkValidationError, load_case
from .opf import OpfError, dc_opf
from .pipeline import compare_methods, lmp_pipeline, sequential_partition
from .ptdf import generalized_ptdf, ptdf_matrix
from .scenarios import (
    ConfigError,
    ScenarioFormatError,
    WindParams,
    load_scenarios_csv,
    monte_carlo_scenarios,
    write_scenarios_csv,
)
from .welfare import WelfareError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2

_ALL_FORMATS = ("json", "csv", "dot")

#: every option's resting value; config files may override any of these,
#: explicit flags override both
_DEFAULTS = {
    "case": None,
    "parallel": 1,
    "out_dir": ".",
    "formats": "json,csv,dot",
    "output": None,
    "no_limits": False,
    "generalized": False,
    "reference": 0,
    "count": 100,
    "seed": 0,
    "gen_scenarios": None,
    "scenarios_csv": None,
    "wind_shape": 2.0,
    "wind_scale": 8.0,
    "cut_in": 3.0,
    "rated": 12.0,
    "cut_out": 25.0,
    "shared_weather": False,
    "max_k": 6,
    "k_scenario": None,
    "frequency_floor": 0.0,
    "second_pass": False,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this tool reserves 2
    # for infeasibility-dominated runs
    def error(self, message):
        raise _UsageError(message)


def _fmt(x) -> str:
    return f"{float(x):.12g}"


def _round_floats(obj):
    """Pin every float to 12 significant digits for reproducible files."""
    if isinstance(obj, float):
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _dump_json(data: dict, target) -> None:
    text = json.dumps(_round_floats(data), indent=2) + "\n"
    if hasattr(target, "write"):
        target.write(text)
    else:
        Path(target).write_text(text, encoding="utf-8")


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json") or text.lstrip().startswith("{"):
        return json.loads(text)
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def _opt(parser, *names, **kwargs):
    kwargs.setdefault("default", argparse.SUPPRESS)
    parser.add_argument(*names, **kwargs)


def _flag(parser, *names, **kwargs):
    parser.add_argument(*names, action="store_true", default=argparse.SUPPRESS, **kwargs)


def _add_common(parser):
    _opt(parser, "--case", help="case file (MATPOWER or JSON)")
    _opt(parser, "--parallel", type=int, metavar="N", help="parallelism degree (default 1)")
    _opt(parser, "--out-dir", help="directory for output files (default .)")
    _opt(parser, "--formats", help="comma-separated subset of json,csv,dot (default all)")


def _add_wind_params(parser):
    _opt(parser, "--wind-shape", type=float, help="Weibull shape (default 2.0)")
    _opt(parser, "--wind-scale", type=float, help="Weibull scale in m/s (default 8.0)")
    _opt(parser, "--cut-in", type=float, help="turbine cut-in speed, m/s (default 3)")
    _opt(parser, "--rated", type=float, help="turbine rated speed, m/s (default 12)")
    _opt(parser, "--cut-out", type=float, help="turbine cut-out speed, m/s (default 25)")
    _flag(parser, "--shared-weather", help="one wind draw per scenario shared by all farms")


def _add_scenario_source(parser):
    _opt(parser, "--gen-scenarios", type=int, metavar="N",
         help="draw N Monte Carlo wind scenarios (default 100)")
    _opt(parser, "--seed", type=int, help="RNG seed for scenario generation (default 0)")
    _opt(parser, "--scenarios-csv", metavar="PATH",
         help="load scenarios from a CSV file instead of generating them")
    _add_wind_params(parser)


def build_parser() -> _Parser:
    parser = _Parser(prog="zonekit", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, help="TOML or JSON config file")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v info, -vv debug (stderr)")
    groups = parser.add_subparsers(dest="group", required=True)

    opf = groups.add_parser("opf", help="single optimal power flow runs")
    opf_cmds = opf.add_subparsers(dest="command", required=True)
    opf_run = opf_cmds.add_parser("run", help="solve one DC OPF and print the dispatch")
    _add_common(opf_run)
    _flag(opf_run, "--no-limits", help="relax all transmission limits")
    _opt(opf_run, "-o", "--output", help="write JSON here instead of stdout")

    ptdf = groups.add_parser("ptdf", help="distribution-factor matrices")
    ptdf_cmds = ptdf.add_subparsers(dest="command", required=True)
    ptdf_dump = ptdf_cmds.add_parser("dump", help="dump H or S as CSV")
    _add_common(ptdf_dump)
    _flag(ptdf_dump, "--generalized",
          help="dump the reference-independent operator S instead of H")
    _opt(ptdf_dump, "--reference", type=int, help="reference bus for H (default 0)")
    _opt(ptdf_dump, "-o", "--output", help="write CSV here instead of stdout")

    scenario = groups.add_parser("scenario", help="wind scenario files")
    scenario_cmds = scenario.add_subparsers(dest="command", required=True)
    scenario_gen = scenario_cmds.add_parser("gen", help="generate a scenario CSV")
    _add_common(scenario_gen)
    _opt(scenario_gen, "--count", type=int, help="number of scenarios (default 100)")
    _opt(scenario_gen, "--seed", type=int, help="RNG seed (default 0)")
    _add_wind_params(scenario_gen)
    _opt(scenario_gen, "-o", "--output", help="write CSV here instead of stdout")

    zones = groups.add_parser("zones", help="zonal division pipelines")
    zones_cmds = zones.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("lmp", "consensus clustering of nodal prices"),
        ("ptdf", "sequential congestion-contribution splitting"),
        ("compare", "run both methods and compare"),
    ):
        sub = zones_cmds.add_parser(name, help=help_text)
        _add_common(sub)
        _add_scenario_source(sub)
        _opt(sub, "--max-k", type=int, help="largest zone count to consider (default 6)")
        _opt(sub, "--k-scenario", type=int,
             help="zones per scenario before consensus (default: max-k)")
        _opt(sub, "--frequency-floor", type=float,
             help="skip lines congested less often than this fraction (default 0)")
        _flag(sub, "--second-pass", help="revisit rejected lines once after all splits")
    return parser


def _merge_options(args: argparse.Namespace) -> SimpleNamespace:
    """defaults <- config file <- explicit flags, plus tolerance overrides."""
    merged = dict(_DEFAULTS)
    tolerances = DEFAULT_TOLERANCES
    if args.config:
        config = _load_config_file(args.config)
        overrides = config.pop("tolerances", {})
        try:
            tolerances = tolerances.with_(**overrides)
        except TypeError as exc:
            raise ConfigError(f"bad tolerances section: {exc}")
        for key, value in config.items():
            dest = key.replace("-", "_")
            if dest not in merged:
                raise ConfigError(f"unknown config key {key!r}")
            merged[dest] = value
    for key, value in vars(args).items():
        if key not in ("config", "verbose", "group", "command"):
            merged[key] = value
    merged["tolerances"] = tolerances
    merged["group"] = args.group
    merged["command"] = args.command
    return SimpleNamespace(**merged)


def _wind_params(opts) -> WindParams:
    return WindParams(
        shape=opts.wind_shape,
        scale=opts.wind_scale,
        cut_in=opts.cut_in,
        rated=opts.rated,
        cut_out=opts.cut_out,
        shared_weather=opts.shared_weather,
    )


def _require_case(opts):
    if not opts.case:
        raise ConfigError("a case file is required (--case or config key 'case')")
    return load_case(opts.case)


def _scenarios(opts, network):
    if opts.scenarios_csv:
        return load_scenarios_csv(opts.scenarios_csv, network)
    count = opts.gen_scenarios if opts.gen_scenarios is not None else 100
    return monte_carlo_scenarios(network, count, opts.seed, _wind_params(opts))


def _scenario_provenance(opts) -> dict:
    if opts.scenarios_csv:
        return {"source": "csv", "path": opts.scenarios_csv}
    return {
        "source": "monte_carlo",
        "count": opts.gen_scenarios if opts.gen_scenarios is not None else 100,
        "seed": opts.seed,
    }


def _formats(opts):
    chosen = [f.strip() for f in opts.formats.split(",") if f.strip()]
    for f in chosen:
        if f not in _ALL_FORMATS:
            raise ConfigError(f"unknown output format {f!r}")
    return set(chosen)


def _write_report_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "candidate", "k", "energy_value", "balancing_cost",
                         "congestion_rent", "total", "infeasible_count"])
        writer.writerows(rows)


def _report_rows(result):
    rows = []
    for partition, cost in result.report.per_partition.items():
        rows.append([
            result.method,
            "-".join(map(str, partition.zone_of)),
            partition.k,
            _fmt(cost.energy_value),
            _fmt(cost.balancing_cost),
            _fmt(cost.congestion_rent),
            _fmt(cost.total),
            cost.infeasible_count,
        ])
    return rows


def _infeasibility_dominated(result) -> bool:
    report = result.report
    return report.scenarios_excluded > report.scenarios_used


# ---------------------------------------------------------------------------
# Command bodies


def _cmd_opf_run(opts) -> int:
    network = _require_case(opts)
    solution = dc_opf(network, enforce_limits=not opts.no_limits, tolerances=opts.tolerances)
    _dump_json(solution.to_dict(), opts.output or sys.stdout)
    if not solution.feasible:
        logger.error("OPF infeasible: %s", solution.message)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_ptdf_dump(opts) -> int:
    network = _require_case(opts)
    h = ptdf_matrix(network, opts.reference)
    matrix = generalized_ptdf(h, network).values if opts.generalized else h.values
    out = open(opts.output, "w", encoding="utf-8", newline="") if opts.output else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["branch", *[bus.label or str(bus.id) for bus in network.buses]])
        for br in network.branches:
            writer.writerow([br.id, *[_fmt(v) for v in matrix[br.id]]])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _cmd_scenario_gen(opts) -> int:
    network = _require_case(opts)
    scenario_set = monte_carlo_scenarios(network, opts.count, opts.seed, _wind_params(opts))
    write_scenarios_csv(scenario_set, network, opts.output or sys.stdout)
    return EXIT_OK


def _write_method_outputs(result, network, out_dir: Path, formats, suffix: str, extra: dict):
    if "json" in formats:
        _dump_json({**extra, **result.to_dict()}, out_dir / f"{suffix}_result.json")
    if "csv" in formats:
        _write_report_csv(out_dir / f"report_{suffix}.csv", _report_rows(result))
    if "dot" in formats:
        dot = partition_to_dot(result.report.best, network, name=f"zones_{suffix}")
        (out_dir / f"zones_{suffix}.dot").write_text(dot, encoding="utf-8")


def _cmd_zones_single(opts, method: str) -> int:
    network = _require_case(opts)
    scenario_set = _scenarios(opts, network)
    out_dir = Path(opts.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = _formats(opts)
    if method == "lmp":
        result = lmp_pipeline(
            network, scenario_set, opts.max_k, opts.k_scenario,
            tolerances=opts.tolerances, parallelism=opts.parallel,
        )
    else:
        result = sequential_partition(
            network, scenario_set,
            tolerances=opts.tolerances, parallelism=opts.parallel,
            frequency_floor=opts.frequency_floor, second_pass=opts.second_pass,
        )
    extra = {"case": opts.case, "scenarios": _scenario_provenance(opts)}
    _write_method_outputs(result, network, out_dir, formats, method, extra)
    best = result.report.best
    print(f"method={result.method} best_k={best.k} "
          f"best_total={_fmt(result.best_total)} zones={'-'.join(map(str, best.zone_of))}")
    return EXIT_INFEASIBLE if _infeasibility_dominated(result) else EXIT_OK


def _cmd_zones_compare(opts) -> int:
    network = _require_case(opts)
    scenario_set = _scenarios(opts, network)
    out_dir = Path(opts.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = _formats(opts)
    comparison = compare_methods(
        network, scenario_set, opts.max_k, opts.k_scenario,
        tolerances=opts.tolerances, parallelism=opts.parallel,
    )
    extra = {"case": opts.case, "scenarios": _scenario_provenance(opts)}
    if "json" in formats:
        _dump_json({**extra, **comparison.to_dict()}, out_dir / "comparison.json")
    if "csv" in formats:
        rows = _report_rows(comparison.lmp) + _report_rows(comparison.congestion)
        _write_report_csv(out_dir / "report.csv", rows)
    if "dot" in formats:
        for result, suffix in ((comparison.lmp, "lmp"), (comparison.congestion, "ptdf")):
            dot = partition_to_dot(result.report.best, network, name=f"zones_{suffix}")
            (out_dir / f"zones_{suffix}.dot").write_text(dot, encoding="utf-8")

    for row in comparison.table():
        print(f"{row['method']}: k={row['best_k']} total={_fmt(row['best_total'])} "
              f"zones={'-'.join(map(str, row['best_partition']))}")
    print(f"winner: {comparison.winner}")
    dominated = _infeasibility_dominated(comparison.lmp) or _infeasibility_dominated(comparison.congestion)
    return EXIT_INFEASIBLE if dominated else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            stream=sys.stderr,
            level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
            format="%(levelname)s %(name)s: %(message)s",
        )
        opts = _merge_options(args)
        if opts.group == "opf":
            return _cmd_opf_run(opts)
        if opts.group == "ptdf":
            return _cmd_ptdf_dump(opts)
        if opts.group == "scenario":
            return _cmd_scenario_gen(opts)
        if opts.group == "zones":
            if opts.command == "compare":
                return _cmd_zones_compare(opts)
            return _cmd_zones_single(opts, opts.command)
        raise AssertionError(f"unhandled group {opts.group}")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CaseParseError, NetworkValidationError, ConfigError, ScenarioFormatError,
            FileNotFoundError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (WelfareError, OpfError) as exc:
        logger.error("%s", exc)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
