"""Command-line front end.

Subcommands map one-to-one onto the library: ``power``, ``samplesize``,
``mde``, ``netsize``, ``optimal-p``, ``ratios`` for the scalar solvers,
``table`` and ``curve`` for design-grid sweeps, and ``simulate`` for the
Monte Carlo oracle. Every run echoes its fully resolved configuration.
Exit codes: 0 success, 1 usage error, 2 domain error, 3 no solution within
bounds.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core_model import DesignParams, EffectSizes, ModelCoefficients
from .errors import DomainError, InsufficientData, NoSolution
from .power import (
    TestKind,
    TestSpec,
    analytic_power,
    k_ratios,
    mde,
    optimal_p,
    required_k,
    solve_network_size,
)
from .simulate import (
    MAIN_TEST_KINDS,
    dataset_to_csv,
    empirical_power,
    generate_dataset,
)

USAGE_EXIT = 1
DOMAIN_EXIT = 2
NO_SOLUTION_EXIT = 3

ND = "ND"  # marker for design points with no solution


def _float_list(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    return [float(part) for part in text.split(",")]


def _test_list(text: str) -> list[TestKind]:
    text = text.strip().lower()
    if text == "all":
        return list(MAIN_TEST_KINDS)
    return [TestKind.parse(part) for part in text.split(",") if part.strip()]


def _bool_value(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract wants 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE_EXIT)


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DomainError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


@dataclass(frozen=True)
class Option:
    """One CLI option: flag name, value parser, hard default, help text."""

    name: str
    parse: Callable
    default: object
    help: str
    required: bool = False
    flag: bool = False  # bare flag: value optional, presence means true

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


_COMMON = [
    Option("config", str, None, "key = value config file; explicit flags override it"),
    Option("format", str, None, "output format: text, json, or csv"),
]
_DESIGN = [
    Option("n", float, 2.0, "network members per index participant"),
    Option("p", float, 0.5, "treatment allocation probability"),
    Option("icc", float, 0.1, "outcome intra-class correlation"),
    Option("var", float, 1.0, "total outcome variance"),
    Option("sigma2-y1", float, None, "index outcome variance for the alternative estimator"),
]
_EFFECTS = [
    Option("dtau", float, -0.35, "individual effect size"),
    Option("ddelta", float, -0.35, "spillover effect size"),
]
_SPEC = [
    Option("alpha", float, 0.05, "two-sided Type I error rate"),
    Option("power", float, 0.8, "target power"),
]
_BOUNDS = [
    Option("kmax", int, 1_000_000, "upper bound for the conjunctive-test network search"),
    Option("nmax", float, 1e4, "upper bound of the network-size bracket"),
]

OPTION_SETS: dict[str, list[Option]] = {
    "power": _COMMON + _DESIGN + _EFFECTS + _SPEC + [
        Option("test", str, None, "test kind", required=True),
        Option("K", int, None, "number of egonetworks", required=True),
    ],
    "samplesize": _COMMON + _DESIGN + _EFFECTS + _SPEC + _BOUNDS + [
        Option("test", str, None, "test kind", required=True),
    ],
    "mde": _COMMON + _DESIGN + _SPEC + [
        Option("test", str, None, "test kind", required=True),
        Option("K", int, None, "number of egonetworks", required=True),
        Option("fixed-other", float, None, "the pinned effect for the joint/conjunctive tests"),
        Option("solve-for", str, "tau", "which effect to solve for: tau or delta"),
    ],
    "netsize": _COMMON + _DESIGN + _EFFECTS + _SPEC + _BOUNDS + [
        Option("test", str, None, "test kind", required=True),
        Option("K", int, None, "number of egonetworks", required=True),
    ],
    "optimal-p": _COMMON + _DESIGN + _EFFECTS + _SPEC + [
        Option("test", str, None, "test kind", required=True),
    ],
    "ratios": _COMMON + _DESIGN + _EFFECTS + _SPEC,
    "table": _COMMON + _SPEC + _BOUNDS + [
        Option("layout", str, "k", "table layout: k, mde, or n"),
        Option("n", float, 2.0, "network members per index participant"),
        Option("icc", _float_list, [0.1, 0.2, 0.05], "comma-separated ICC grid"),
        Option("p", _float_list, [0.5, 0.3, 0.7], "comma-separated allocation grid"),
        Option("dtau", _float_list, [-0.35], "comma-separated individual-effect grid"),
        Option("ddelta", _float_list, [-0.35], "comma-separated spillover-effect grid"),
        Option("var", float, 1.0, "total outcome variance"),
        Option("K", int, 186, "egonetwork count for the mde and n layouts"),
    ],
    "curve": _COMMON + _SPEC + _BOUNDS + [
        Option("mode", str, "k", "sweep target: k (required networks) or n (network size)"),
        Option("n", float, 2.0, "network members (mode k)"),
        Option("p", float, 0.5, "allocation probability"),
        Option("dtau", float, 1.0, "individual effect size"),
        Option("ddelta", float, 1.0, "spillover effect size"),
        Option("var", float, 1.0, "total outcome variance"),
        Option("K", int, 30, "egonetwork count (mode n)"),
        Option("icc", _float_list, None, "explicit ICC grid; overrides the from/to/step sweep"),
        Option("icc-from", float, 0.0, "sweep start"),
        Option("icc-to", float, 0.9, "sweep end (inclusive up to rounding)"),
        Option("icc-step", float, 0.05, "sweep step"),
    ],
    "simulate": _COMMON + _DESIGN + _SPEC + [
        Option("test", _test_list, list(MAIN_TEST_KINDS), "comma-separated test kinds, or 'all'"),
        Option("K", int, None, "number of egonetworks", required=True),
        Option("reps", int, 10_000, "Monte Carlo replicates"),
        Option("seed", int, 20240501, "master seed"),
        Option("gamma", float, 0.0, "true control-arm mean"),
        Option("dtau", float, 0.0, "true individual effect"),
        Option("ddelta", float, 0.0, "true spillover effect"),
        Option("null", _bool_value, False, "force both true effects to 0", flag=True),
        Option("mode", str, "known_icc", "variance handling: known_icc or estimated_icc"),
        Option("workers", int, 1, "parallel worker processes"),
        Option("write-dataset", str, None, "also write the first replicate's dataset CSV here"),
    ],
}

_COMMAND_HELP = {
    "power": "analytic power of one test at a given K",
    "samplesize": "required number of egonetworks for a target power",
    "mde": "minimum detectable effect size at a given K",
    "netsize": "required network size n at a given K",
    "optimal-p": "allocation probability minimizing the required K",
    "ratios": "closed-form ratios between required-K formulas",
    "table": "design-grid tables (k, mde, or n layout)",
    "curve": "ICC sweeps of required K or required n",
    "simulate": "Monte Carlo rejection rates and estimator calibration",
}


def _resolve(args: argparse.Namespace, command: str) -> dict:
    """Merge flag values over config-file values over hard defaults."""
    options = OPTION_SETS[command]
    config_values: dict[str, str] = {}
    if getattr(args, "config", None):
        config_values = _read_config_file(args.config)
    resolved: dict = {}
    for opt in options:
        raw = getattr(args, opt.dest, None)
        if raw is None:
            raw = config_values.get(opt.dest)
        if raw is None:
            if opt.required:
                raise DomainError(f"missing required option --{opt.name}")
            resolved[opt.dest] = opt.default
        else:
            try:
                resolved[opt.dest] = opt.parse(raw) if isinstance(raw, str) else raw
            except ValueError as exc:
                raise DomainError(f"bad value for --{opt.name}: {raw!r} ({exc})") from None
    return resolved


def _echo_value(value: object) -> object:
    if isinstance(value, list):
        return [getattr(item, "value", item) for item in value]
    return getattr(value, "value", value)


def _design_from(resolved: dict) -> DesignParams:
    return DesignParams(
        n=resolved["n"],
        p=resolved["p"],
        rho_y=resolved["icc"],
        sigma2_y=resolved["var"],
        sigma2_y1=resolved.get("sigma2_y1"),
    )


def _effects_from(resolved: dict) -> EffectSizes:
    return EffectSizes(delta_tau=resolved["dtau"], delta_delta=resolved["ddelta"])


def _spec_from(resolved: dict) -> TestSpec:
    return TestSpec(alpha=resolved["alpha"], power_target=resolved["power"])


def _config_echo(resolved: dict) -> dict:
    return {key: _echo_value(value) for key, value in resolved.items()}


def _emit(resolved: dict, results: dict, fmt: str | None, warnings: list[str] | None = None) -> None:
    """Scalar-result output with the resolved config echoed."""
    warnings = warnings or []
    fmt = fmt or "text"
    echo = _config_echo(resolved)
    if fmt == "json":
        print(json.dumps({"config": echo, "results": results, "warnings": warnings},
                         indent=2, sort_keys=True))
    elif fmt == "csv":
        for key in sorted(echo):
            print(f"# {key} = {echo[key]}")
        keys = list(results)
        print(",".join(keys))
        print(",".join(str(results[k]) for k in keys))
    elif fmt == "text":
        print("config:")
        for key in sorted(echo):
            print(f"  {key} = {echo[key]}")
        print("results:")
        for key, value in results.items():
            print(f"  {key} = {value}")
        for warning in warnings:
            print(f"warning: {warning}")
    else:
        raise DomainError(f"unknown format {fmt!r}")


def _emit_rows(resolved: dict, header: list[str], rows: list[list], fmt: str | None) -> None:
    """Tabular output; csv keeps the config echo in leading comment lines."""
    fmt = fmt or "csv"
    echo = _config_echo(resolved)
    if fmt == "json":
        print(json.dumps(
            {"config": echo,
             "results": [dict(zip(header, row)) for row in rows],
             "warnings": []},
            indent=2, sort_keys=True))
        return
    if fmt not in ("csv", "text"):
        raise DomainError(f"unknown format {fmt!r}")
    for key in sorted(echo):
        print(f"# {key} = {echo[key]}")
    print(",".join(header))
    for row in rows:
        print(",".join(str(cell) for cell in row))


def _cmd_power(args: argparse.Namespace) -> int:
    resolved = _resolve(args, "power")
    kind = TestKind.parse(resolved["test"])
    value = analytic_power(
        kind, _design_from(resolved), _effects_from(resolved), _spec_from(resolved), resolved["K"]
    )
    _emit(resolved, {"power": value}, resolved["format"])
    return 0


def _cmd_samplesize(args: argparse.Namespace) -> int:
    resolved = _resolve(args, "samplesize")
    kind = TestKind.parse(resolved["test"])
    result = required_k(
        kind, _design_from(resolved), _effects_from(resolved), _spec_from(resolved),
        k_max=resolved["kmax"],
    )
    _emit(
        resolved,
        {
            "K": result.k_required,
            "k_continuous": result.k_continuous,
            "achieved_power": result.achieved_power,
        },
        resolved["format"],
    )
    return 0


def _cmd_mde(args: argparse.Namespace) -> int:
    resolved = _resolve(args, "mde")
    kind = TestKind.parse(resolved["test"])
    value = mde(
        kind, _design_from(resolved), _spec_from(resolved), resolved["K"],
        fixed_other=resolved["fixed_other"], solve_for=resolved["solve_for"],
    )
    _emit(resolved, {"mde": value}, resolved["format"])
    return 0


def _cmd_netsize(args: argparse.Namespace) -> int:
    resolved = _resolve(args, "netsize")
    kind = TestKind.parse(resolved["test"])
    value = solve_network_size(
        kind, _effects_from(resolved), _spec_from(resolved), resolved["K"],
        p=resolved["p"], rho_y=resolved["icc"], sigma2_y=resolved["var"],
        sigma2_y1=resolved.get("sigma2_y1"), n_max=resolved["nmax"],
    )
    _emit(resolved, {"n": value}, resolved["format"])
    return 0


def _cmd_optimal_p(args: argparse.Namespace) -> int:
    resolved = _resolve(args, "optimal-p")
    kind = TestKind.parse(resolved["test"])
    value = optimal_p(
        kind, resolved["n"], resolved["icc"],
        effects=_effects_from(resolved), spec=_spec_from(resolved), sigma2_y=resolved["var"],
    )
    _emit(resolved, {"p": value}, resolved["format"])
    return 0


def _cmd_ratios(args: argparse.Namespace) -> int:
    resolved = _resolve(args, "ratios")
    ratios = k_ratios(_design_from(resolved), _effects_from(resolved), _spec_from(resolved))
    _emit(
        resolved,
        {
            "K_delta/K_tau": ratios.delta_vs_tau,
            "K_J/K_tau": ratios.joint_vs_tau,
            "K_J/K_delta": ratios.joint_vs_delta,
            "K_tau/K_o": ratios.tau_vs_overall,
            "K_delta/K_o": ratios.delta_vs_overall,
            "K_J/K_o": ratios.joint_vs_overall,
        },
        resolved["format"],
    )
    return 0


_TABLE_KIND_ORDER = (TestKind.HSPE, TestKind.HIE, TestKind.HISPJ, TestKind.HISPC, TestKind.HOE)
_TABLE_K_COLUMNS = ["K_delta", "K_tau", "K_J", "K_C", "K_o"]
_TABLE_N_COLUMNS = ["n_tau", "n_delta", "n_J", "n_C", "n_o"]
_NETSIZE_KIND_ORDER = (TestKind.HIE, TestKind.HSPE, TestKind.HISPJ, TestKind.HISPC, TestKind.HOE)


def _cmd_table(args: argparse.Namespace) -> int:
    resolved = _resolve(args, "table")
    layout = resolved["layout"]
    spec = _spec_from(resolved)
    rows: list[list] = []
    if layout == "k":
        header = ["rho_y", "p", "delta_tau", "delta_delta"] + _TABLE_K_COLUMNS
        for rho in resolved["icc"]:
            for p in resolved["p"]:
                for dtau in resolved["dtau"]:
                    for ddelta in resolved["ddelta"]:
                        design = DesignParams(
                            n=resolved["n"], p=p, rho_y=rho, sigma2_y=resolved["var"]
                        )
                        effects = EffectSizes(delta_tau=dtau, delta_delta=ddelta)
                        cells: list = []
                        for kind in _TABLE_KIND_ORDER:
                            try:
                                cells.append(
                                    required_k(kind, design, effects, spec,
                                               k_max=resolved["kmax"]).k_required
                                )
                            except NoSolution:
                                cells.append(ND)
                        rows.append([rho, p, dtau, ddelta] + cells)
    elif layout == "mde":
        header = ["rho_y", "p", "mde_tau", "mde_delta", "mde_overall"]
        for rho in resolved["icc"]:
            for p in resolved["p"]:
                design = DesignParams(n=resolved["n"], p=p, rho_y=rho, sigma2_y=resolved["var"])
                rows.append(
                    [rho, p]
                    + [
                        mde(kind, design, spec, resolved["K"])
                        for kind in (TestKind.HIE, TestKind.HSPE, TestKind.HOE)
                    ]
                )
    elif layout == "n":
        header = ["rho_y", "p", "delta_tau", "delta_delta"] + _TABLE_N_COLUMNS
        for rho in resolved["icc"]:
            for p in resolved["p"]:
                for dtau in resolved["dtau"]:
                    for ddelta in resolved["ddelta"]:
                        effects = EffectSizes(delta_tau=dtau, delta_delta=ddelta)
                        cells = []
                        for kind in _NETSIZE_KIND_ORDER:
                            try:
                                cells.append(solve_network_size(
                                    kind, effects, spec, resolved["K"],
                                    p=p, rho_y=rho, sigma2_y=resolved["var"],
                                    n_max=resolved["nmax"],
                                ))
                            except NoSolution:
                                cells.append(ND)
                        rows.append([rho, p, dtau, ddelta] + cells)
    else:
        raise DomainError(f"unknown layout {layout!r}; expected k, mde, or n")
    _emit_rows(resolved, header, rows, resolved["format"])
    return 0


def _cmd_curve(args: argparse.Namespace) -> int:
    resolved = _resolve(args, "curve")
    if resolved["icc"] is not None:
        grid = list(resolved["icc"])
    else:
        grid = []
        value = resolved["icc_from"]
        while value <= resolved["icc_to"] + 1e-12:
            grid.append(round(value, 12))
            value += resolved["icc_step"]
    spec = _spec_from(resolved)
    effects = EffectSizes(delta_tau=resolved["dtau"], delta_delta=resolved["ddelta"])
    rows: list[list] = []
    if resolved["mode"] == "k":
        header = ["rho_y"] + _TABLE_K_COLUMNS
        for rho in grid:
            design = DesignParams(
                n=resolved["n"], p=resolved["p"], rho_y=rho, sigma2_y=resolved["var"]
            )
            cells: list = []
            for kind in _TABLE_KIND_ORDER:
                try:
                    cells.append(
                        required_k(kind, design, effects, spec, k_max=resolved["kmax"]).k_required
                    )
                except NoSolution:
                    cells.append(ND)
            rows.append([rho] + cells)
    elif resolved["mode"] == "n":
        header = ["rho_y"] + _TABLE_N_COLUMNS
        for rho in grid:
            cells = []
            for kind in _NETSIZE_KIND_ORDER:
                try:
                    cells.append(solve_network_size(
                        kind, effects, spec, resolved["K"],
                        p=resolved["p"], rho_y=rho, sigma2_y=resolved["var"],
                        n_max=resolved["nmax"],
                    ))
                except NoSolution:
                    cells.append(ND)
            rows.append([rho] + cells)
    else:
        raise DomainError(f"unknown mode {resolved['mode']!r}; expected k or n")
    _emit_rows(resolved, header, rows, resolved["format"])
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    resolved = _resolve(args, "simulate")
    kinds = resolved["test"]
    truth = ModelCoefficients(
        gamma=resolved["gamma"],
        tau=0.0 if resolved["null"] else resolved["dtau"],
        delta=0.0 if resolved["null"] else resolved["ddelta"],
    )
    design = _design_from(resolved)
    report = empirical_power(
        kinds, design, truth, _spec_from(resolved), resolved["K"],
        replicates=resolved["reps"], seed=resolved["seed"],
        mode=resolved["mode"].replace("-", "_"), workers=resolved["workers"],
    )
    if resolved["write_dataset"]:
        child = np.random.SeedSequence(resolved["seed"]).spawn(1)[0]
        data = generate_dataset(design, resolved["K"], truth, child)
        with open(resolved["write_dataset"], "w", encoding="utf-8", newline="") as handle:
            dataset_to_csv(data, handle)
    fmt = resolved["format"] or "json"
    if fmt not in ("json", "text"):
        raise DomainError("simulate reports are JSON; use --format json or text")
    payload = {
        "config": _config_echo(resolved),
        "results": report.results_dict(),
        "warnings": report.warnings,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "power": _cmd_power,
    "samplesize": _cmd_samplesize,
    "mde": _cmd_mde,
    "netsize": _cmd_netsize,
    "optimal-p": _cmd_optimal_p,
    "ratios": _cmd_ratios,
    "table": _cmd_table,
    "curve": _cmd_curve,
    "simulate": _cmd_simulate,
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="enrdesign", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, options in OPTION_SETS.items():
        cmd_parser = sub.add_parser(name, help=_COMMAND_HELP[name])
        for opt in options:
            if opt.flag:
                cmd_parser.add_argument(
                    f"--{opt.name}", dest=opt.dest, nargs="?", const="true",
                    default=None, help=opt.help,
                )
            else:
                cmd_parser.add_argument(
                    f"--{opt.name}", dest=opt.dest, type=str, default=None, help=opt.help
                )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage error (1) or --help (0)
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    handler = _COMMANDS[args.command]
    try:
        return handler(args)
    except NoSolution as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return NO_SOLUTION_EXIT
    except (DomainError, InsufficientData, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DOMAIN_EXIT


if __name__ == "__main__":
    sys.exit(main())
