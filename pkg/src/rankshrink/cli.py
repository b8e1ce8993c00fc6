"""Command-line surface.

Four commands: ``shrink`` corrects a user-supplied file of statistics,
``simulate`` reproduces the simulation tables, ``theorem1`` runs the
convergence experiment, and ``curves`` exports rank-ordered estimate curves.
The command may be given positionally or with --command.  Every delimited
output starts with header lines recording the exact invocation, and a PNG
figure is rendered next to it unless --no-plot is given.

Exit status: 0 success, 1 I/O failure, 2 invalid input or configuration,
3 numerical failure.  Errors are printed to stderr as a one-line JSON
record.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .core import (
    ConfigError,
    InputFormatError,
    InvalidInputError,
    NumericalError,
    RngSpec,
    rank_sample,
)
from .gauss_bias import boot1, boot2, james_stein, mc_bias, oracle_estimates
from .harness import (
    ANOVA3_SCHEMES,
    GAUSSIAN_SCHEMES,
    ScenarioSpec,
    gen_scenario,
    make_prior,
    run_table,
    t_to_z,
    theorem1_experiment,
    two_sample_t,
)
from .report import (
    format_json,
    read_matrix_file,
    read_z_file,
    render_curves_figure,
    render_shrink_figure,
    render_table_figure,
    render_theorem1_figure,
    write_csv,
)
from .tweedie import bin_z, fit_lindsey, tweedie_correct

__all__ = ["main"]

_COMMANDS = ("shrink", "simulate", "theorem1", "curves")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankshrink",
        description="Selection-adjusted estimation for large-scale "
                    "simultaneous inference.")
    parser.add_argument("positional_command", nargs="?", choices=_COMMANDS,
                        metavar="command",
                        help="one of: " + ", ".join(_COMMANDS))
    parser.add_argument("--command", choices=_COMMANDS, dest="command_flag",
                        help="alternative to the positional command")
    parser.add_argument("--input", help="input file (z list or expression matrix)")
    parser.add_argument("--output", help="output file (directory for simulate)")
    parser.add_argument("--schemes", help="scheme list, ranges allowed: G1..G6 or C1,C3")
    parser.add_argument("--family", choices=("gaussian", "anova3"),
                        help="simulation family (default gaussian, or inferred "
                             "from the schemes)")
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--p", type=int, default=1000, help="features per trial")
    parser.add_argument("--n", type=int, default=50,
                        help="observations per feature (anova3)")
    parser.add_argument("--boot-samples", type=int, default=100, dest="boot_samples",
                        help="bootstrap replicates B for boot1")
    parser.add_argument("--outer", type=int, default=100, help="boot2 outer replicates")
    parser.add_argument("--inner", type=int, default=100, help="boot2 inner replicates")
    parser.add_argument("--oracle-samples", type=int, default=10_000,
                        dest="oracle_samples", help="Monte Carlo budget for the oracle")
    parser.add_argument("--bins", type=int, default=90, help="histogram bins for the density fit")
    parser.add_argument("--degree", type=int, default=5,
                        help="density-fit degrees of freedom for the 'tweedie' estimator")
    parser.add_argument("--window", type=int, default=None,
                        help="odd smoothing window for bias curves (default: none)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--estimators",
                        help="comma-separated estimator list (per-command default)")
    parser.add_argument("--welch", action="store_true",
                        help="Welch t statistics for matrix input (default pooled)")
    parser.add_argument("--true-means", dest="true_means",
                        help="file of true means for an oracle column (curves)")
    parser.add_argument("--prior", choices=("two_point", "uniform"),
                        default="two_point", help="theorem1 prior")
    parser.add_argument("--amplitude", type=float, default=None,
                        help="prior amplitude a (default 2 two_point, 1 uniform)")
    parser.add_argument("--quantile", type=float, default=0.9,
                        help="theorem1 quantile t")
    parser.add_argument("--p-grid", dest="p_grid", default="100,500,2000",
                        help="theorem1 sample sizes, comma separated")
    parser.add_argument("--replicates", type=int, default=2000,
                        help="theorem1 Monte Carlo replicates per p")
    parser.add_argument("--no-plot", action="store_true", dest="no_plot",
                        help="skip the PNG figure next to the delimited output")
    return parser


def _split_csv_arg(text: str) -> list[str]:
    return [tok.strip() for tok in text.split(",") if tok.strip()]


def expand_schemes(text: str) -> list[str]:
    """Expand 'G1..G4,G6' style lists into explicit scheme names."""
    out = []
    for token in _split_csv_arg(text):
        if ".." in token:
            lo, hi = token.split("..", 1)
            if not lo or not hi or lo[0] != hi[0]:
                raise ConfigError(f"bad scheme range {token!r}")
            try:
                a, b = int(lo[1:]), int(hi[1:])
            except ValueError:
                raise ConfigError(f"bad scheme range {token!r}") from None
            if b < a:
                raise ConfigError(f"bad scheme range {token!r}")
            out.extend(f"{lo[0]}{i}" for i in range(a, b + 1))
        else:
            out.append(token)
    if not out:
        raise ConfigError("scheme list is empty")
    return out


def _config_lines(command: str, pairs: list[tuple[str, object]]) -> list[str]:
    rendered = " ".join(f"--{key} {value}" for key, value in pairs
                        if value is not None)
    return [f"rankshrink {command} {rendered}".rstrip()]


def _figure_path(output: str) -> str:
    stem, _ = os.path.splitext(output)
    return (stem or output) + ".png"


def _parse_estimator_arg(ns, default: tuple[str, ...]) -> list[str]:
    if ns.estimators is None:
        return list(default)
    names = _split_csv_arg(ns.estimators)
    if not names:
        raise ConfigError("estimator list is empty")
    return names


def _load_input_z(ns) -> np.ndarray:
    if not ns.input:
        raise ConfigError("--input is required")
    if ns.input.endswith(".csv"):
        head = open(ns.input, "r", encoding="utf-8").readline()
        if head.count(",") >= 1:
            matrix, labels = read_matrix_file(ns.input)
            t, df = two_sample_t(matrix, labels, welch=ns.welch)
            return t_to_z(t, df)
    return read_z_file(ns.input)


def cmd_shrink(ns) -> None:
    z = _load_input_z(ns)
    if z.size < 4:
        raise InvalidInputError(f"need at least 4 values, got {z.size}")
    names = _parse_estimator_arg(ns, ("boot1", "boot2", "tweedie", "james_stein"))
    ranked = rank_sample(z)
    root = RngSpec.of(ns.seed)
    window = ns.window
    columns: dict[str, np.ndarray] = {}
    for name in names:
        if name == "boot1":
            est = boot1(ranked, ns.boot_samples, root.child(0), window=window)
        elif name == "boot2":
            est = boot2(ranked, ns.outer, ns.inner, root.child(1), window=window)
        elif name == "james_stein":
            est = james_stein(z)
        elif name == "tweedie" or name.startswith("tweedie"):
            degree = ns.degree if name == "tweedie" else int(name.removeprefix("tweedie"))
            model = fit_lindsey(bin_z(z, ns.bins), degree)
            est = tweedie_correct(z, model)
        else:
            raise ConfigError(f"unknown estimator {name!r} for shrink")
        columns[name] = est.corrected
    header = _config_lines("shrink", [
        ("input", ns.input), ("seed", ns.seed), ("boot-samples", ns.boot_samples),
        ("outer", ns.outer), ("inner", ns.inner), ("bins", ns.bins),
        ("degree", ns.degree), ("window", window),
        ("estimators", ",".join(names)),
        ("welch", ns.welch if ns.welch else None)])
    out_cols = ["index", "z", "rank"] + names
    ranks = np.empty(z.size, dtype=np.int64)
    ranks[ranked.order_index] = np.arange(1, z.size + 1)
    rows = [[i, z[i], int(ranks[i])] + [columns[n][i] for n in names]
            for i in range(z.size)]
    if ns.format == "json":
        payload = {"command": "shrink", "invocation": header[0],
                   "columns": out_cols, "rows": [list(r) for r in rows]}
        _write_text(ns.output, format_json(payload) + "\n")
    else:
        write_csv(ns.output, header, out_cols, rows)
    if not ns.no_plot:
        render_shrink_figure(_figure_path(ns.output), z, columns)


def _infer_family(ns, schemes: list[str]) -> str:
    if ns.family:
        return ns.family
    if all(s in ANOVA3_SCHEMES for s in schemes):
        return "anova3"
    return "gaussian"


def cmd_simulate(ns) -> None:
    schemes = expand_schemes(ns.schemes) if ns.schemes else None
    family = _infer_family(ns, schemes or [])
    if schemes is None:
        schemes = list(GAUSSIAN_SCHEMES if family == "gaussian" else ANOVA3_SCHEMES)
    if family == "gaussian":
        default = ("boot1", "boot2", "tweedie3", "tweedie5", "tweedie7", "oracle")
    else:
        default = ("boot1", "boot2", "oracle")
    names = tuple(_parse_estimator_arg(ns, default))
    outdir = ns.output or "."
    os.makedirs(outdir, exist_ok=True)
    reports = {}
    for scheme in schemes:
        spec = ScenarioSpec(
            family=family, scheme=scheme, p=ns.p, n=ns.n, trials=ns.trials,
            estimators=names, B=ns.boot_samples, B_outer=ns.outer,
            B_inner=ns.inner, oracle_B=ns.oracle_samples, bins=ns.bins,
            window=ns.window, seed=ns.seed)
        reports[scheme] = run_table(spec)
    header = _config_lines("simulate", [
        ("family", family), ("schemes", ",".join(schemes)),
        ("trials", ns.trials), ("p", ns.p),
        ("n", ns.n if family == "anova3" else None),
        ("boot-samples", ns.boot_samples), ("outer", ns.outer),
        ("inner", ns.inner), ("oracle-samples", ns.oracle_samples),
        ("bins", ns.bins if family == "gaussian" else None),
        ("window", ns.window), ("seed", ns.seed),
        ("estimators", ",".join(names))])
    columns = ["estimator"]
    for scheme in schemes:
        columns += [scheme, f"{scheme}_se"]
    rows = []
    for name in names:
        row: list[object] = [name]
        for scheme in schemes:
            row += [reports[scheme].mean(name), reports[scheme].se(name)]
        rows.append(row)
    write_csv(os.path.join(outdir, "table.csv"), header, columns, rows)
    detail = {"command": "simulate", "invocation": header[0], "schemes": {}}
    for scheme in schemes:
        rep = reports[scheme]
        detail["schemes"][scheme] = {
            name: {"per_trial": [float(v) for v in rep.per_trial[name]],
                   "mean": rep.mean(name), "se": rep.se(name)}
            for name in names}
    _write_text(os.path.join(outdir, "detail.json"), format_json(detail) + "\n")
    if not ns.no_plot:
        means = {s: {n: reports[s].mean(n) for n in names} for s in schemes}
        ses = {s: {n: reports[s].se(n) for n in names} for s in schemes}
        render_table_figure(os.path.join(outdir, "table.png"),
                            schemes, list(names), means, ses)


def cmd_theorem1(ns) -> None:
    amplitude = ns.amplitude
    if amplitude is None:
        amplitude = 2.0 if ns.prior == "two_point" else 1.0
    prior = make_prior(ns.prior, amplitude)
    p_grid = [int(tok) for tok in _split_csv_arg(ns.p_grid)]
    rows = theorem1_experiment(prior, ns.quantile, p_grid, ns.replicates, ns.seed)
    header = _config_lines("theorem1", [
        ("prior", ns.prior), ("amplitude", amplitude),
        ("quantile", ns.quantile), ("p-grid", ",".join(map(str, p_grid))),
        ("replicates", ns.replicates), ("seed", ns.seed)])
    columns = ["p", "rank", "empirical", "se", "analytic", "gap"]
    table = [[r.p, r.rank, r.empirical, r.se, r.analytic, r.gap] for r in rows]
    if ns.format == "json":
        payload = {"command": "theorem1", "invocation": header[0],
                   "columns": columns, "rows": [list(r) for r in table]}
        _write_text(ns.output, format_json(payload) + "\n")
    else:
        write_csv(ns.output, header, columns, table)
    if not ns.no_plot:
        render_theorem1_figure(_figure_path(ns.output), rows)


def cmd_curves(ns) -> None:
    window = ns.window
    root = RngSpec.of(ns.seed)
    mu = None
    if ns.input:
        z = _load_input_z(ns)
        if ns.true_means:
            mu = read_z_file(ns.true_means)
            if mu.size != z.size:
                raise InvalidInputError(
                    f"true means length {mu.size} does not match {z.size} values")
    elif ns.schemes:
        schemes = expand_schemes(ns.schemes)
        if len(schemes) != 1:
            raise ConfigError("curves takes exactly one scheme")
        spec = ScenarioSpec(family=_infer_family(ns, schemes), scheme=schemes[0],
                            p=ns.p, n=ns.n, trials=1, estimators=("boot1",),
                            seed=ns.seed)
        if spec.family != "gaussian":
            raise ConfigError("curve export is for the gaussian family")
        mu, z = gen_scenario(spec, 0)
    else:
        raise ConfigError("curves needs --input or --schemes")
    if z.size < 4:
        raise InvalidInputError(f"need at least 4 values, got {z.size}")
    default = ("boot1", "boot2", "james_stein")
    names = _parse_estimator_arg(ns, default)
    if mu is not None and "oracle" not in names and ns.estimators is None:
        names.append("oracle")
    ranked = rank_sample(z)
    curves: dict[str, np.ndarray] = {}
    for name in names:
        if name == "boot1":
            est = boot1(ranked, ns.boot_samples, root.child(0), window=window)
        elif name == "boot2":
            est = boot2(ranked, ns.outer, ns.inner, root.child(1), window=window)
        elif name == "james_stein":
            est = james_stein(z)
        elif name == "oracle":
            if mu is None:
                raise ConfigError("oracle curve needs --true-means or a scheme")
            est = oracle_estimates(ranked, mu, ns.oracle_samples, root.child(2),
                                   window=window)
        elif name == "tweedie" or name.startswith("tweedie"):
            degree = ns.degree if name == "tweedie" else int(name.removeprefix("tweedie"))
            est = tweedie_correct(z, fit_lindsey(bin_z(z, ns.bins), degree))
        else:
            raise ConfigError(f"unknown estimator {name!r} for curves")
        curves[name] = est.corrected_by_rank
    header = _config_lines("curves", [
        ("input", ns.input), ("schemes", ns.schemes), ("p", ns.p),
        ("seed", ns.seed), ("boot-samples", ns.boot_samples),
        ("outer", ns.outer), ("inner", ns.inner),
        ("oracle-samples", ns.oracle_samples if mu is not None else None),
        ("window", window), ("estimators", ",".join(names)),
        ("true-means", ns.true_means)])
    columns = ["rank", "z", "estimator", "value"]
    rows = []
    for name in names:
        values = curves[name]
        for k in range(z.size):
            rows.append([k + 1, ranked.order[k], name, values[k]])
    if ns.format == "json":
        payload = {"command": "curves", "invocation": header[0],
                   "columns": columns, "rows": [list(r) for r in rows]}
        _write_text(ns.output, format_json(payload) + "\n")
    else:
        write_csv(ns.output, header, columns, rows)
    if not ns.no_plot:
        render_curves_figure(_figure_path(ns.output),
                             np.arange(1, z.size + 1), ranked.order, curves)


def _write_text(path: str, text: str) -> None:
    if not path:
        raise ConfigError("--output is required")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    command = ns.positional_command or ns.command_flag
    if command is None:
        parser.print_usage(sys.stderr)
        print(json.dumps({"error": "ConfigError",
                          "message": "no command given"}), file=sys.stderr)
        return 2
    if ns.positional_command and ns.command_flag and \
            ns.positional_command != ns.command_flag:
        print(json.dumps({"error": "ConfigError",
                          "message": "positional command and --command disagree"}),
              file=sys.stderr)
        return 2
    if command != "simulate" and not ns.output:
        ns.output = f"rankshrink-{command}.{ns.format}"
    handler = {"shrink": cmd_shrink, "simulate": cmd_simulate,
               "theorem1": cmd_theorem1, "curves": cmd_curves}[command]
    try:
        handler(ns)
    except (InvalidInputError, InputFormatError, ConfigError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        line = getattr(exc, "line", None)
        if line is not None:
            record["line"] = line
        print(json.dumps(record), file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(json.dumps({"error": "NumericalError", "message": str(exc),
                          "iterations": getattr(exc, "iterations", None)}),
              file=sys.stderr)
        return 3
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
