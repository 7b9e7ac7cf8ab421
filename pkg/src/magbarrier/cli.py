"""Command-line front end for the magnetic-barrier spectral toolkit.

One subcommand per analysis: band tables and plot data, band minima, wedge
and oscillator asymptotics, spectral-window reports with their constants and
perturbation budgets, localization sweeps, and 1D/2D eigenvalue counting.
Every run writes one deterministic CSV or JSON document (floats at 12 and 17
significant digits respectively), echoing the effective configuration into
the output header so a file reproduces itself.

Exit codes: 0 all pass flags true; 1 a computed check failed; 2 usage or
configuration error; 3 resolution or resource limit. Multi-rung commands
flush partial tables with a FAILED marker before reporting the error.
"""

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import asymptotics, bands, counting, fiber, localization, mourre
from .counting import Grid2DSpec
from .errors import ConfigurationError, InvariantViolation, NumericalError

SCHEMA_VERSION = "1"
EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2
EXIT_RESOLUTION = 3

JSON_DIGITS = 17
CSV_DIGITS = 12


# ---------------------------------------------------------------------------
# option schema (single source of truth for flags and config files)


@dataclass(frozen=True)
class Option:
    kind: str          # float | int | str | bool | floats
    default: object
    help: str


COMMANDS = {
    "bands": {
        "b": Option("float", 1.0, "field strength"),
        "kmin": Option("float", -4.0, "left end of the wave-number range"),
        "kmax": Option("float", 6.0, "right end of the wave-number range"),
        "nbands": Option("int", 8, "number of bands"),
        "samples": Option("int", 81, "base k-samples for the trace"),
        "refine": Option("bool", True, "Richardson-refine eigenvalues"),
    },
    "minima": {
        "b": Option("float", 1.0, "field strength"),
        "jmax": Option("int", 3, "even-band ordinals 1..jmax"),
    },
    "airy": {
        "b": Option("float", 1.0, "field strength"),
        "ks": Option("floats", (-15.0, -20.0, -40.0), "wave numbers"),
        "jmax": Option("int", 4, "bands 1..jmax"),
    },
    "ho": {
        "b": Option("float", 1.0, "field strength"),
        "j": Option("int", 1, "band-pair ordinal"),
        "kmin": Option("float", 3.0, "left end of the splitting window"),
        "kmax": Option("float", 6.0, "right end of the splitting window"),
        "samples": Option("int", 7, "k-samples across the window"),
    },
    "mourre": {
        "b": Option("float", 1.0, "field strength"),
        "n": Option("int", 1, "spectral window ordinal"),
        "E": Option("str", "mid", "window energy, or 'mid'"),
        "kmin": Option("float", None, "trace left end (default -4 sqrt(b))"),
        "kmax": Option("float", None, "trace right end (default 6 sqrt(b))"),
        "nbands": Option("int", None, "bands traced (default max(2n+1, 5))"),
        "samples": Option("int", 81, "base k-samples for the trace"),
    },
    "budget": {
        "b": Option("float", 1.0, "field strength"),
        "n": Option("int", 1, "spectral window ordinal"),
        "E": Option("str", "mid", "window energy, or 'mid'"),
        "kmin": Option("float", None, "trace left end (default -4 sqrt(b))"),
        "kmax": Option("float", None, "trace right end (default 6 sqrt(b))"),
        "nbands": Option("int", None, "bands traced (default max(2n+1, 5))"),
        "samples": Option("int", 81, "base k-samples for the trace"),
    },
    "localize": {
        "b": Option("float", 1.0, "field strength"),
        "n": Option("int", 1, "spectral window ordinal"),
        "E": Option("str", "mid", "window energy, or 'mid'"),
        "kmin": Option("float", None, "trace left end (default -4 sqrt(b))"),
        "kmax": Option("float", None, "trace right end (default 6 sqrt(b))"),
        "nbands": Option("int", None, "bands traced (default max(2n+1, 5))"),
        "samples": Option("int", 9, "envelope samples per band"),
        "trace_samples": Option("int", 81, "base k-samples for the trace"),
    },
    "count1d": {
        "alpha": Option("float", 1.0, "decay exponent"),
        "ell": Option("float", 1.0, "tail coefficient of Q"),
        "m": Option("float", 1.0, "effective mass"),
        "lambdas": Option("floats", (1e-3, 3e-4, 1e-4), "gap ladder"),
        "h": Option("float", counting.DEFAULT_H_1D, "grid step"),
        "verify": Option("bool", True, "recount on a widened grid"),
    },
    "count2d": {
        "b": Option("float", 1.0, "field strength"),
        "alpha": Option("float", 1.0, "decay exponent"),
        "amplitude": Option("float", 1.0, "potential amplitude"),
        "lambdas": Option("floats",
                          (0.0590106, 0.0295053, 0.0118021, 0.00590106),
                          "gap ladder below the band minimum"),
        "hx": Option("float", counting.DEFAULT_HX_2D, "transverse grid step"),
        "hy": Option("float", counting.DEFAULT_HY_2D, "longitudinal grid step"),
        "max_unknowns": Option("int", counting.MAX_UNKNOWNS_2D,
                               "memory budget in grid unknowns"),
        "check_stability": Option("bool", False,
                                  "recount the largest rung on a finer grid"),
    },
}

_CONVERTERS = {
    "float": float,
    "int": int,
    "str": str,
}


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {text!r}")


def _parse_floats(text):
    try:
        values = tuple(float(part) for part in str(text).split(",") if part.strip())
    except ValueError as exc:
        raise ConfigurationError(f"expected comma-separated numbers: {exc}")
    if not values:
        raise ConfigurationError("expected at least one number")
    return values


def _convert(option, text):
    if option.kind == "bool":
        return _parse_bool(text)
    if option.kind == "floats":
        return _parse_floats(text)
    try:
        return _CONVERTERS[option.kind](text)
    except ValueError as exc:
        raise ConfigurationError(str(exc))


def load_config_file(path):
    """key=value pairs, one per line; '#' starts a comment."""
    entries = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file: {exc}")
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{number}: expected key=value")
        key, value = line.split("=", 1)
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def effective_config(command, args):
    """Flags override config-file entries override schema defaults."""
    schema = COMMANDS[command]
    file_entries = load_config_file(args.config) if args.config else {}
    unknown = sorted(set(file_entries) - set(schema))
    if unknown:
        raise ConfigurationError(
            f"unknown config keys for {command}: {', '.join(unknown)}")
    cfg = {}
    for name, option in schema.items():
        flag = getattr(args, name)
        if flag is not None:
            cfg[name] = _convert(option, flag) if isinstance(flag, str) \
                and option.kind in ("floats",) else flag
        elif name in file_entries:
            cfg[name] = _convert(option, file_entries[name])
        else:
            cfg[name] = option.default
    return cfg


# ---------------------------------------------------------------------------
# rendering


def _py(value):
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _csv_cell(value):
    value = _py(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.{CSV_DIGITS}g}"
    if isinstance(value, (tuple, list)):
        return ",".join(_csv_cell(v) for v in value)
    return str(value)


def render_csv(payload):
    lines = [f"# schema_version={SCHEMA_VERSION}",
             f"# command={payload['command']}"]
    for key in sorted(payload["config"]):
        lines.append(f"# {key}={_csv_cell(payload['config'][key])}")
    lines.append(",".join(payload["columns"]))
    for row in payload["rows"]:
        lines.append(",".join(_csv_cell(v) for v in row))
    for key in sorted(payload["summary"]):
        lines.append(f"# {key}={_csv_cell(payload['summary'][key])}")
    if payload.get("failed"):
        lines.append(f"# FAILED: {payload['failed']}")
    lines.append(f"# pass={_csv_cell(payload['pass'])}")
    return "\n".join(lines) + "\n"


_MARK = "~~f~~"   # ASCII sentinel json.dumps leaves unescaped


def _mark_floats(obj):
    obj = _py(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return repr(obj)
        return f"{_MARK}{obj:.{JSON_DIGITS}g}{_MARK}"
    if isinstance(obj, dict):
        return {key: _mark_floats(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_mark_floats(val) for val in obj]
    return obj


def render_json(payload):
    doc = {"schema_version": SCHEMA_VERSION,
           "command": payload["command"],
           "config": payload["config"],
           "columns": payload["columns"],
           "rows": payload["rows"],
           "summary": payload["summary"],
           "failed": payload.get("failed"),
           "pass": payload["pass"]}
    text = json.dumps(_mark_floats(doc), indent=2, sort_keys=True)
    return text.replace(f'"{_MARK}', "").replace(f'{_MARK}"', "") + "\n"


# ---------------------------------------------------------------------------
# subcommands


def _payload(command, cfg, columns, rows, summary, passed, failed=None):
    return {"command": command, "config": dict(cfg), "columns": columns,
            "rows": rows, "summary": summary, "pass": bool(passed),
            "failed": failed}


def _plot_blocks(table):
    lines = ["# band functions: k omega, blank line between blocks",
             f"# b={table.b:.{CSV_DIGITS}g}"]
    for j_idx, samples in enumerate(table.bands):
        lines.append(f"# band {j_idx + 1} ({table.parities[j_idx].value})")
        for s in samples:
            lines.append(f"{s.k:.{CSV_DIGITS}g} {s.omega:.{CSV_DIGITS}g}")
        lines.append("")
    lines.append("# reference parabola E = k^2")
    for k in table.ks:
        lines.append(f"{k:.{CSV_DIGITS}g} {k * k:.{CSV_DIGITS}g}")
    return "\n".join(lines) + "\n"


def cmd_bands(cfg, jobs=1):
    if cfg["kmin"] > cfg["kmax"]:
        raise ConfigurationError("kmin must not exceed kmax")
    if cfg["kmin"] == cfg["kmax"]:
        pairs = fiber.first_levels(cfg["b"], cfg["kmin"], cfg["nbands"],
                                   refine=cfg["refine"])
        rows = [[pair.omega] for pair in pairs]
        return _payload("bands", cfg, ["omega"], rows,
                        {"k": cfg["kmin"], "n_levels": len(rows)}, True)
    table = bands.trace(cfg["b"], cfg["kmin"], cfg["kmax"],
                        n_bands=cfg["nbands"], base_samples=cfg["samples"],
                        refine=cfg["refine"])
    mono = bands.monotonicity_report(table)
    columns = ["k", "j", "parity", "omega", "domega_fh", "domega_bd",
               "psi0", "dpsi0", "k_squared"]
    rows = []
    for i, k in enumerate(table.ks):
        for j_idx, samples in enumerate(table.bands):
            s = samples[i]
            rows.append([float(k), j_idx + 1, table.parities[j_idx].value,
                         s.omega, s.domega_fh, s.domega_bd, s.psi0, s.dpsi0,
                         float(k) ** 2])
    summary = {"monotonicity_checked": mono.checked,
               "monotonicity_violations": len(mono.violations)}
    payload = _payload("bands", cfg, columns, rows, summary,
                       not mono.violations)
    payload["extra_files"] = {"bands_plot.dat": _plot_blocks(table)}
    return payload


def cmd_minima(cfg, jobs=1):
    if cfg["jmax"] < 1:
        raise ConfigurationError("jmax must be at least 1")
    b = cfg["b"]
    columns = ["j", "kappa", "energy", "beta", "psi0_at_kappa",
               "kappa_max", "energy_lo", "energy_hi", "pass"]
    rows = []
    for j in range(1, cfg["jmax"] + 1):
        rec = bands.find_minimum(j, b)
        kappa_max = math.sqrt((4 * j - 3) * b)
        energy_lo = max(2 * j - 3, 0) * b
        energy_hi = (2 * j - 1) * b
        ok = (0.0 < rec.kappa < kappa_max) and (energy_lo < rec.energy < energy_hi)
        rows.append([j, rec.kappa, rec.energy, rec.beta, rec.psi0_at_kappa,
                     kappa_max, energy_lo, energy_hi, ok])
    passed = all(row[-1] for row in rows)
    return _payload("minima", cfg, columns, rows,
                    {"n_minima": len(rows)}, passed)


def cmd_airy(cfg, jobs=1):
    columns = ["k", "j", "kind", "predicted", "measured", "measured_error",
               "bound", "pass"]
    rows = []
    for k in cfg["ks"]:
        for j in range(1, cfg["jmax"] + 1):
            check = asymptotics.airy_check(cfg["b"], k, j)
            rec = check.to_record()
            rows.append([rec["k"], rec["j"], rec["kind"], rec["predicted"],
                         rec["measured"], rec["measured_error"], rec["bound"],
                         rec["pass"]])
    passed = all(row[-1] for row in rows)
    return _payload("airy", cfg, columns, rows, {"n_checks": len(rows)}, passed)


def cmd_ho(cfg, jobs=1):
    ks = np.linspace(cfg["kmin"], cfg["kmax"], cfg["samples"])
    fit = asymptotics.splitting_fit(cfg["b"], cfg["j"], ks)
    retained = set(id(s) for s in fit.retained)
    columns = ["k", "gap_plus", "gap_minus", "splitting", "retained"]
    rows = [[s.k, s.gap_plus, s.gap_minus, s.splitting, id(s) in retained]
            for s in fit.samples]
    summary = {"rate": fit.rate, "r2": fit.r2, "floor": fit.floor,
               "n_retained": len(fit.retained)}
    return _payload("ho", cfg, columns, rows, summary, fit.passed)


def _window_report(cfg, trace_samples):
    b, n = cfg["b"], cfg["n"]
    root_b = math.sqrt(b)
    kmin = cfg["kmin"] if cfg["kmin"] is not None else -4.0 * root_b
    kmax = cfg["kmax"] if cfg["kmax"] is not None else 6.0 * root_b
    nbands = cfg["nbands"] if cfg["nbands"] is not None else max(2 * n + 1, 5)
    table = bands.trace(b, kmin, kmax, n_bands=nbands,
                        base_samples=trace_samples, refine=True)
    spec = str(cfg["E"]).strip()
    if spec == "mid":
        level = (2 * n - 1) * b
        ceiling = bands.table_minimum(table, 2 * n + 1)[1]
        energy = 0.5 * (level + ceiling)
    else:
        try:
            energy = float(spec)
        except ValueError:
            raise ConfigurationError(f"E must be a number or 'mid', got {spec!r}")
    cfg.update(kmin=kmin, kmax=kmax, nbands=nbands, E=energy, E_spec=spec)
    return table, mourre.window_report(n, energy, b, table)


def cmd_mourre(cfg, jobs=1):
    _, report = _window_report(cfg, cfg["samples"])
    rec = report.to_record()
    columns = ["band", "k_left", "k_right", "c_band"]
    rows = [[pre[0], pre[1], pre[2], c]
            for pre, c in zip(rec["preimages"], rec["c_per_band"])]
    summary = {"delta0": rec["delta0"], "delta": rec["delta"],
               "c_n": rec["c_n"], "window_E": rec["E"]}
    passed = rec["delta0"] > 0.0 and rec["c_n"] > 0.0
    return _payload("mourre", cfg, columns, rows, summary, passed)


def cmd_budget(cfg, jobs=1):
    _, report = _window_report(cfg, cfg["samples"])
    budget = mourre.perturbation_budget(cfg["n"], cfg["E"], cfg["b"], report)
    rec = budget.to_record()
    columns = ["a_star", "q_star", "F"]
    rows = [[rec["a_star"], rec["q_star"], rec["F"]]]
    summary = {"delta0": rec["delta0"], "c_n": rec["c_n"],
               "delta": rec["delta"]}
    return _payload("budget", cfg, columns, rows, summary, rec["F"] < 0.5)


def cmd_localize(cfg, jobs=1):
    _, report = _window_report(cfg, cfg["trace_samples"])
    checks = localization.window_envelope_sweep(report,
                                                n_samples=cfg["samples"])
    columns = ["j", "k", "x_n", "max_ratio", "tolerance", "pass"]
    rows = []
    for check in checks:
        rec = check.to_record()
        rows.append([rec["j"], rec["k"], rec["x_n"], rec["max_ratio"],
                     rec["tolerance"], rec["envelope_ok"]])
    summary = {"n_checks": len(rows),
               "worst_ratio": max((r[3] for r in rows), default=0.0)}
    return _payload("localize", cfg, columns, rows, summary,
                    all(r[-1] for r in rows))


def _loglog_fit(lams, counts):
    lams = np.asarray(lams, dtype=float)
    counts = np.asarray(counts, dtype=float)
    mask = counts > 0
    if mask.sum() < 2:
        return None, None
    slope, intercept = np.polyfit(np.log(lams[mask]), np.log(counts[mask]), 1)
    return float(-slope), float(math.exp(intercept))


def cmd_count1d(cfg, jobs=1):
    alpha, ell, m = cfg["alpha"], cfg["ell"], cfg["m"]
    constant = counting.counting_constant_1d(alpha, ell, m)
    expected = 1.0 / alpha - 0.5

    def q_model(y):
        return ell * (1.0 + np.asarray(y, dtype=float) ** 2) ** (-alpha / 2.0)

    lambdas = sorted(cfg["lambdas"], reverse=True)
    columns = ["lambda", "count", "scaled_count"]
    rows, counts, failed, exc = [], [], None, None
    for lam in lambdas:
        try:
            n = counting.count_1d(m, q_model, lam,
                                  half_width=counting.TURNING_FACTOR
                                  * (ell / lam) ** (1.0 / alpha),
                                  h=cfg["h"], verify_width=cfg["verify"])
        except (ConfigurationError, NumericalError, InvariantViolation) as err:
            failed, exc = f"{type(err).__name__}: {err}", err
            break
        counts.append(n)
        rows.append([lam, n, lam ** expected * n])
    exponent, prefactor = _loglog_fit([r[0] for r in rows], counts)
    summary = {"expected_exponent": expected, "closed_form_constant": constant,
               "fitted_exponent": exponent, "fitted_prefactor": prefactor}
    payload = _payload("count1d", cfg, columns, rows, summary,
                       failed is None, failed)
    payload["_exc"] = exc
    return payload


def cmd_count2d(cfg, jobs=1):
    b, alpha = cfg["b"], cfg["alpha"]
    V = counting.standard_potential(alpha, amplitude=cfg["amplitude"])
    rec = bands.find_minimum(1, b)
    ground = fiber.solve(
        fiber.build_problem(b, rec.kappa, fiber.Parity.EVEN,
                            requested_levels=1), 1)[0]
    reduced = counting.reduced_potential(V, ground,
                                         np.linspace(0.0, 500.0, 4001))
    constant = counting.counting_constant_2d(alpha, reduced.ell, rec.beta)
    expected = 1.0 / alpha - 0.5
    spec = Grid2DSpec(hx=cfg["hx"], hy=cfg["hy"],
                      max_unknowns=cfg["max_unknowns"])
    columns = ["lambda", "count", "scaled_count"]
    summary = {"expected_exponent": expected, "closed_form_constant": constant,
               "ell": reduced.ell, "beta1": rec.beta, "kappa1": rec.kappa}
    try:
        curve, meta = counting.counting_curve_2d(b, V, cfg["lambdas"],
                                                 spec=spec,
                                                 ell_hint=reduced.ell,
                                                 jobs=jobs)
    except (ConfigurationError, NumericalError, InvariantViolation) as err:
        payload = _payload("count2d", cfg, columns, [], summary, False,
                           f"{type(err).__name__}: {err}")
        payload["_exc"] = err
        return payload
    rows = [[lam, n, lam ** expected * n]
            for lam, n in zip(curve.lambdas, curve.counts)]
    gap, ratio = counting.asymptotics_check(curve, alpha, constant)
    summary.update(fitted_exponent=curve.fitted_exponent,
                   fitted_prefactor=curve.fitted_prefactor,
                   exponent_gap=gap, prefactor_ratio=ratio,
                   threshold=meta["threshold"], unknowns=meta["unknowns"])
    passed = True
    if cfg["check_stability"]:
        shared = Grid2DSpec(hx=cfg["hx"], hy=cfg["hy"], lx=meta["lx"],
                            y_width=meta["y_width"],
                            max_unknowns=cfg["max_unknowns"])
        base, refined, stable = counting.count_2d_stability(
            b, V, max(cfg["lambdas"]), spec=shared, ell_hint=reduced.ell)
        summary.update(stability_base=base, stability_refined=refined,
                       stable=stable)
        passed = stable
    return _payload("count2d", cfg, columns, rows, summary, passed)


DISPATCH = {
    "bands": cmd_bands,
    "minima": cmd_minima,
    "airy": cmd_airy,
    "ho": cmd_ho,
    "mourre": cmd_mourre,
    "budget": cmd_budget,
    "localize": cmd_localize,
    "count1d": cmd_count1d,
    "count2d": cmd_count2d,
}


# ---------------------------------------------------------------------------
# parser and entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="magbarrier",
        description="Spectral analysis of the magnetic-barrier operator.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command, schema in COMMANDS.items():
        sub = subparsers.add_parser(command)
        for name, option in schema.items():
            flag = f"--{name.replace('_', '-')}"
            if option.kind == "bool":
                sub.add_argument(flag, dest=name, default=None,
                                 action=argparse.BooleanOptionalAction,
                                 help=option.help)
            elif option.kind == "floats":
                sub.add_argument(flag, dest=name, default=None, type=str,
                                 help=option.help + " (comma-separated)")
            elif option.kind == "int":
                sub.add_argument(flag, dest=name, default=None, type=int,
                                 help=option.help)
            else:
                sub.add_argument(flag, dest=name, default=None, type=str
                                 if option.kind == "str" else float,
                                 help=option.help)
        sub.add_argument("--config", default=None,
                         help="key=value config file; flags take precedence")
        sub.add_argument("--outdir", default=".", help="output directory")
        sub.add_argument("--format", choices=("csv", "json"), default="csv")
        sub.add_argument("--jobs", type=int, default=1,
                         help="worker threads for independent ladder rungs")
    return parser


def _exit_for(exc):
    if isinstance(exc, ConfigurationError):
        return EXIT_USAGE
    if isinstance(exc, NumericalError):
        return EXIT_RESOLUTION
    return EXIT_NUMERICAL


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = effective_config(args.command, args)
        payload = DISPATCH[args.command](cfg, jobs=args.jobs)
    except (ConfigurationError, NumericalError, InvariantViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_for(exc)
    exc = payload.pop("_exc", None)
    extra_files = payload.pop("extra_files", {})
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{args.command}.{args.format}"
    text = render_csv(payload) if args.format == "csv" else render_json(payload)
    path.write_text(text)
    written = [str(path)]
    for name, content in extra_files.items():
        extra_path = outdir / name
        extra_path.write_text(content)
        written.append(str(extra_path))
    status = "PASS" if payload["pass"] and exc is None else "FAIL"
    print(f"{args.command}: {status}; wrote {', '.join(written)}")
    if exc is not None:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_for(exc)
    return EXIT_OK if payload["pass"] else EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
