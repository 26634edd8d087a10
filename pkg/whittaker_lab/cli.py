"""Command-line entry point: ``python -m whittaker_lab.cli <subcommand> ...``.

Exit codes: 0 success, 2 validation or numerical error, 3 a verification
whose residuals do not decrease, 64 usage or config error, 1 anything else.
"""

import argparse
import json
import logging
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from whittaker_lab import finite_model
from whittaker_lab.bessel_limit import LimitParameters, coefficient_sweep, scaled_convergence
from whittaker_lab.errors import NumericalError, ToleranceFailure, UsageError, ValidationError, WhittakerLabError
from whittaker_lab.kernels import AUX_NAMES, BlockTag, KernelMachine
from whittaker_lab.operator_lab import commutation_check, norm_law, verify_factorization, verify_resolvent
from whittaker_lab.params import from_a_mu, make_parameters, parse_complex
from whittaker_lab.settings import RunConfig, load_config
from whittaker_lab.spectral import plancherel_reconstruct, spectrum_table, szego_log_det, transform_identity
from whittaker_lab.tail import TailKernel, fft_symbol, tail_convergence
from whittaker_lab.utils import render, suffixed, write_output

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
BLOCK_CHOICES = ("pp", "pm", "mp", "mm", "A", "B", "C", "D") + AUX_NAMES
CHECKS = ("factorization", "resolvent", "commute", "norms")
FFT_WINDOW = 4.0

# argparse dest -> config key
FLAG_KEYS = {
    "target_rel_error": "target_rel_error",
    "max_terms": "max_terms",
    "nodes": "nodes",
    "xmin": "x_min",
    "xmax": "x_max",
    "levels": "levels",
    "buffer_decades": "buffer_decades",
    "seed": "seed",
    "format": "format",
    "output": "output",
    "log_file": "log_file",
}


class LabArgumentParser(argparse.ArgumentParser):
    """Usage errors become UsageError so run() can map them to exit 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def setup_logging(level: str = "INFO", log_file: Optional[str] = None):
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO), format=LOG_FORMAT,
                        handlers=handlers, force=True)


# ===== PARSER =====

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or key=value config file")
    common.add_argument("--profile", choices=("development", "production"))
    common.add_argument("-o", "--output", help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--seed", type=int)
    common.add_argument("--target-rel-error", type=float)
    common.add_argument("--max-terms", type=int)
    common.add_argument("--log-file")
    common.add_argument("--no-timestamp", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")
    return common


def _grid_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--nodes", type=int)
    parser.add_argument("--xmin", type=float)
    parser.add_argument("--xmax", type=float)
    parser.add_argument("--levels", type=int)
    parser.add_argument("--buffer-decades", type=int)


def _pair_flags(parser: argparse.ArgumentParser, required: bool = True):
    parser.add_argument("--z", type=parse_complex, required=required)
    parser.add_argument("--z-prime", type=parse_complex, required=required)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = LabArgumentParser(prog="whittaker-lab", description="Matrix Whittaker kernel experiments")
    sub = parser.add_subparsers(dest="subcommand", parser_class=LabArgumentParser)
    sub.required = True

    ev = sub.add_parser("eval", parents=[common], help="tabulate a kernel block or auxiliary function")
    _pair_flags(ev)
    ev.add_argument("--block", choices=BLOCK_CHOICES, default="pp")
    ev.add_argument("--x", type=float, nargs="+", required=True)
    ev.add_argument("--y", type=float, nargs="+")

    fin = sub.add_parser("finite", parents=[common], help="finite determinantal process on a two-block set")
    source = fin.add_mutually_exclusive_group(required=True)
    source.add_argument("--input", help="JSON kernel file with n1, n2, entries and optional kind L|K")
    source.add_argument("--random", type=int, nargs=2, metavar=("N1", "N2"))
    fin.add_argument("--zero-diagonal", action="store_true")
    fin.add_argument("--enumerate", action="store_true")
    fin.add_argument("--correlation", type=int, nargs="+", metavar="POINT")
    fin.add_argument("--sample", type=int, metavar="COUNT")
    fin.add_argument("--transform", action="store_true", help="blockwise against global transforms")

    ver = sub.add_parser("verify", parents=[common], help="operator identities under grid refinement")
    _pair_flags(ver)
    ver.add_argument("--what", choices=CHECKS, required=True)
    ver.add_argument("--mu2", type=parse_complex, help="second order for --what commute")
    _grid_flags(ver)

    spec = sub.add_parser("spectrum", parents=[common], help="eigenvalues on the continual basis")
    spec.add_argument("--a", type=float, required=True)
    spec.add_argument("--mu", type=parse_complex, required=True)
    spec.add_argument("--m", "--m-list", dest="m", type=float, nargs="+", default=[0.3, 0.6, 1.2])
    spec.add_argument("--points", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    spec.add_argument("--identity", choices=("A", "B"), help="check the A or B transform identity instead")
    spec.add_argument("--szego", nargs=2, type=float, metavar=("XMIN", "XMAX"))
    spec.add_argument("--plancherel", nargs=2, type=float, metavar=("XLO", "XHI"),
                      help="rebuild the norm of a polynomial bump on [XLO, XHI] from the spectral side")
    _grid_flags(spec)

    tl = sub.add_parser("tail", parents=[common], help="translation-invariant tail near the origin")
    _pair_flags(tl)
    tl.add_argument("--u", "--u-grid", dest="u", type=float, nargs="+", help="Fourier symbol frequencies")
    tl.add_argument("--delta", "--delta-grid", dest="delta", type=float, nargs="+", help="profile arguments")
    tl.add_argument("--xi", "--xi-list", dest="xi", type=float, nargs="+",
                    help="diagonal points for rescaled-kernel convergence")
    tl.add_argument("--eta-offset", type=float, default=0.0)
    tl.add_argument("--fft", action="store_true", help="FFT of the profiles against the symbol")

    lim = sub.add_parser("limit", parents=[common], help="Bessel-type scaling limit")
    lim.add_argument("--z0", type=parse_complex, required=True)
    lim.add_argument("--z0-prime", type=parse_complex, required=True)
    lim.add_argument("--N", "--N-list", dest="N", type=int, nargs="+", default=[8, 16, 32, 64])
    lim.add_argument("--xi", type=float, default=1.0)
    lim.add_argument("--eta", type=float, default=2.0)
    lim.add_argument("--block", choices=("pp", "pm", "mp", "mm"), nargs="+")
    lim.add_argument("--sweep", action="store_true", help="also report the Gamma coefficient sweep")
    return parser


# ===== SUBCOMMANDS =====

def _report_records(report) -> List[Dict]:
    records = []
    for entry in report.levels:
        row = {"check": report.check, "level": entry["level"], "nodes": entry["nodes"]}
        row.update(entry["residuals"])
        row.update({k: v for k, v in entry.items()
                    if k not in ("level", "nodes", "residuals") and not isinstance(v, list)})
        records.append(row)
    return records


def cmd_eval(args, config: RunConfig) -> Dict[str, List[Dict]]:
    params = make_parameters(args.z, args.z_prime)
    machine = KernelMachine(params, config.policy(), config["diagonal_switch"])
    rows = []
    if args.block in AUX_NAMES:
        for x in args.x:
            rows.append({"x": x, "value": machine.aux(args.block, x)})
        return {"eval": rows}
    ys = args.y if args.y else args.x
    for x in args.x:
        for y in ys:
            if args.block in ("A", "B"):
                value = machine.l_block(args.block, x, y)
            elif args.block == "C":
                value = machine.c_kernel(x, y)
            elif args.block == "D":
                value = machine.d_kernel(x, y)
            else:
                value = machine.k_block(BlockTag.parse(args.block), x, y)
            rows.append({"x": x, "y": y, "value": value})
    return {"eval": rows}


def _read_kernel(path: str) -> finite_model.FiniteKernel:
    try:
        with open(path, "r", encoding="utf-8") as file:
            record = json.load(file)
    except OSError as e:
        raise ValidationError(f"cannot read kernel file {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ValidationError(f"kernel file {path} is not JSON (line {e.lineno})") from None
    kernel = finite_model.FiniteKernel.from_record(record)
    kind = str(record.get("kind", "L")).upper()
    if kind == "K":
        return finite_model.l_from_k(kernel)
    if kind != "L":
        raise ValidationError(f"kernel kind must be L or K, got {kind!r}")
    return kernel


def cmd_finite(args, config: RunConfig) -> Dict[str, List[Dict]]:
    if args.input:
        L = _read_kernel(args.input)
    else:
        rng = np.random.default_rng(config["seed"])
        L = finite_model.random_j_hermitian(args.random[0], args.random[1], rng, zero_diagonal=args.zero_diagonal)
    tables = {}
    table = None
    if args.enumerate or args.sample:
        table = finite_model.weight_distribution(L)
    if args.enumerate:
        tables["weights"] = [
            {"configuration": str(conf), "size": len(conf.members), "balanced": conf.is_balanced(L.n1),
             "probability": p}
            for conf, p in table.items()
        ]
    if args.correlation:
        K = finite_model.k_from_l(L)
        rho = finite_model.correlation(K, args.correlation)
        row = {"points": " ".join(str(i) for i in args.correlation), "rho": rho}
        if L.order <= finite_model.ORDER_CAP:
            table = table or finite_model.weight_distribution(L)
            row["inclusion_sum"] = table.inclusion_sum(args.correlation)
        tables["correlation"] = [row]
    if args.sample:
        draws = finite_model.sample(table, config["seed"], args.sample)
        tables["sample"] = [{"draw": i, "configuration": str(conf)} for i, conf in enumerate(draws)]
    if args.transform:
        K = finite_model.k_from_l(L)
        blockwise = finite_model.block_k_from_l(L)
        back = finite_model.block_l_from_k(K)
        checks = finite_model.bijection_conditions(K)
        row = {
            "k_block_vs_global": float(np.max(np.abs(blockwise.entries - K.entries), initial=0.0)),
            "l_block_vs_input": float(np.max(np.abs(back.entries - L.entries), initial=0.0)),
            "j_hermitian": L.is_j_hermitian(),
        }
        row.update({k: v for k, v in checks.items() if not isinstance(v, (list, dict))})
        tables["transform"] = [row]
    if not tables:
        raise UsageError("finite: choose at least one of --enumerate, --correlation, --sample, --transform")
    return tables


def cmd_verify(args, config: RunConfig) -> Dict[str, List[Dict]]:
    policy = config.policy()
    spec = config.grid_spec()
    levels = config["levels"]
    try:
        if args.what == "commute":
            first = make_parameters(args.z, args.z_prime)
            mu2 = args.mu2 if args.mu2 is not None else first.mu
            report = commutation_check(first.a, first.mu, mu2, spec, levels, policy)
        else:
            params = make_parameters(args.z, args.z_prime)
            if args.what == "factorization":
                report = verify_factorization(params, spec, levels, policy)
            elif args.what == "resolvent":
                report = verify_resolvent(params, spec, levels, policy)
            else:
                report = norm_law(params, spec, levels)
    except NumericalError as e:
        raise ToleranceFailure(f"verify {args.what}: {e}") from e
    return {"verify": _report_records(report), "_report": report}


def cmd_spectrum(args, config: RunConfig) -> Dict[str, List[Dict]]:
    params = from_a_mu(args.a, args.mu)
    policy = config.policy()
    spec = config.grid_spec()
    tables = {}
    if args.identity:
        records = []
        for m in args.m:
            report = transform_identity(args.identity, params, m, args.points, spec, config["levels"], policy)
            records.extend({"m": m, **row} for row in _report_records(report))
        tables["identity"] = records
    else:
        rows = spectrum_table(params, args.m, args.points, spec, max(config["levels"] - 1, 0), policy)
        tables["spectrum"] = [row.to_record() for row in rows]
    if args.szego:
        x_min, x_max = args.szego
        tables["szego"] = [{"x_min": x_min, "x_max": x_max, "log_det": szego_log_det(params, x_min, x_max)}]
    if args.plancherel:
        lo, hi = args.plancherel

        def bump(x):
            return (x - lo) ** 2 * (hi - x) ** 2

        result = plancherel_reconstruct(params.a, bump, bump, (lo, hi), (lo, hi),
                                        points_per_unit=config["plancherel_points_per_unit"],
                                        m_cap=config["plancherel_m_cap"], policy=policy)
        tables["plancherel"] = [{"a": params.a, "direct": result.direct, "reconstructed": result.reconstructed,
                                 "m_max": result.m_max, "relative_error": result.relative_error,
                                 "converged": result.converged}]
    return tables


def cmd_tail(args, config: RunConfig) -> Dict[str, List[Dict]]:
    params = make_parameters(args.z, args.z_prime)
    kernel = TailKernel.of(params)
    tables = {"constants": [{**kernel.constants.to_record(), "rate_A": kernel.constants.rate_A}]}
    if args.u:
        rows = []
        for u in args.u:
            symbol = kernel.symbol(u)
            rows.append({"u": u, "f": symbol[0, 0].real, "g": complex(symbol[0, 1])})
        tables["symbol"] = rows
    if args.delta:
        tables["profile"] = [
            {"delta": d, **{str(tag): kernel.block(tag, d) for tag in BlockTag}} for d in args.delta
        ]
    if args.xi:
        pairs = [(xi, xi + args.eta_offset) for xi in args.xi]
        rows = tail_convergence(params, pairs, policy=config.policy())
        tables["convergence"] = [row.to_record() for row in rows]
    if args.fft:
        u, pp = fft_symbol(kernel.profile_pp, kernel.constants)
        _, pm = fft_symbol(kernel.profile_pm, kernel.constants)
        keep = np.abs(u) <= FFT_WINDOW
        rows = []
        for ui, fi, gi in zip(u[keep], pp[keep], pm[keep]):
            symbol = kernel.symbol(float(ui))
            rows.append({"u": float(ui), "fft_pp": complex(fi), "symbol_pp": symbol[0, 0].real,
                         "fft_pm": complex(gi), "symbol_pm": complex(symbol[0, 1])})
        tables["fft"] = rows
    return tables


def cmd_limit(args, config: RunConfig) -> Dict[str, List[Dict]]:
    lp = LimitParameters.of(args.z0, args.z0_prime)
    tags = [BlockTag.parse(b) for b in args.block] if args.block else list(BlockTag)
    rows = scaled_convergence(lp, args.N, args.xi, args.eta, tags, config.policy())
    tables = {"limit": [row.to_record() for row in rows]}
    if args.sweep:
        tables["sweep"] = coefficient_sweep(lp, args.N)
    return tables


COMMANDS = {
    "eval": cmd_eval,
    "finite": cmd_finite,
    "verify": cmd_verify,
    "spectrum": cmd_spectrum,
    "tail": cmd_tail,
    "limit": cmd_limit,
}


# ===== RUN =====

def resolve_config(args) -> RunConfig:
    config = load_config(args.config, args.profile, args.subcommand)
    return config.override({key: getattr(args, dest, None) for dest, key in FLAG_KEYS.items()})


def _emit(tables: Dict[str, List[Dict]], config: RunConfig, timestamp: bool, stdout):
    path = config.output_path()
    names = [name for name in tables if not name.startswith("_")]
    for name in names:
        text = render(tables[name], config.header(), config["format"], timestamp)
        if path is None:
            if len(names) > 1:
                stdout.write(f"# table: {name}\n")
            write_output(text, stream=stdout)
        else:
            write_output(text, path if len(names) == 1 else suffixed(path, name))


def run(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        config = resolve_config(args)
        setup_logging("DEBUG" if args.verbose else config["log_level"], config["log_file"])
        logger.info("running %s", args.subcommand)
        tables = COMMANDS[args.subcommand](args, config)
        _emit(tables, config, not args.no_timestamp, stdout)
        if "_report" in tables:
            tables["_report"].require_decreasing()
        return 0
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0
    except WhittakerLabError as e:
        logger.error("%s: %s", type(e).__name__, e)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception:
        logger.exception("unexpected failure")
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
