"""Command-line front end.

Every output file starts with a JSON header holding the command, its
parameters and the package version; ``header["argv"]`` re-runs the command
that produced it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, catloss, core, oracle
from .core import BinaryEvent, EventCounts, EventRecord, ImpossibleOutcomeError, MixtureState
from .trajectory import Mode, TrajectoryConfig, force_record, run_trajectory

log = logging.getLogger("randpurify")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_VERIFY_FAILED = 2

NORMALIZE_WARN_TOL = 1e-9
MAX_ORACLE_DIM = 4096

PRESETS = {
    "decay100": {"source": f"geometric:{math.exp(-1)!r},100", "mode": "binary", "max_steps": 500},
}


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def fmt(x) -> str:
    """Float text that parses back to the identical double."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.17g}"


def parse_source(text: str, M: int | None = None) -> MixtureState:
    """Explicit list ``0.7,0.2,0.1`` or generator ``geometric:base,M`` / ``uniform:M``."""
    text = text.strip()
    if text.startswith("geometric:"):
        args = text.split(":", 1)[1].split(",")
        base = float(args[0])
        m = int(args[1]) if len(args) > 1 else M
        if m is None or not base > 0:
            raise ValidationError(f"bad geometric source {text!r}")
        return MixtureState.geometric(base, m)
    if text.startswith("uniform"):
        _, _, arg = text.partition(":")
        m = int(arg) if arg else M
        if m is None:
            raise ValidationError("uniform source needs a truncation order")
        return MixtureState.uniform(m)
    try:
        values = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ValidationError(f"cannot parse source {text!r}") from None
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ValidationError(f"source probabilities must be finite and non-negative: {text}")
    total = values.sum()
    if not total > 0:
        raise ValidationError("source probabilities sum to zero")
    if abs(total - 1.0) > NORMALIZE_WARN_TOL:
        log.warning("source probabilities sum to %r; normalizing", total)
    state = MixtureState(values / total)
    if M is not None and state.M != M:
        raise ValidationError(f"source has {state.M + 1} entries but --M is {M}")
    return state


def parse_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise ValidationError(f"expected comma-separated integers, got {text!r}") from None


def parse_record(text: str, M: int, binary: bool) -> EventRecord:
    tokens = [t for t in text.replace(" ", "").split(",") if t]
    if binary:
        names = {"0": BinaryEvent.ZERO, "zero": BinaryEvent.ZERO,
                 "!0": BinaryEvent.NOT_ZERO, "1": BinaryEvent.NOT_ZERO, "not0": BinaryEvent.NOT_ZERO}
        try:
            events = [names[t.lower()] for t in tokens]
        except KeyError as exc:
            raise ValidationError(f"unknown binary event {exc.args[0]!r}") from None
    else:
        events = parse_ints(",".join(tokens))
    try:
        return EventRecord(tuple(events), M, binary=binary)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def parse_grid(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:num`` (inclusive linspace)."""
    if ":" in text:
        start, stop, num = text.split(":")
        return [float(v) for v in np.linspace(float(start), float(stop), int(num))]
    return [float(v) for v in text.split(",") if v]


def _stop_purity(text: str) -> float | None:
    return None if text.lower() == "none" else float(text)


def _event_label(event: int, binary: bool) -> str:
    if binary:
        return "0" if event == BinaryEvent.ZERO else "!0"
    return str(int(event))


def make_header(command: str, params: dict, argv: list[str]) -> dict:
    return {"command": command, "params": params, "seed": params.get("seed"),
            "version": __version__, "argv": argv}


def write_table(path, header: dict, columns: list[str], rows, fmt_name: str) -> None:
    buf = io.StringIO()
    if fmt_name == "csv":
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    else:
        buf.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for row in rows:
            obj = {c: _json_value(v) for c, v in zip(columns, row)}
            buf.write(json.dumps(obj) + "\n")
    _emit(path, buf.getvalue())


def write_json(path, obj: dict) -> None:
    _emit(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.ndarray):
        return [_json_value(x) for x in v]
    return v


def _emit(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def read_header(path) -> dict:
    """Header of a file written by this CLI."""
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("# "):
        return json.loads(first[2:])
    obj = json.loads(first)
    return obj.get("header", obj)


def _strip_output_args(argv: list[str]) -> list[str]:
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok in ("--out", "--summary"):
            skip = True
            continue
        if tok.startswith("--out=") or tok.startswith("--summary="):
            continue
        out.append(tok)
    return out


def _resolve_source(args) -> tuple[MixtureState, dict]:
    preset = PRESETS.get(args.preset, {}) if getattr(args, "preset", None) else {}
    if getattr(args, "preset", None) and not preset:
        raise ValidationError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
    text = args.source or preset.get("source")
    if text is None:
        raise ValidationError("give --source or --preset")
    return parse_source(text, args.M), preset


def cmd_simulate(args, argv) -> int:
    source, preset = _resolve_source(args)
    mode = Mode(args.mode or preset.get("mode", "full"))
    max_steps = args.max_steps or preset.get("max_steps", 1000)
    binary = mode is Mode.BINARY
    params = {"source": [float(p) for p in source.probs], "mode": mode.value,
              "seed": args.seed, "runs": args.runs, "max_steps": max_steps,
              "stop_purity": args.stop_purity, "preset": args.preset, "record": args.record}
    header = make_header("simulate", params, argv)

    if args.record is not None:
        record = parse_record(args.record, source.M, binary)
        try:
            results = [force_record(source, record)]
            _, record_prob = core.fold_record(source, record.events, binary=binary)
        except ImpossibleOutcomeError as exc:
            raise ValidationError(str(exc)) from None
    else:
        try:
            config = TrajectoryConfig(source, seed=args.seed, max_steps=max_steps,
                                      mode=mode, stop_purity=args.stop_purity)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        results = [run_trajectory(config, run_index=i) for i in range(args.runs)]
        record_prob = None

    rows = []
    for run, res in enumerate(results):
        for step_no, entropy in enumerate(res.entropy_trace):
            event = "" if step_no == 0 else _event_label(res.record.events[step_no - 1], binary)
            rows.append((run, step_no, float(entropy), event))
    write_table(args.out, header, ["run", "step", "entropy", "event"], rows, args.format)

    purified = [r for r in results if r.purified_index is not None]
    hist = np.zeros(source.M + 1, dtype=int)
    for r in purified:
        hist[r.purified_index] += 1
    summary = {
        "header": header,
        "runs": len(results),
        "purified_histogram": hist.tolist(),
        "fraction_purified": len(purified) / len(results),
        "mean_steps_to_purity": (float(np.mean([r.steps for r in purified])) if purified else None),
        "final_entropy": [float(r.entropy_trace[-1]) for r in results],
    }
    if len(results) == 1:
        summary["final_state"] = [float(p) for p in results[0].final_state.probs]
    if record_prob is not None:
        summary["record_probability"] = record_prob
    summary_path = args.summary
    if summary_path is None and args.out not in (None, "-"):
        summary_path = str(args.out) + ".summary.json"
    if summary_path is None:
        sys.stderr.write(json.dumps(summary, sort_keys=True) + "\n")
    else:
        write_json(summary_path, summary)
    return EXIT_OK


def cmd_closed_form(args, argv) -> int:
    source, _ = _resolve_source(args)
    binary = (args.mode or "full") == "binary"
    if args.record is not None:
        record = parse_record(args.record, source.M, binary)
        counts = record.binary_counts() if binary else record.counts()
    elif args.counts is not None:
        values = parse_ints(args.counts)
        try:
            if binary:
                if len(values) != 2:
                    raise ValidationError("binary counts are given as j,q")
                counts = core.BinaryRecord(*values)
            else:
                counts = EventCounts(tuple(values))
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
    else:
        raise ValidationError("give --counts or --record")

    try:
        if binary:
            state, prob = core.state_from_binary_counts(source, counts)
            count_fields = {"j": counts.j, "q": counts.q}
        else:
            state, prob = core.state_from_counts(source, counts)
            count_fields = {"j": counts.j, "s": list(counts.s)}
    except ImpossibleOutcomeError as exc:
        raise ValidationError(str(exc)) from None
    except core.DimensionMismatchError as exc:
        raise ValidationError(str(exc)) from None

    params = {"source": [float(p) for p in source.probs], "mode": "binary" if binary else "full",
              **count_fields}
    out = {"header": make_header("closed-form", params, argv),
           "state": [float(p) for p in state.probs],
           "probability": prob,
           "entropy": core.von_neumann_entropy(state)}
    write_json(args.out, out)
    return EXIT_OK


CAT_COLUMNS = ["r", "eta_F", "epsilon", "R_low", "R_high", "eta_min", "eta_required",
               "R1_zero", "R1_not_zero", "above_threshold", "flag"]


def cat_sweep_rows(r_grid, eta_grid, epsilon: float):
    for r in r_grid:
        if abs(r) > 1:
            raise ValidationError(f"|r| must not exceed 1, got {r}")
        for eta in eta_grid:
            if not 0 <= eta <= 1:
                raise ValidationError(f"eta_F must lie in [0, 1], got {eta}")
            model = catloss.FeedbackModel(eta)
            flags = []
            low = high = None
            if r == 0:
                flags.append("r=0")
            elif eta == 0:
                flags.append("eta_F=0")
            else:
                low, high = catloss.stationary_bounds(r, eta)
            steps = []
            for ev in (BinaryEvent.ZERO, BinaryEvent.NOT_ZERO):
                try:
                    steps.append(catloss.purity_step(r, r, ev, model))
                except ValueError:
                    steps.append(None)
                    flags.append(f"{ev.name.lower()}_impossible")
            eta_min = catloss.min_feedback_efficiency(r)
            yield (r, eta, epsilon, low, high, eta_min,
                   catloss.required_efficiency(r, epsilon),
                   steps[0], steps[1], eta >= eta_min, ";".join(flags))


def cmd_cat_sweep(args, argv) -> int:
    r_grid = parse_grid(args.r_grid)
    eta_grid = parse_grid(args.etaF_grid)
    if not args.epsilon > 0:
        raise ValidationError("epsilon must be positive")
    rows = list(cat_sweep_rows(r_grid, eta_grid, args.epsilon))
    params = {"r_grid": r_grid, "etaF_grid": eta_grid, "epsilon": args.epsilon}
    write_table(args.out, make_header("cat-sweep", params, argv), CAT_COLUMNS, rows, args.format)
    return EXIT_OK


def _unnormalized_step(state, source, k):
    # negative control for the verifier: omits division by p(k)
    return state.probs * np.roll(source.probs, k)


def cmd_oracle_verify(args, argv) -> int:
    Ms = [args.M] if args.M is not None else [1, 2]
    Ns = [args.N] if args.N is not None else [1, 2]
    cases = [(M, N) for M in Ms for N in Ns]
    for M, N in cases:
        cutoff = args.cutoff or 2 * (M + 1)
        if M < 0 or N < 1:
            raise ValidationError("need M >= 0 and N >= 1")
        if cutoff % (M + 1):
            raise ValidationError(f"cutoff {cutoff} is not a multiple of M+1 = {M + 1}")
        if cutoff ** N > MAX_ORACLE_DIM:
            raise ValidationError(f"cutoff**N = {cutoff ** N} exceeds {MAX_ORACLE_DIM}")

    rng = np.random.default_rng(args.seed)
    engine = _unnormalized_step if args.corrupt_engine else None
    reports = []
    ok = True
    for M, N in cases:
        cutoff = args.cutoff or 2 * (M + 1)
        rep = oracle.compare_with_engine(M, N, args.trials, rng, cutoff=cutoff, engine_step=engine)
        single = oracle.check_single_instant(M, N, rng, cutoff=cutoff)
        rep["single_instant"] = single
        rep["pass"] = (rep["max_fidelity_deficit"] < args.tolerance
                       and rep["max_probability_deviation"] < args.tolerance
                       and single["max_fidelity_deficit"] < 1e-10
                       and single["max_probability_deviation"] < 1e-10)
        ok &= rep["pass"]
        reports.append(rep)
    params = {"cases": cases, "trials": args.trials, "cutoff": args.cutoff, "seed": args.seed,
              "tolerance": args.tolerance, "corrupt_engine": args.corrupt_engine}
    write_json(args.out, {"header": make_header("oracle-verify", params, argv),
                          "cases": reports, "pass": ok})
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="randpurify", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def source_args(p):
        p.add_argument("--source", help="probabilities 'p0,p1,...', 'geometric:base,M' or 'uniform:M'")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--M", type=int, help="truncation order for generator sources")

    p = sub.add_parser("simulate", help="random purification runs with entropy traces")
    source_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--stop-purity", type=_stop_purity, default=1 - 1e-9,
                   help="stop when max P_n reaches this value; 'none' disables")
    p.add_argument("--mode", choices=["full", "binary"])
    p.add_argument("--record", "--force-record", dest="record",
                   help="replay these events instead of sampling")
    p.add_argument("--out", help="trace file (default: stdout)")
    p.add_argument("--summary", help="summary JSON (default: OUT.summary.json or stderr)")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("closed-form", help="iterated state from event counts")
    source_args(p)
    p.add_argument("--counts", help="s_0,...,s_M (full) or j,q (binary)")
    p.add_argument("--record", help="event record, reduced to counts")
    p.add_argument("--mode", choices=["full", "binary"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_closed_form)

    p = sub.add_parser("cat-sweep", help="stationary bounds and thresholds for cat mixtures")
    p.add_argument("--r-grid", default="0.2,0.5,0.8", help="source purities: 'a,b,c' or 'start:stop:num'")
    p.add_argument("--etaF-grid", default="0.5:1:11", help="feedback efficiencies, same grid syntax")
    p.add_argument("--epsilon", type=float, default=0.01, help="target gap 1 - R_high for eta_required")
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "jsonl"], default="csv")
    p.set_defaults(func=cmd_cat_sweep)

    p = sub.add_parser("oracle-verify", help="check the engine against the Fock-space network")
    p.add_argument("--M", type=int, help="truncation order (default: 1 and 2)")
    p.add_argument("--N", type=int, help="modes per party (default: 1 and 2)")
    p.add_argument("--cutoff", type=int, help="Fock cutoff per mode, a multiple of M+1 (default 2(M+1))")
    p.add_argument("--trials", type=int, default=20, help="random mixtures per case")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--corrupt-engine", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(levelname)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, _strip_output_args(argv))
    except (ValidationError, ValueError) as exc:
        print(f"randpurify {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
