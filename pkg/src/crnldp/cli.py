"""``crnldp`` command line: one subcommand per capability, JSON/CSV outputs.

Exit codes: 0 ok (or ASE), 1 parse or usage error, 2 not ASE, 3 ODE blowup,
4 event cap, 5 exit-slope fit refused because of censoring.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .kinetics import BlowupDetected, asymptotic_rates, find_attractors, integrate_ode
from .lagrangian import lagrangian
from .network import CountState, Network
from .parse import ParseError, load_network
from .quasipotential import exit_exponent, quasipotential
from .ssa import DEFAULT_EVENT_CAP, DomainSpec, EventCap, ensemble_exit, simulate
from .topology import full_report

SCHEMA_VERSION = "1"

EXIT_OK, EXIT_PARSE, EXIT_NOT_ASE, EXIT_BLOWUP, EXIT_EVENT_CAP, EXIT_CENSORED = range(6)


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    seed_generated: bool = False
    outputs: dict = field(default_factory=dict)
    format: str = "json"


# --- argument syntax ---------------------------------------------------------------

def parse_named_vector(text: str, net: Network) -> np.ndarray:
    """``"A=1.0,B=0.5"``; species left out are 0."""
    out = np.zeros(net.d)
    if text is None or not text.strip():
        return out
    for item in text.split(","):
        if "=" not in item:
            raise UsageError(f"expected NAME=value, got {item!r}")
        name, value = (s.strip() for s in item.split("=", 1))
        if name not in net.species:
            raise UsageError(f"unknown species {name!r}")
        try:
            out[net.index(name)] = float(value)
        except ValueError:
            raise UsageError(f"not a number: {value!r}") from None
    return out


_TERM = re.compile(r"\s*([+-]?)\s*(?:([0-9.eE+-]+)\s*\*?\s*)?([A-Za-z_][A-Za-z0-9_]*)\s*")


def _linear_form(expr: str, net: Network) -> np.ndarray:
    a = np.zeros(net.d)
    pos = 0
    expr = expr.strip()
    while pos < len(expr):
        m = _TERM.match(expr, pos)
        if not m or m.end() == pos:
            raise UsageError(f"cannot read linear expression {expr!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        coeff = float(m.group(2)) if m.group(2) else 1.0
        name = m.group(3)
        if name not in net.species:
            raise UsageError(f"unknown species {name!r}")
        a[net.index(name)] += sign * coeff
        pos = m.end()
    return a


def parse_domain(text: str | None, net: Network) -> DomainSpec:
    """``"A=0:2;A+2*B<=3"``: boxes ``NAME=lo:hi`` (either end may be blank) and half-spaces."""
    lo = np.zeros(net.d)
    hi = np.full(net.d, np.inf)
    rows, rhs = [], []
    for part in (text or "").split(";"):
        part = part.strip()
        if not part:
            continue
        for rel in ("<=", ">="):
            if rel in part:
                left, right = part.split(rel, 1)
                a = _linear_form(left, net)
                try:
                    b = float(right)
                except ValueError:
                    raise UsageError(f"right-hand side must be a number in {part!r}") from None
                if rel == ">=":
                    a, b = -a, -b
                rows.append(a)
                rhs.append(b)
                break
        else:
            if "=" not in part or ":" not in part:
                raise UsageError(f"expected NAME=lo:hi or a half-space, got {part!r}")
            name, rng = (s.strip() for s in part.split("=", 1))
            if name not in net.species:
                raise UsageError(f"unknown species {name!r}")
            a_txt, b_txt = (s.strip() for s in rng.split(":", 1))
            i = net.index(name)
            try:
                lo[i] = float(a_txt) if a_txt else 0.0
                hi[i] = float(b_txt) if b_txt else np.inf
            except ValueError:
                raise UsageError(f"bad interval {rng!r}") from None
    if np.any(hi < lo):
        raise UsageError("empty box in domain")
    A = np.array(rows) if rows else None
    b = np.array(rhs) if rhs else None
    return DomainSpec(lo, hi, A, b)


def parse_volume_grid(text: str) -> list[float]:
    """``"40:160:40"`` (inclusive) or a comma list ``"40,80"``."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(s) for s in text.split(":"))
            if step <= 0:
                raise UsageError("grid step must be positive")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals = [start + k * step for k in range(n)]
        else:
            vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad volume grid {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise UsageError("volumes must be >= 1")
    return [int(v) if float(v).is_integer() else v for v in vals]


def _seed(args) -> tuple[int, bool]:
    if args.seed is not None:
        return int(args.seed), False
    return int(np.random.SeedSequence().entropy) & ((1 << 63) - 1), True


# --- output ---------------------------------------------------------------------

def write_atomic(path: str, text: str) -> None:
    """Write to a temporary file next to ``path``, then rename over it."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _finite(x):
    if x is None:
        return None
    return "inf" if math.isinf(x) else float(x)


def dump_json(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def emit(obj: dict, out: str | None, fmt: str = "json") -> None:
    text = dump_json(obj) if fmt == "json" else _human(obj)
    if out:
        write_atomic(out, dump_json(obj))
    if fmt == "human" or not out:
        sys.stdout.write(text)


def _human(obj, indent=0) -> str:
    lines = []
    pad = "  " * indent
    for k, v in obj.items():
        if isinstance(v, dict):
            lines.append(f"{pad}{k}:")
            lines.append(_human(v, indent + 1).rstrip("\n"))
        else:
            lines.append(f"{pad}{k}: {v}")
    return "\n".join(lines) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _envelope(cfg: RunConfig, body: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "config": asdict(cfg), **body}


# --- subcommands ----------------------------------------------------------------

def cmd_check(args) -> int:
    net = load_network(args.file)
    report = full_report(net)
    cfg = RunConfig("check", {"file": args.file}, outputs={"json": args.out}, format=args.format)
    emit(_envelope(cfg, report.to_dict(net)), args.out, args.format)
    return EXIT_OK if report.ase else EXIT_NOT_ASE


def cmd_ode(args) -> int:
    net = load_network(args.file)
    x0 = parse_named_vector(args.x0, net)
    traj = integrate_ode(net, x0, args.t_end, tol=args.tol)
    if args.samples:
        times = np.linspace(0.0, args.t_end, args.samples)
        states = traj(times)
    else:
        times, states = traj.times, traj.states
    rows = [[repr(float(t)), *(repr(float(v)) for v in s)] for t, s in zip(times, states)]
    text = _csv_text(["t", *net.species], rows)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    net = load_network(args.file)
    seed, generated = _seed(args)
    x0 = parse_named_vector(args.x0, net)
    start = CountState.from_concentration(x0, args.volume)
    os.makedirs(args.out_dir, exist_ok=True)
    reps = []
    for k in range(args.replicas):
        traj = simulate(net, args.volume, start, args.t_end, seed, k, event_cap=args.event_cap)
        buf = io.StringIO()
        traj.to_csv(net, buf)
        write_atomic(os.path.join(args.out_dir, f"rep_{k}.csv"), buf.getvalue())
        reps.append({
            "replica": k,
            "n_events": traj.n_events,
            "final_counts": dict(zip(net.species, traj.final_state(net).counts)),
            "absorbed": traj.absorbed,
        })
    cfg = RunConfig("simulate", {"file": args.file, "volume": args.volume, "x0": args.x0,
                                 "t_end": args.t_end, "replicas": args.replicas},
                    seed, generated, {"dir": args.out_dir}, args.format)
    summary = _envelope(cfg, {"initial_counts": dict(zip(net.species, start.counts)), "replicas": reps})
    write_atomic(os.path.join(args.out_dir, "summary.json"), dump_json(summary))
    if args.format == "human":
        sys.stdout.write(_human({"replicas": len(reps), "seed": seed, "dir": args.out_dir}))
    return EXIT_OK


def cmd_lagrangian(args) -> int:
    net = load_network(args.file)
    x = parse_named_vector(args.x, net)
    xi = parse_named_vector(args.xi, net)
    res = lagrangian(asymptotic_rates(net, x), xi, net.vectors)
    cfg = RunConfig("lagrangian", {"file": args.file, "x": args.x, "xi": args.xi},
                    outputs={"json": args.out}, format=args.format)
    emit(_envelope(cfg, res.to_dict()), args.out, args.format)
    return EXIT_OK


def cmd_qpot(args) -> int:
    net = load_network(args.file)
    seed, generated = _seed(args)
    x = parse_named_vector(args.from_, net)
    y = parse_named_vector(args.to, net)
    domain = parse_domain(args.domain, net)
    res = quasipotential(net, x, y, domain, args.segments, args.restarts, seed)
    if args.path_out:
        rows = [[repr(float(t)), *(repr(float(v)) for v in node)] for t, node in zip(res.path.times, res.path.nodes)]
        write_atomic(args.path_out, _csv_text(["t", *net.species], rows))
    cfg = RunConfig("qpot", {"file": args.file, "from": args.from_, "to": args.to, "domain": args.domain,
                             "segments": args.segments, "restarts": args.restarts},
                    seed, generated, {"json": args.out, "path": args.path_out}, args.format)
    emit(_envelope(cfg, res.to_dict()), args.out, args.format)
    return EXIT_OK


def cmd_exit(args) -> int:
    net = load_network(args.file)
    seed, generated = _seed(args)
    grid = parse_volume_grid(args.volume_grid)
    x0 = parse_named_vector(args.x0, net)
    domain = parse_domain(args.domain, net)
    summary = ensemble_exit(net, grid, x0, domain, args.replicas, args.t_max, seed, event_cap=args.event_cap)
    table = _csv_text(
        ["v", "mean_tau", "log_mean", "ci_low", "ci_high", "n_censored"],
        [[r.volume, repr(r.mean_tau), repr(r.log_mean), repr(r.ci[0]), repr(r.ci[1]), r.n_censored]
         for r in summary.rows],
    )
    if args.out:
        write_atomic(args.out, table)
    body = {"rows": [r.to_dict() for r in summary.rows], "fit": summary.fit.to_dict(),
            "predicted_exponent": None, "relative_error": None}
    if args.predict:
        pred = exit_exponent(net, domain, args.segments, args.restarts, seed, start=x0)
        body["predicted_exponent"] = _finite(pred)
        if summary.fit.slope is not None and math.isfinite(pred) and pred > 0:
            body["relative_error"] = abs(summary.fit.slope - pred) / pred
    cfg = RunConfig("exit", {"file": args.file, "volume_grid": grid, "x0": args.x0, "domain": args.domain,
                             "replicas": args.replicas, "t_max": args.t_max, "predict": args.predict},
                    seed, generated, {"csv": args.out, "json": args.json}, args.format)
    emit(_envelope(cfg, body), args.json, args.format)
    if summary.fit.refused:
        print(f"slope fit refused: {summary.fit.reason}", file=sys.stderr)
        return EXIT_CENSORED
    return EXIT_OK


def cmd_attractors(args) -> int:
    net = load_network(args.file)
    seed, generated = _seed(args)
    try:
        box = parse_domain(args.box, net)
        empty = False
    except UsageError as exc:
        if "empty box" not in str(exc):
            raise
        box, empty = None, True
    found = [] if empty else find_attractors(net, (box.lower, box.upper), n_starts=args.starts, seed=seed)
    cfg = RunConfig("attractors", {"file": args.file, "box": args.box, "starts": args.starts},
                    seed, generated, {"json": args.out}, args.format)
    body = {"attractors": [{"point": dict(zip(net.species, a.point.tolist())), "stable": a.stable}
                           for a in found]}
    emit(_envelope(cfg, body), args.out, args.format)
    return EXIT_OK


# --- parser ------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crnldp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=False):
        sp.add_argument("file", help="network in .crn format")
        sp.add_argument("--format", choices=["json", "human"], default="json")
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="64-bit seed (generated and recorded if absent)")

    sp = sub.add_parser("check", help="topological certificates")
    common(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("ode", help="integrate the mass-action ODE")
    common(sp)
    sp.add_argument("--x0", required=True)
    sp.add_argument("--t-end", type=float, required=True)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--samples", type=int, default=0, help="resample on a uniform grid of this many points")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ode)

    sp = sub.add_parser("simulate", help="Gillespie replicas")
    common(sp, seed=True)
    sp.add_argument("--volume", type=float, required=True)
    sp.add_argument("--x0", required=True)
    sp.add_argument("--t-end", type=float, required=True)
    sp.add_argument("--replicas", type=int, default=1)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--event-cap", type=int, default=DEFAULT_EVENT_CAP)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("lagrangian", help="evaluate L(lambda(x), xi)")
    common(sp)
    sp.add_argument("--x", required=True)
    sp.add_argument("--xi", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_lagrangian)

    sp = sub.add_parser("qpot", help="quasi-potential between two points")
    common(sp, seed=True)
    sp.add_argument("--from", dest="from_", required=True)
    sp.add_argument("--to", required=True)
    sp.add_argument("--domain", default=None)
    sp.add_argument("--segments", type=int, default=32)
    sp.add_argument("--restarts", type=int, default=4)
    sp.add_argument("--out")
    sp.add_argument("--path-out")
    sp.set_defaults(func=cmd_qpot)

    sp = sub.add_parser("exit", help="exit-time ensembles and slope fit")
    common(sp, seed=True)
    sp.add_argument("--volume-grid", required=True)
    sp.add_argument("--x0", required=True)
    sp.add_argument("--domain", required=True)
    sp.add_argument("--replicas", type=int, default=100)
    sp.add_argument("--t-max", type=float, required=True)
    sp.add_argument("--predict", action="store_true")
    sp.add_argument("--segments", type=int, default=32)
    sp.add_argument("--restarts", type=int, default=4)
    sp.add_argument("--event-cap", type=int, default=DEFAULT_EVENT_CAP)
    sp.add_argument("--out", help="CSV table path")
    sp.add_argument("--json", help="JSON summary path")
    sp.set_defaults(func=cmd_exit)

    sp = sub.add_parser("attractors", help="fixed points and their stability")
    common(sp, seed=True)
    sp.add_argument("--box", default=None)
    sp.add_argument("--starts", type=int, default=32)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_attractors)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"{args.file}:{exc}", file=sys.stderr)
        return EXIT_PARSE
    except BlowupDetected as exc:
        print(f"crnldp: ODE blowup: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except EventCap as exc:
        print(f"crnldp: event cap: {exc}", file=sys.stderr)
        return EXIT_EVENT_CAP
    except (ValueError, OSError) as exc:
        print(f"crnldp: {exc}", file=sys.stderr)
        return EXIT_PARSE



if __name__ == "__main__":
    sys.exit(main())
