"""Command-line front end: JSON experiment configs in, CSV curves out.

Every subcommand accepts ``--config file.json`` whose keys are flag names
(with or without the leading dashes, hyphens or underscores); flags given
on the command line take precedence.  Output goes to stdout or ``--out``
and ends with a ``#`` comment line recording the tool version, seed and
sample counts.

Exit codes: 0 success, 1 invalid input, 2 infeasible or unstable
configuration, 3 numerical failure.  Errors are reported on stderr as a
single JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .age import AgePolicy, age_violation, high_rate_limit, peak_age_pgf
from .channel import ChannelSpec, ServiceModel, arq_service_model, rcus_epsilon
from .errors import ConfigError, InfeasibleError, NoFeasibleRateError, UrllcLabError
from .pgf import invert_ccdf, saddlepoint_ccdf
from .queueing import (
    QueueConfig,
    delay_pgf_async,
    delay_pgf_sync,
    delay_violation,
    exact_violation,
    frames_threshold,
    max_arrival_rate,
    snc_delay_bound,
    snc_violation,
)
from .sim import simulate_async_delay, simulate_fcfs_delay, simulate_peak_age
from .vlsf import default_gamma_grid, simulate_threshold_grid, vlsf_service_model

PROG = "urllc-lab"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# argument helpers


def _floats(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError("expected a comma-separated list of numbers, got %r" % text) from None


def _ints(text) -> list:
    """``"5,10,20"`` or a range ``"20:250"`` / ``"20:250:10"`` (inclusive)."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    if isinstance(text, int):
        return [text]
    s = str(text)
    try:
        if ":" in s:
            parts = [int(p) for p in s.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            step = parts[2] if len(parts) == 3 else 1
            if step < 1 or parts[1] < parts[0]:
                raise ValueError
            return list(range(parts[0], parts[1] + 1, step))
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("expected integers or a range lo:hi[:step], got %r" % text) from None


def _prob(name, value, upper_open=False):
    if value is None:
        return None
    v = float(value)
    ok = 0.0 <= v < 1.0 if upper_open else 0.0 <= v <= 1.0
    if not ok:
        raise ConfigError("%s=%r is outside its valid range" % (name, value))
    return v


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise ConfigError("missing required parameter --%s" % n.replace("_", "-"))


def _add_common(p, samples_default=100_000):
    p.add_argument("--config", help="JSON file with parameter values")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(_samples_default=samples_default)


def _add_service(p):
    g = p.add_argument_group("service model")
    g.add_argument("--service", choices=["arq", "vlsf"], default=None)
    g.add_argument("--eps-frame", type=float, default=None, help="ARQ frame-error probability (skips RCUs)")
    g.add_argument("--snr-db", type=float, default=None)
    g.add_argument("--k", type=int, default=None, help="information bits per packet")
    g.add_argument("--gamma", type=float, default=None, help="VLSF threshold (nats)")
    g.add_argument("--ell-max", type=int, default=None)


def _add_queue(p, lam_list=False):
    p.add_argument("--n", type=int, default=None, help="frame size (channel uses)")
    if lam_list:
        p.add_argument("--lambda", dest="lam", default=None, help="arrival probability per channel use (list ok)")
    else:
        p.add_argument("--lambda", dest="lam", type=float, default=None, help="arrival probability per channel use")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description="Delay and peak-age violation analysis for short-packet links.")
    parser.add_argument("--version", action="version", version="%s %s" % (PROG, __version__))
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("rcus", help="RCUs frame-error bound over the bi-AWGN channel")
    _add_common(p, 1_000_000)
    p.add_argument("--n", default=None, help="frame sizes (list or lo:hi[:step])")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--snr-db", default=None, help="SNR values in dB (list)")
    p.add_argument("--alphas", default=None, help="alpha grid (list)")

    p = sub.add_parser("vlsf-bound", help="threshold-decoding stopping time and error terms")
    _add_common(p, 100_000)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--gamma", default=None, help="threshold list (nats); default: 20 log-spaced points")
    p.add_argument("--ell-max", type=int, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="add P_dv columns for this rate")
    p.add_argument("--d0", type=int, default=None)

    for name, hlp in (("delay-ccdf", "delay tail curve"), ("delay-violation", "delay-violation probability")):
        p = sub.add_parser(name, help=hlp)
        _add_common(p)
        _add_queue(p)
        _add_service(p)
        p.add_argument("--model", choices=["sync", "async"], default=None)
        if name == "delay-ccdf":
            p.add_argument("--dmax", type=int, default=None)
            p.add_argument("--method", choices=["exact", "saddlepoint", "both"], default=None)
        else:
            p.add_argument("--d0", default=None, help="delay thresholds in channel uses (list or range)")
            p.add_argument("--method", choices=["exact", "saddlepoint"], default=None)

    p = sub.add_parser("snc-bound", help="network-calculus bound next to the exact tail (ARQ)")
    _add_common(p)
    _add_queue(p)
    _add_service(p)
    p.add_argument("--d0", default=None, help="delay thresholds in channel uses (list or range)")

    p = sub.add_parser("throughput", help="maximum throughput under a delay-violation target")
    _add_common(p)
    _add_service(p)
    p.add_argument("--n-range", default=None, help="frame sizes (list or lo:hi[:step])")
    p.add_argument("--d0", type=int, default=None)
    p.add_argument("--target", type=float, default=None)
    p.add_argument("--bound", choices=["exact", "snc", "both"], default=None)

    for name, hlp in (("age-ccdf", "peak-age tail curves"), ("age-violation", "peak-age violation probability")):
        p = sub.add_parser(name, help=hlp)
        _add_common(p)
        _add_queue(p, lam_list=(name == "age-violation"))
        _add_service(p)
        p.add_argument("--policy", default=None, help="DWT, KTN, KTL, LCFS_S or 'all' (list ok)")
        p.add_argument("--method", choices=["exact", "saddlepoint"], default=None)
        if name == "age-ccdf":
            p.add_argument("--amax", type=int, default=None, help="largest threshold in frames")
        else:
            p.add_argument("--a0", default=None, help="age thresholds in channel uses (list or range)")

    p = sub.add_parser("high-rate-limit", help="peak-age violation limit as the arrival rate tends to one")
    _add_common(p)
    p.add_argument("--policy", default=None)
    p.add_argument("--eps-frame", type=float, default=None)
    p.add_argument("--a0", default=None)
    p.add_argument("--n", type=int, default=None)

    p = sub.add_parser("simulate", help="discrete-event reference simulation")
    _add_common(p, 1_000_000)
    _add_queue(p)
    _add_service(p)
    p.add_argument("--kind", choices=["fcfs", "async", "age"], default=None)
    p.add_argument("--policy", default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--kmax", type=int, default=None, help="largest reported index")
    return parser


_DEFAULTS = {
    "seed": 0,
    "service": "arq",
    "model": "sync",
    "method": "exact",
    "ell_max": 10,
    "bound": "exact",
    "policy": "all",
    "kind": "fcfs",
    "dmax": 30,
    "amax": 30,
}


def _apply_config(args, argv):
    """Fill unset attributes from ``--config`` and then from defaults."""
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError("cannot read config %s: %s" % (args.config, exc)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config %s is not valid JSON: %s" % (args.config, exc)) from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        for key, value in cfg.items():
            dest = key.lstrip("-").replace("-", "_")
            if dest == "lambda":
                dest = "lam"
            if dest in ("config", "command") or not hasattr(args, dest):
                raise ConfigError("unknown config key %r for %s" % (key, args.command))
            if getattr(args, dest) is None:
                setattr(args, dest, value)
    for key, value in _DEFAULTS.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    if getattr(args, "samples", None) is None:
        args.samples = args._samples_default
    if int(args.samples) < 1:
        raise ConfigError("samples must be >= 1")
    args.samples = int(args.samples)
    args.seed = int(args.seed)
    if getattr(args, "lam", None) is not None and not isinstance(args.lam, str):
        args.lam = _prob("lambda", args.lam)
    if getattr(args, "eps_frame", None) is not None:
        args.eps_frame = _prob("eps-frame", args.eps_frame, upper_open=True)
    if getattr(args, "target", None) is not None:
        args.target = float(args.target)
        if not 0.0 < args.target <= 1.0:
            raise ConfigError("target must lie in (0, 1]")


# ---------------------------------------------------------------------------
# service construction


def _rho(args) -> float:
    _require(args, "snr_db")
    return 10.0 ** (float(args.snr_db) / 10.0)


def _service(args, n: int, provenance: dict) -> ServiceModel:
    if args.service == "arq":
        if args.eps_frame is not None:
            return arq_service_model(args.eps_frame)
        _require(args, "k")
        est = rcus_epsilon(ChannelSpec(_rho(args), n), int(args.k), samples=args.samples, seed=args.seed)
        provenance.setdefault("rcus_samples", args.samples)
        if not est.value < 1.0:
            raise InfeasibleError("frame-error probability is 1 at n=%d: service never completes" % n)
        return arq_service_model(est.value)
    _require(args, "k", "gamma")
    res = simulate_threshold_grid(
        ChannelSpec(_rho(args), n), int(args.k), [float(args.gamma)], int(args.ell_max), args.samples, args.seed
    )[0]
    provenance.setdefault("vlsf_samples", args.samples)
    return vlsf_service_model(res)


def _policies(value) -> list:
    if value is None or str(value).lower() == "all":
        return list(AgePolicy)
    items = value if isinstance(value, (list, tuple)) else str(value).split(",")
    return [AgePolicy.parse(v.strip() if isinstance(v, str) else v) for v in items]


# ---------------------------------------------------------------------------
# subcommands; each returns (header, rows, provenance)


def _cmd_rcus(args):
    _require(args, "n", "k", "snr_db")
    alphas = _floats(args.alphas) if args.alphas is not None else None
    rows = []
    for snr in _floats(args.snr_db):
        for n in _ints(args.n):
            spec = ChannelSpec(10.0 ** (snr / 10.0), n)
            kw = {} if alphas is None else {"alpha_candidates": alphas}
            est = rcus_epsilon(spec, int(args.k), samples=args.samples, seed=args.seed, **kw)
            rows.append([n, int(args.k), snr, est.value, est.half_width, est.alpha])
    header = ["n", "k", "snr_db", "epsilon", "half_width", "alpha"]
    return header, rows, {"samples": args.samples}


def _cmd_vlsf_bound(args):
    _require(args, "n", "k", "snr_db")
    spec = ChannelSpec(_rho(args), int(args.n))
    grid = default_gamma_grid(int(args.k)) if args.gamma is None else _floats(args.gamma)
    ell = int(args.ell_max)
    results = simulate_threshold_grid(spec, int(args.k), grid, ell, args.samples, args.seed)
    with_queue = args.lam is not None
    if with_queue:
        _require(args, "d0")
        q = QueueConfig(spec.n, args.lam)
    header = ["gamma", "eps_undetected_bound", "eps_detected_term", "eps_total", "mean_frames"]
    header += ["tail_%d" % t for t in range(1, ell + 1)]
    if with_queue:
        header += ["feasible", "delay_tail", "p_dv"]
    rows = []
    for r in results:
        service = vlsf_service_model(r)
        row = [r.gamma, r.eps_undetected_bound.value, r.eps_detected_term.value, r.eps_total, service.mean()]
        row += list(r.tail_values())
        if with_queue:
            try:
                a = delay_violation(delay_pgf_sync(service, q), int(args.d0), q, service.eps_undetected)
                row += [1, a.tail, a.p_dv]
            except InfeasibleError:
                row += [0, 1.0, 1.0]
        rows.append(row)
    return header, rows, {"samples": args.samples}


def _delay_pgf(args, service, q):
    return delay_pgf_sync(service, q) if args.model == "sync" else delay_pgf_async(service, q)


def _cmd_delay_ccdf(args):
    _require(args, "n", "lam")
    prov = {}
    service = _service(args, int(args.n), prov)
    q = QueueConfig(int(args.n), args.lam)
    G = _delay_pgf(args, service, q)
    dmax = int(args.dmax)
    if dmax < 1:
        raise ConfigError("dmax must be >= 1")
    methods = ["exact", "saddlepoint"] if args.method == "both" else [args.method]
    cols = {}
    if "exact" in methods:
        curve = invert_ccdf(G, dmax - 1)
        cols["exact"] = [curve.at(d - 1) for d in range(1, dmax + 1)]
    if "saddlepoint" in methods:
        cols["saddlepoint"] = [saddlepoint_ccdf(G, d) for d in range(1, dmax + 1)]
    header = ["d"] + methods
    rows = [[d] + [cols[m][d - 1] for m in methods] for d in range(1, dmax + 1)]
    return header, rows, prov


def _cmd_delay_violation(args):
    _require(args, "n", "lam", "d0")
    prov = {}
    service = _service(args, int(args.n), prov)
    q = QueueConfig(int(args.n), args.lam)
    G = _delay_pgf(args, service, q)
    unit = "frames" if args.model == "sync" else "channel_uses"
    rows = []
    for d0 in _ints(args.d0):
        a = delay_violation(G, d0, q, service.eps_undetected, args.method, unit=unit)
        rows.append([d0, a.threshold, a.tail, service.eps_undetected, a.p_dv])
    return ["d0", "threshold", "tail", "eps_undetected", "p_dv"], rows, prov


def _cmd_snc_bound(args):
    _require(args, "n", "lam", "d0")
    prov = {}
    if args.service != "arq":
        raise ConfigError("the network-calculus bound is only available for ARQ service")
    service = _service(args, int(args.n), prov)
    q = QueueConfig(int(args.n), args.lam)
    try:
        G = delay_pgf_sync(service, q)
    except InfeasibleError:
        G = None
    rows = []
    for d0 in _ints(args.d0):
        d = frames_threshold(d0, q.n)
        exact = delay_violation(G, d0, q).tail if G is not None else 1.0
        rows.append([d0, d, exact, snc_delay_bound(service.eps_frame, q, d0)])
    return ["d0", "threshold", "exact", "snc"], rows, prov


def _cmd_throughput(args):
    _require(args, "n_range", "d0", "target")
    k = int(args.k) if args.k is not None else 1
    bounds = ["exact", "snc"] if args.bound == "both" else [args.bound]
    prov = {}
    header = ["n", "epsilon", "eps_undetected"]
    for b in bounds:
        suffix = "" if b == "exact" and len(bounds) == 1 else "_" + b
        header += ["lambda_star" + suffix, "throughput" + suffix, "feasible" + suffix]
    rows = []
    for n in _ints(args.n_range):
        try:
            service = _service(args, n, prov)
        except InfeasibleError:
            service = None
        eps = service.eps_frame if service is not None and service.kind == "geometric" else float("nan")
        row = [n, 1.0 if service is None else eps, 1.0 if service is None else service.eps_undetected]
        if service is not None and service.kind != "geometric":
            row[1] = 1.0 - 1.0 / service.mean()
        for b in bounds:
            if service is None:
                row += [0.0, 0.0, 0]
                continue
            fn = exact_violation(service, n, int(args.d0)) if b == "exact" else snc_violation(service, n, int(args.d0))
            try:
                lam, thr = max_arrival_rate(service, n, int(args.d0), args.target, k, violation=fn)
                row += [lam, thr, 1]
            except NoFeasibleRateError:
                row += [0.0, 0.0, 0]
        rows.append(row)
    return header, rows, prov


def _lams(args) -> list:
    _require(args, "lam")
    values = _floats(args.lam)
    return [_prob("lambda", v) for v in values]


def _cmd_age_ccdf(args):
    _require(args, "n", "lam")
    prov = {}
    service = _service(args, int(args.n), prov)
    q = QueueConfig(int(args.n), float(args.lam))
    amax = int(args.amax)
    if amax < 1:
        raise ConfigError("amax must be >= 1")
    pols = _policies(args.policy)
    cols = []
    for pol in pols:
        G = peak_age_pgf(pol, service, q)
        if args.method == "exact":
            curve = invert_ccdf(G, amax - 1)
            cols.append([curve.at(j - 1) for j in range(1, amax + 1)])
        else:
            cols.append([saddlepoint_ccdf(G, j) for j in range(1, amax + 1)])
    header = ["j"] + [p.value for p in pols]
    rows = [[j] + [c[j - 1] for c in cols] for j in range(1, amax + 1)]
    return header, rows, prov


def _cmd_age_violation(args):
    _require(args, "n", "a0")
    prov = {}
    n = int(args.n)
    service = _service(args, n, prov)
    rows = []
    for pol in _policies(args.policy):
        for lam in _lams(args):
            q = QueueConfig(n, lam)
            try:
                G = peak_age_pgf(pol, service, q)
            except InfeasibleError:
                G = None
            for a0 in _ints(args.a0):
                if G is None:
                    rows.append([pol.value, lam, a0, frames_threshold(a0, n), 1.0, 1.0])
                    continue
                a = age_violation(G, a0, q, service.eps_undetected, args.method)
                rows.append([pol.value, lam, a0, a.threshold, a.tail, a.p_av])
    return ["policy", "lambda", "a0", "threshold", "tail", "p_av"], rows, prov


def _cmd_high_rate_limit(args):
    _require(args, "eps_frame", "a0", "n")
    rows = []
    for pol in _policies(args.policy):
        for a0 in _ints(args.a0):
            rows.append([pol.value, a0, high_rate_limit(pol, args.eps_frame, a0, int(args.n))])
    return ["policy", "a0", "limit"], rows, {}


def _cmd_simulate(args):
    _require(args, "n", "lam")
    prov = {}
    service = _service(args, int(args.n), prov)
    q = QueueConfig(int(args.n), args.lam)
    num = args.samples
    if args.kind == "fcfs":
        rep = simulate_fcfs_delay(service, q, num, args.warmup, args.seed)
    elif args.kind == "async":
        rep = simulate_async_delay(service, q, num, args.warmup, args.seed)
    else:
        pols = _policies(args.policy)
        if len(pols) != 1:
            raise ConfigError("simulate --kind age needs a single --policy")
        rep = simulate_peak_age(pols[0], service, q, num, args.warmup, args.seed)
    kmax = rep.tail.size - 1 if args.kmax is None else int(args.kmax)
    rows = [[k, rep.tail_gt(k), rep.se_gt(k)] for k in range(kmax + 1)]
    prov.update({"sim_samples": rep.samples, "warmup": rep.config["warmup"]})
    return ["k", "tail_gt", "std_error"], rows, prov


_COMMANDS = {
    "rcus": _cmd_rcus,
    "vlsf-bound": _cmd_vlsf_bound,
    "delay-ccdf": _cmd_delay_ccdf,
    "delay-violation": _cmd_delay_violation,
    "snc-bound": _cmd_snc_bound,
    "throughput": _cmd_throughput,
    "age-ccdf": _cmd_age_ccdf,
    "age-violation": _cmd_age_violation,
    "high-rate-limit": _cmd_high_rate_limit,
    "simulate": _cmd_simulate,
}


# ---------------------------------------------------------------------------
# output


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    x = float(v)
    if math.isnan(x):
        return "nan"
    if x == 0.0:
        x = 0.0  # drop the sign of negative zero
    return "%.9e" % x


def render_csv(header, rows, footer: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    buf.write("# " + footer + "\r\n")
    return buf.getvalue()


def _footer(command, seed, prov) -> str:
    items = ["%s %s" % (PROG, __version__), "command=%s" % command, "seed=%d" % seed]
    items += ["%s=%s" % (k, prov[k]) for k in sorted(prov)]
    return " ".join(items)


def _emit_error(exc: BaseException, code: int, kind: str):
    payload = {"error": kind, "exit_code": code, "message": str(exc)}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = _build_parser()
        args = parser.parse_args(argv)
        if not args.command:
            raise ConfigError("a subcommand is required (one of %s)" % ", ".join(_COMMANDS))
        _apply_config(args, argv)
        header, rows, prov = _COMMANDS[args.command](args)
        prov = dict(prov)
        prov.setdefault("samples", args.samples) if args.command in ("rcus", "vlsf-bound") else None
        text = render_csv(header, rows, _footer(args.command, args.seed, prov))
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
            sys.stdout.flush()
        return 0
    except UrllcLabError as exc:
        _emit_error(exc, exc.exit_code, exc.kind)
        return exc.exit_code
    except (TypeError, ValueError) as exc:
        # malformed config values that slipped past the explicit checks
        _emit_error(exc, 1, "config")
        return 1
    except (ArithmeticError, OverflowError, FloatingPointError) as exc:
        _emit_error(exc, 3, "numerical")
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
