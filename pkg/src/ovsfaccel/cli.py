"""Command-line entry point: ``ovsfaccel {compress,simulate,estimate,dse,report}``."""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import warnings
from dataclasses import asdict

import numpy as np

from . import __version__
from .compress import count_params
from .container import read_compressed, read_weights, write_compressed
from .dse import SearchSpace, search, top_k_csv
from .exceptions import InvariantError, OvsfAccelError, ValidationError
from .models import BANDWIDTH_TIERS, apply_schedule, parse_bandwidth
from .perf import estimate
from .textio import load_model, load_platform, load_schedule
from .wgen import DesignPoint
from .workflow import compress_model, random_weights, simulate_layer

CONFIG_ENV = "OVSFACCEL_CONFIG"
DEFAULT_PLATFORM = "z7045"
EXIT_OK, EXIT_INVARIANT, EXIT_INPUT = 0, 1, 2


# --- formatting ------------------------------------------------------------

def _cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, bool):
        return "PASS" if v else "FAIL"
    return str(v)


def render_table(rows, columns, fmt):
    rows = [[_cell(r[c]) for c in columns] for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(columns)
        wr.writerows(rows)
        return buf.getvalue()
    widths = [max(len(c), *(len(r[i]) for r in rows)) if rows else len(c) for i, c in enumerate(columns)]
    line = lambda cells: "| " + " | ".join(s.ljust(w) for s, w in zip(cells, widths)) + " |"
    out = [line(columns), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def header(args, **extra):
    items = {"command": args.command, "seed": args.seed, **extra}
    text = " ".join(f"{k}={v}" for k, v in items.items())
    return f"# ovsfaccel {__version__} {text}\n"


def emit(args, text):
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- argument helpers ------------------------------------------------------

def _platform(args):
    ref = args.platform or os.environ.get(CONFIG_ENV) or DEFAULT_PLATFORM
    p = load_platform(ref)
    if getattr(args, "bw", None) is not None:
        p = p.with_bandwidth(parse_bandwidth(args.bw))
    return p


def _model(args):
    model = load_model(args.model)
    if args.schedule:
        model = apply_schedule(model, load_schedule(args.schedule))
    return model


def _layer_filter(args):
    return set(args.layers.split(",")) if getattr(args, "layers", None) else None


def _selective(args):
    return None if args.selective is None else args.selective == "on"


def parse_space(text):
    """``"M=64,128;T_R=16,32;T_P=8;T_C=64"``; axes left out keep their defaults."""
    kwargs = {}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        key, _, vals = part.partition("=")
        key = key.strip()
        if key not in ("M", "T_R", "T_P", "T_C") or not vals:
            raise argparse.ArgumentTypeError(f"bad search space axis {part!r}")
        try:
            kwargs[key] = tuple(int(v) for v in vals.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad search space values {vals!r}") from None
    return SearchSpace(**kwargs)


def _sigma(text):
    try:
        return DesignPoint.parse(text)
    except OvsfAccelError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# --- commands --------------------------------------------------------------

def cmd_compress(args):
    model = _model(args)
    tensors = read_weights(args.weights) if args.weights else random_weights(model, args.seed)
    layers, rows = compress_model(model, tensors, args.selection, _layer_filter(args))
    if args.container:
        write_compressed(args.container, layers)
    orig, comp = count_params(model)
    cols = ["layer", "mode", "ratio", "retained", "params_original", "params_compressed", "max_abs_error"]
    text = header(args, model=model.name, params_original=orig, params_compressed=comp)
    emit(args, text + render_table([asdict(r) for r in rows], cols, args.format))
    return EXIT_OK


def cmd_simulate(args):
    model = _model(args)
    if args.compressed:
        layers = read_compressed(args.compressed)
    else:
        tensors = read_weights(args.weights) if args.weights else random_weights(model, args.seed)
        layers, _ = compress_model(model, tensors, "shared", _layer_filter(args))
    wanted = _layer_filter(args)
    rng = np.random.default_rng(args.seed)
    checks, traces = [], []
    for cl in layers:
        if cl.is_bypass or (wanted and cl.layer_id not in wanted):
            continue
        try:
            spec = model.layer(cl.layer_id)
        except KeyError:
            raise ValidationError(f"container layer {cl.layer_id!r} is not in model {model.name!r}") from None
        chk, trace = simulate_layer(cl, spec, args.sigma, args.mode, rng, k_max=model.k_max,
                                    max_positions=args.max_rows)
        checks.append(chk)
        traces.append((cl.layer_id, trace))
    if args.trace_out:
        with open(args.trace_out, "w") as fh:
            for name, tr in traces:
                fh.write(f"# layer={name}\n")
                tr.to_csv(fh)
    cols = ["layer", "mode", "aligner", "wgen_cycles", "expected_cycles", "wgen_equal", "cycles_equal",
            "engine_equal", "conv_equal"]
    ok = all(c.passed for c in checks)
    text = header(args, model=model.name, sigma=args.sigma, mode=args.mode, result="PASS" if ok else "FAIL")
    emit(args, text + render_table([{**asdict(c)} for c in checks], cols, args.format))
    if not ok:
        raise InvariantError("generator/engine equivalence failed for "
                             + ",".join(c.layer for c in checks if not c.passed))
    return EXIT_OK


def cmd_estimate(args):
    model = _model(args)
    plat = _platform(args)
    est = estimate(model, args.sigma, plat, args.variant, _selective(args))
    cols = ["name", "R", "P", "C", "t_mem_in", "t_wgen", "t_eng", "t_mem_out", "ii", "t_total",
            "bottleneck", "weights"]
    text = header(args, model=model.name, platform=plat.name, bw=plat.bw_in, variant=args.variant,
                  sigma=args.sigma, inf_per_s=f"{est.throughput:.6g}", total_cycles=est.total_cycles)
    emit(args, text + render_table(est.rows(), cols, args.format))
    return EXIT_OK


def cmd_dse(args):
    model = _model(args)
    plat = _platform(args)
    res = search(model, plat, args.space, args.variant, selective=_selective(args), n_jobs=args.jobs,
                 top_k=args.top_k)
    row = {"M": res.sigma.M, "T_R": res.sigma.T_R, "T_P": res.sigma.T_P, "T_C": res.sigma.T_C,
           "inf_per_s": res.throughput, **res.usage.as_dict(), **res.stats}
    text = header(args, model=model.name, platform=plat.name, bw=plat.bw_in, variant=args.variant)
    text += render_table([row], list(row), args.format)
    if args.top_k:
        text += "\n" + top_k_csv(res) if args.format == "csv" else "\n" + render_table(
            [{"rank": i, "sigma": str(s), "inf_per_s": t} for i, (s, t) in enumerate(res.top, 1)],
            ["rank", "sigma", "inf_per_s"], "md")
    emit(args, text)
    return EXIT_OK


def bandwidth_sweep(model_name, platform, schedules, tiers, space=None, n_jobs=1):
    """Throughput rows per schedule across bandwidth tiers, plus speedup rows vs the first schedule."""
    base_model = load_model(model_name)
    rows, per = [], {}
    for sched_name in schedules:
        sched = load_schedule(sched_name)
        variant = "baseline" if all(r >= 1.0 for r in sched.ratios) and not sched.overrides else "unzip"
        _, params = count_params(base_model, sched)
        row = {"model": base_model.name, "schedule": sched.name, "variant": variant,
               "params_M": round(params / 1e6, 2)}
        for tier in tiers:
            res = search(base_model, platform.with_bandwidth(parse_bandwidth(tier)), space, variant,
                         schedule=sched, n_jobs=n_jobs)
            row[tier] = res.throughput
        per[sched.name] = row
        rows.append(row)
    ref = rows[0]
    for row in rows[1:]:
        rows.append({"model": row["model"], "schedule": f"speedup:{row['schedule']}", "variant": "",
                     "params_M": "", **{t: row[t] / ref[t] for t in tiers}})
    return rows


def cmd_report(args):
    plat = _platform(args)
    tiers = [t.strip() for t in args.tiers.split(",")]
    schedules = [s.strip() for s in args.schedules.split(",")]
    rows = []
    for m in args.models.split(","):
        rows += bandwidth_sweep(m.strip(), plat, schedules, tiers, args.space, args.jobs)
    cols = ["model", "schedule", "variant", "params_M"] + tiers
    text = header(args, platform=plat.name, tiers=",".join(f"{t}:{parse_bandwidth(t)}" for t in tiers))
    emit(args, text + render_table(rows, cols, args.format))
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="ovsfaccel", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", required=True, help="model file or preset name")
            sp.add_argument("--schedule", help="ratio schedule file or preset name")
        sp.add_argument("--out", help="write the report here instead of stdout")
        sp.add_argument("--format", choices=("md", "csv"), default="md")
        sp.add_argument("--seed", type=int, default=0)

    def hw(sp):
        sp.add_argument("--platform", help=f"platform file or preset (default: ${CONFIG_ENV} or {DEFAULT_PLATFORM})")
        sp.add_argument("--bw", help="bandwidth in GB/s or a tier such as 4x")
        sp.add_argument("--variant", choices=("unzip", "baseline"), default="unzip")
        sp.add_argument("--selective", choices=("on", "off"))

    sp = sub.add_parser("compress", help="compress weights into a coefficient container")
    common(sp)
    sp.add_argument("--weights", help="raw weight container (random weights from --seed if omitted)")
    sp.add_argument("--container", help="path of the compressed container to write")
    sp.add_argument("--selection", choices=("shared", "per_filter"), default="shared")
    sp.add_argument("--layers", help="comma-separated layer names")
    sp.set_defaults(func=cmd_compress)

    sp = sub.add_parser("simulate", help="run the generator and engine and check equivalence")
    common(sp)
    sp.add_argument("--compressed", help="compressed container from the compress command")
    sp.add_argument("--weights")
    sp.add_argument("--sigma", type=_sigma, required=True, help="M,T_R,T_P,T_C")
    sp.add_argument("--mode", choices=("float", "fixed16"), default="fixed16")
    sp.add_argument("--layers")
    sp.add_argument("--max-rows", type=int, help="limit engine checks to the first output positions")
    sp.add_argument("--trace-out", help="CSV of per-tile generator cycles")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="per-layer performance estimate for one design point")
    common(sp)
    hw(sp)
    sp.add_argument("--sigma", type=_sigma, required=True)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("dse", help="search the best design point")
    common(sp)
    hw(sp)
    sp.add_argument("--space", type=parse_space, help='e.g. "M=64,128;T_R=16,32;T_P=8;T_C=64"')
    sp.add_argument("--top-k", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_dse)

    sp = sub.add_parser("report", help="throughput across bandwidth tiers")
    common(sp, model=False)
    sp.add_argument("--platform")
    sp.add_argument("--models", default="resnet18,resnet34")
    sp.add_argument("--schedules", default="baseline,ovsf50,ovsf25",
                    help="first entry is the reference for speedup rows")
    sp.add_argument("--tiers", default=",".join(BANDWIDTH_TIERS))
    sp.add_argument("--space", type=parse_space)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            return args.func(args)
    except InvariantError as exc:
        print(f"ovsfaccel: invariant failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (OvsfAccelError, OSError) as exc:
        print(f"ovsfaccel: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
