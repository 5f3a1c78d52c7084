"""Command-line front end.

Subcommands: gen (synthetic event streams), train (layer-by-layer STDP),
infer (replay + records), export-kernels, flow (kernel -> optical flow),
response (rate table over a ventral-flow grid), stdp-compare (weight
histogram evolution under the three plasticity rules).

Exit codes: 0 success, 1 validation error, 2 I/O error.  All inputs are
validated before any output file is touched; outputs are written
atomically.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

import numpy as np

from .errors import SpikeflowError
from .events import (Bar, CameraModel, Checkerboard, PlanarMotion,
                     read_events, write_events)
from .flow import flows_csv, layer_flows, response_curve
from .layers import Kernel, LayerKind, export_kernels
from .network import (TrainSchedule, build, infer, load_weights, read_config,
                      read_weights, save_weights, stdp_compare, train_layer,
                      weight_histogram_rows)
from .plasticity import RuleKind


class CliError(Exception):
    """Validation failure; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _require_file(path, flag):
    if not os.path.isfile(path):
        raise CliError(f"{flag}: file not found: {path}")
    return path


def _write_text(path, text):
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="ascii") as f:
            f.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _data_pool(data_dir, flag):
    if not os.path.isdir(data_dir):
        raise CliError(f"{flag}: directory not found: {data_dir}")
    paths = []
    for ext in ("*.csv", "*.evt", "*.bin"):
        paths.extend(glob.glob(os.path.join(data_dir, ext)))
    if not paths:
        raise CliError(f"{flag}: no event files (*.csv, *.evt, *.bin) in {data_dir}")
    return sorted(paths)


def _load_network(config_path, weights_path=None):
    _require_file(config_path, "--config")
    network = build(read_config(config_path))
    if weights_path is not None:
        _require_file(weights_path, "--weights")
        load_weights(network, weights_path)
    return network


def _plastic_indices(network):
    return [i for i, l in enumerate(network.layers) if l.plastic]


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen(args):
    if args.duration_ms <= 0:
        raise CliError("--duration-ms: duration must be positive")
    if args.width <= 0 or args.height <= 0:
        raise CliError("--width/--height: resolution must be positive")
    if args.contrast <= 0:
        raise CliError("--contrast: threshold must be positive")
    if args.pattern == "checkerboard":
        pattern = Checkerboard()
    else:
        # bar perpendicular to the dominant motion direction
        pattern = Bar(horizontal=abs(args.wy) > abs(args.wx))
    camera = CameraModel(contrast=args.contrast)
    motion = PlanarMotion.from_ventral_flow(args.wx, args.wy)
    from .events import generate_events
    stream = generate_events(pattern, motion, camera,
                             int(args.duration_ms * 1000),
                             args.width, args.height)
    write_events(stream, args.out)
    print(f"wrote {len(stream)} events to {args.out}")


def _cmd_train(args):
    network = _load_network(args.config)
    pool = _data_pool(args.data_dir, "--data-dir")
    plastic = _plastic_indices(network)
    if not plastic:
        raise CliError("--config: network has no plastic layer to train")
    target = plastic[-1] if args.layer is None else network.layer_index(
        int(args.layer) if args.layer.isdigit() else args.layer)
    if not network.layers[target].plastic:
        raise CliError(f"--layer: layer {args.layer} is not plastic")
    seed = network.config.seed if args.seed is None else args.seed

    log_lines = ["layer,presentation,update,L"]
    for li in plastic:
        if li > target:
            break
        schedule = TrainSchedule(pool=pool,
                                 max_presentations=args.max_presentations,
                                 seed=seed + 7919 * li)
        result = train_layer(network, li, schedule)
        for upd, (pres, l_val) in enumerate(result.l_values):
            log_lines.append(f"{li},{pres},{upd},{l_val!r}")
        state = "converged" if result.converged else "budget exhausted"
        print(f"layer {li} ({network.layers[li].cfg.kind.value}): "
              f"{state} after {result.presentations} presentations, "
              f"{len(result.l_values)} updates")
    save_weights(network, args.weights_out)
    print(f"wrote weights to {args.weights_out}")
    if args.log_out:
        _write_text(args.log_out, "\n".join(log_lines) + "\n")


def _cmd_infer(args):
    network = _load_network(args.config, args.weights)
    _require_file(args.events, "--events")
    stream = read_events(args.events)
    result = infer(network, stream)
    lines = ["layer,step,map,y,x"]
    for li, rec in enumerate(result.records):
        for step, k, y, x in rec.spikes:
            lines.append(f"{li},{step},{k},{y},{x}")
    _write_text(args.spikes_out, "\n".join(lines) + "\n")
    n = result.trace_history.shape[1]
    tlines = ["step," + ",".join(f"y{i}" for i in range(n))]
    for step in range(result.n_steps):
        tlines.append(f"{step}," + ",".join(repr(v) for v in result.trace_history[step]))
    _write_text(args.traces_out, "\n".join(tlines) + "\n")
    total = sum(len(rec.spikes) for rec in result.records)
    print(f"replayed {result.n_steps} steps, {total} spikes across "
          f"{len(result.records)} layers")


def _pick_stored_layer(stored, ref, flag):
    if ref.isdigit():
        idx = int(ref)
        if not 0 <= idx < len(stored):
            raise CliError(f"{flag}: layer index {idx} out of range")
        return idx, stored[idx]
    for i, lw in enumerate(stored):
        if lw.kind.value.lower() == ref.lower():
            return i, lw
    raise CliError(f"{flag}: no layer of kind {ref!r} in weights file")


def _cmd_export_kernels(args):
    _require_file(args.weights, "--weights")
    stored = read_weights(args.weights)
    idx, lw = _pick_stored_layer(stored, args.layer, "--layer")
    if lw.exc is None:
        raise CliError(f"--layer: layer {idx} has no stored kernels")
    paths = export_kernels(Kernel(exc=lw.exc, inh=lw.inh), lw.tau_ms,
                           args.out_dir, fmt=args.format,
                           prefix=f"layer{idx}_kernel")
    print(f"wrote {len(paths)} files to {args.out_dir}")


def _cmd_flow(args):
    _require_file(args.weights, "--weights")
    if not 0.0 <= args.gamma <= 1.0:
        raise CliError("--gamma: must lie in [0, 1]")
    stored = read_weights(args.weights)
    idx, lw = _pick_stored_layer(stored, args.layer, "--layer")
    if lw.exc is None or lw.exc.shape[-1] < 2:
        raise CliError(f"--layer: layer {idx} has no multi-delay kernels")
    flows = layer_flows(lw.exc, lw.tau_ms, args.gamma)
    _write_text(args.out, flows_csv(flows))
    print(f"wrote {len(flows)} kernel flows to {args.out}")


def _parse_grid(spec):
    def axis(text):
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError("--grid: expected min:max:count per axis")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise CliError("--grid: count must be at least 1")
        return np.linspace(lo, hi, n)
    axes = spec.split(",")
    if len(axes) == 1:
        xs, ys = axis(axes[0]), np.array([0.0])
    elif len(axes) == 2:
        xs, ys = axis(axes[0]), axis(axes[1])
    else:
        raise CliError("--grid: expected one or two axes")
    return [(float(x), float(y)) for y in ys for x in xs]


def _cmd_response(args):
    network = _load_network(args.config, args.weights)
    points = _parse_grid(args.grid)
    table = response_curve(network, points)
    _write_text(args.out, table.csv())
    print(f"wrote {len(points)} response rows to {args.out}")


def _cmd_stdp_compare(args):
    network = _load_network(args.config)
    pool = _data_pool(args.data_dir, "--data-dir")
    plastic = _plastic_indices(network)
    if not plastic:
        raise CliError("--config: network has no plastic layer")
    rule = RuleKind(args.rule)
    schedule = TrainSchedule(pool=pool, max_presentations=100,
                             seed=network.config.seed)
    snaps = stdp_compare(network, plastic[0], schedule, rule)
    lo, hi, rows = weight_histogram_rows(snaps)
    lines = ["pct,bin_lo,bin_hi," + ",".join(f"c{i:02d}" for i in range(50))]
    for pct, counts in rows:
        lines.append(f"{pct:g},{lo!r},{hi!r}," + ",".join(str(c) for c in counts))
    _write_text(args.hist_out, "\n".join(lines) + "\n")
    print(f"wrote {len(rows)} histogram rows to {args.hist_out}")


# ---------------------------------------------------------------------------
# argument wiring


def _build_parser():
    parser = _Parser(prog="spikeflow",
                     description="Event-driven SNN motion perception toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic event stream")
    p.add_argument("--pattern", choices=["checkerboard", "bar"],
                   default="checkerboard")
    p.add_argument("--wx", type=float, default=1.0,
                   help="horizontal ventral flow (1/s)")
    p.add_argument("--wy", type=float, default=0.0,
                   help="vertical ventral flow (1/s)")
    p.add_argument("--duration-ms", type=float, default=500.0)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--contrast", type=float, default=0.15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train", help="train plastic layers, layer by layer")
    p.add_argument("--config", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--layer", default=None,
                   help="train up to this layer (index or kind); default: all")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-presentations", type=int, default=100)
    p.add_argument("--weights-out", required=True)
    p.add_argument("--log-out", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("infer", help="replay a stream through a trained network")
    p.add_argument("--config", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--spikes-out", required=True)
    p.add_argument("--traces-out", required=True)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("export-kernels", help="dump kernels as CSV or PGM")
    p.add_argument("--weights", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=["csv", "pgm"], default="csv")
    p.set_defaults(func=_cmd_export_kernels)

    p = sub.add_parser("flow", help="extract optical flow from kernels")
    p.add_argument("--weights", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_flow)

    p = sub.add_parser("response", help="response rates over a ventral-flow grid")
    p.add_argument("--config", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--grid", required=True,
                   help="wx_min:wx_max:n[,wy_min:wy_max:n]")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_response)

    p = sub.add_parser("stdp-compare",
                       help="weight histogram evolution under a plasticity rule")
    p.add_argument("--rule", choices=[r.value for r in RuleKind], required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--hist-out", required=True)
    p.set_defaults(func=_cmd_stdp_compare)
    return parser


def run(argv=None):
    """Entry point returning an exit code instead of raising SystemExit."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SpikeflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
