"""Command-line entry point: `mtocap <command> ...`."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from contextlib import contextmanager
from pathlib import Path

from . import capacity, conflict, hfp, simulator, topology
from .geometry import RadioConfig

log = logging.getLogger("mtocap")


class UsageError(ValueError):
    pass


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _radio(args) -> RadioConfig:
    return RadioConfig(tx_range=args.tx_range,
                       cs_range=args.csrange if args.csrange is not None else 2.7 * args.tx_range,
                       path_loss_exp=args.alpha, sir_threshold=args.sir,
                       rs_mode=not args.no_rs)


def _mac(args) -> simulator.MacParams:
    return simulator.MacParams(payload_bytes=args.payload, eifs=args.eifs)


# -- generate --------------------------------------------------------------

def cmd_generate(args) -> int:
    k = args.kind
    if k == "canonical":
        sp = [args.d0, args.d1 if args.d1 is not None else args.d0]
        sp.append(args.d if args.d is not None else args.d0)
        topo = topology.build_canonical(topology.CanonicalSpec(args.chains, args.hops, tuple(sp)))
    elif k == "chain":
        topo = topology.build_linear_chain(args.n, args.d or 250.0, args.policy)
    elif k == "two_chain":
        topo = topology.build_two_chain_asym(args.d or 250.0, math.radians(args.bend_deg),
                                             args.hops)
    elif k == "random_disk":
        topo = topology.build_random_disk(args.radius, args.tx_range, args.sources, args.seed)
    elif k == "centric":
        topo = topology.build_centric(args.outer, args.inner or 980.0, n_outer=args.n_outer or 284,
                                      seed=args.seed, min_sep=args.min_sep, tx_range=args.tx_range)
    elif k == "manifold":
        topo = topology.build_manifold(args.outer, args.inner or 1026.0, args.seed,
                                       n_outer=args.n_outer or 269, min_sep=args.min_sep,
                                       tx_range=args.tx_range, jitter=args.jitter)
    elif k == "benchmark":
        topo = topology.build_random_benchmark(args.outer, args.inner or 980.0,
                                               n_inner=args.n_inner, n_outer=args.n_outer or 284,
                                               min_sep=args.min_sep, seed=args.seed,
                                               tx_range=args.tx_range)
    elif k == "fig17":
        topo = topology.build_fig17(args.d0)
    else:
        raise UsageError(f"unknown kind {k}")
    with _output(args.out) as fh:
        fh.write(topology.dumps(topo))
    msg = f"nodes {len(topo.nodes)} links {len(topo.links)} sources {len(topo.sources)}"
    if k in ("centric", "manifold"):
        inner = sum(1 for n in topo.nodes
                    if topo.roles[n] in (topology.NodeRole.RELAY, topology.NodeRole.SINK))
        msg += f" inner {inner}"
    print(msg, file=sys.stderr)
    if args.plot:
        _plot_topology(args.plot, topo)
    return 0


def _plot_topology(path, topo):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 5))
    pos = topo.positions
    used = {l.key for l in topo.route_links()}
    for l in topo.links:
        if l.key in used or (l.rx, l.tx) not in used:
            a, b = pos[l.tx], pos[l.rx]
            on = l.key in used
            ax.plot([a.x, b.x], [a.y, b.y], color="k" if on else "0.8", lw=0.8 if on else 0.4,
                    zorder=1)
    roles = topology.NodeRole
    style = {roles.SINK: ("red", 40), roles.RELAY: ("tab:blue", 10),
             roles.SOURCE: ("tab:green", 14), roles.SOURCE_AND_RELAY: ("tab:green", 10)}
    for role, (c, size) in style.items():
        xy = [pos[n] for n in topo.nodes if topo.roles[n] is role]
        if xy:
            ax.scatter([p.x for p in xy], [p.y for p in xy], s=size, c=c, label=role.value,
                       zorder=2)
    ax.set_aspect("equal")
    ax.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# -- analyze ---------------------------------------------------------------

def cmd_analyze(args) -> int:
    topo = topology.load(args.topology)
    cfg = _radio(args)
    lines = []
    if cfg.rs_mode:
        lines.append(f"min_hfd_csrange: {conflict.min_hfd_csrange(topo, cfg, grid=args.grid):.3f}")
    hn = conflict.hidden_node_pairs(topo, cfg)
    lines.append(f"csrange: {cfg.cs_range:.3f}")
    lines.append(f"hidden_node_pairs: {len(hn)}")
    try:
        lines.append(capacity.upper_bound(topo, cfg).as_text())
    except ValueError as e:
        lines.append(f"ring2_concurrency: {conflict.max_concurrent_ring(topo, cfg, 2)}")
        lines.append(f"bound_fraction: n/a ({e})")
    with _output(args.out) as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


# -- verify-schedule -------------------------------------------------------

def cmd_verify(args) -> int:
    topo = topology.load(args.topology)
    cfg = _radio(args)
    if args.schedule:
        sched = capacity.Schedule.loads(Path(args.schedule).read_text())
    elif args.fixture == "fig9":
        sched = capacity.fig9_schedule(_hops(topo))
    elif args.fixture == "fig12":
        sched = capacity.fig12_schedule(_hops(topo))
    elif args.fixture == "chain":
        sched = capacity.chain_schedule(len(topo.nodes) - 1)
    else:
        raise UsageError("give --schedule FILE or --fixture")
    bad = capacity.verify_schedule(topo, sched, cfg, args.mode)
    lines = [f"status: {'ok' if not bad else 'violations'}"]
    lines += [str(v) for v in bad]
    if not bad:
        rep = capacity.schedule_throughput(topo, sched, cfg, args.fairness)
        lines.append(f"aggregate: {rep.aggregate} ({float(rep.aggregate):.4f})")
        lines += [f"flow {s}: {r}" for s, r in rep.per_flow.items()]
    if args.dump:
        lines.append(sched.dumps().rstrip())
    with _output(args.out) as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def _hops(topo) -> int:
    return max(topo.ring_index.values())


# -- simulation commands ---------------------------------------------------

def _grid(args, l_sim, n_sources):
    if args.load_min is None and args.load_max is None:
        return simulator.default_load_grid(l_sim, n_sources, args.load_points)
    lo = args.load_min if args.load_min is not None else args.load_max
    hi = args.load_max if args.load_max is not None else lo
    if lo <= 0 or hi < lo:
        raise UsageError("need 0 < --load-min <= --load-max")
    if args.load_points == 1 or lo == hi:
        return [lo]
    r = (hi / lo) ** (1 / (args.load_points - 1))
    return [lo * r ** k for k in range(args.load_points)]


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _plot(path, xs, ys, xlabel, ylabel):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, ys, marker="o", lw=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_simulate(args) -> int:
    topo = topology.load(args.topology)
    cfg, mac = _radio(args), _mac(args)
    l_sim = simulator.measure_link_capacity(mac)
    res = simulator.run(topo, cfg, mac, simulator.TrafficSpec(args.load, args.process),
                        args.duration, args.seed, args.mode)
    rows = simulator.csv_rows([(cfg.cs_range, res)], l_sim)
    with _output(args.out) as fh:
        simulator.write_csv(rows, fh)
    return 0


def cmd_sweep(args) -> int:
    topo = topology.load(args.topology)
    cfg, mac = _radio(args), _mac(args)
    l_sim = simulator.measure_link_capacity(mac)
    grid = _grid(args, l_sim, len(topo.sources))
    sw = simulator.sweep_load(topo, cfg, mac, grid, args.duration, args.seed, args.mode,
                              args.process)
    rows = simulator.csv_rows([(cfg.cs_range, r) for _, r in sw.curve], l_sim)
    with _output(args.out) as fh:
        simulator.write_csv(rows, fh)
    print(f"best_load {sw.best_load:.6g} throughput_over_L "
          f"{sw.best.aggregate_throughput / l_sim:.4f}", file=sys.stderr)
    if args.plot:
        _plot(args.plot, [l for l, _ in sw.curve],
              [r.aggregate_throughput / l_sim for _, r in sw.curve],
              "offered load per source (bit/s)", "throughput / L")
    return 0


def cmd_csrange_sweep(args) -> int:
    topo = topology.load(args.topology)
    base, mac = _radio(args), _mac(args)
    if args.csranges:
        cs_grid = [float(x) for x in args.csranges.split(",")]
    else:
        if args.cs_min is None or args.cs_max is None:
            raise UsageError("give --csranges or --cs-min/--cs-max")
        n = int(round((args.cs_max - args.cs_min) / args.cs_step)) + 1
        cs_grid = [args.cs_min + k * args.cs_step for k in range(n)]
    l_sim = simulator.measure_link_capacity(mac)
    grid = _grid(args, l_sim, len(topo.sources))
    rows = simulator.csrange_sweep(topo, mac, cs_grid, args.duration, args.seed, base,
                                   grid, args.mode)
    out = simulator.csv_rows([(r.cs_range, r.best) for r in rows], l_sim)
    with _output(args.out) as fh:
        simulator.write_csv([o + [str(r.hfd).lower()] for o, r in zip(out, rows)], fh,
                            extra=["hfd"])
    if args.plot:
        _plot(args.plot, cs_grid, [r.best.aggregate_throughput / l_sim for r in rows],
              "CSRange (m)", "best throughput / L")
    return 0


def cmd_hfp(args) -> int:
    topo = topology.load(args.topology)
    cfg, mac = _radio(args), _mac(args)
    schemes = (1, 2, 3) if args.scheme == "all" else (int(args.scheme),)
    sels = [hfp.select(topo, cfg, s, **({"budget": args.budget} if s == 3 else {}))
            for s in schemes]
    if args.selection_out:
        with _output(args.selection_out) as fh:
            fh.write("\n".join(s.dumps() for s in sels))
    header = ["scheme", "csrange", "cs_over_tx", "throughput_bps", "throughput_over_L"]
    rows = []
    l_sim = simulator.measure_link_capacity(mac) if args.simulate else None
    for s in sels:
        row = [s.scheme, f"{s.cs_range:.6g}", f"{s.cs_range / cfg.tx_range:.4f}", "", ""]
        if args.simulate:
            sub = s.topology(topo)
            grid = _grid(args, l_sim, len(sub.sources))
            sw = simulator.sweep_load(sub, s.config(cfg), mac, grid, args.duration,
                                      args.seed, args.mode)
            thr = sw.best.aggregate_throughput
            row[3], row[4] = f"{thr:.6g}", f"{thr / l_sim:.4f}"
        rows.append(row)
    with _output(args.out) as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(r) + "\n")
    return 0


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    radio = argparse.ArgumentParser(add_help=False)
    radio.add_argument("--tx-range", type=float, default=250.0, help="meters")
    radio.add_argument("--csrange", type=float, default=None,
                       help="carrier-sensing range in meters (default 2.7 x tx-range)")
    radio.add_argument("--alpha", type=float, default=4.0, help="path-loss exponent")
    radio.add_argument("--sir", type=float, default=10.0, help="SIR threshold (linear)")
    radio.add_argument("--no-rs", action="store_true", help="disable receiver restart")
    radio.add_argument("--mode", choices=("pairwise", "aggregate"), default="pairwise")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--duration", type=float, default=15.0, help="seconds")
    sim.add_argument("--process", choices=("cbr", "poisson"), default="cbr")
    sim.add_argument("--payload", type=int, default=1460, help="bytes")
    sim.add_argument("--eifs", action="store_true", help="use EIFS after undecodable frames")
    sim.add_argument("--load-min", type=float, default=None, help="bit/s per source")
    sim.add_argument("--load-max", type=float, default=None, help="bit/s per source")
    sim.add_argument("--load-points", type=int, default=20)
    sim.add_argument("--plot", default=None, help="write an SVG curve here")

    p = argparse.ArgumentParser(prog="mtocap", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="build a topology file")
    g.add_argument("kind", choices=("canonical", "chain", "two_chain", "random_disk",
                                    "centric", "manifold", "benchmark", "fig17"))
    g.add_argument("--chains", type=int, default=3)
    g.add_argument("--hops", type=int, default=7)
    g.add_argument("--d0", type=float, default=250.0, help="meters")
    g.add_argument("--d1", type=float, default=None, help="meters")
    g.add_argument("--d", type=float, default=None, help="meters")
    g.add_argument("--n", type=int, default=4)
    g.add_argument("--policy", choices=topology.CHAIN_POLICIES, default="all")
    g.add_argument("--bend-deg", type=float, default=144.0)
    g.add_argument("--radius", type=float, default=1.0)
    g.add_argument("--sources", type=int, default=6)
    g.add_argument("--tx-range", type=float, default=None)
    g.add_argument("--outer", type=float, default=2000.0)
    g.add_argument("--inner", type=float, default=None)
    g.add_argument("--n-outer", type=int, default=None)
    g.add_argument("--n-inner", type=int, default=146)
    g.add_argument("--min-sep", type=float, default=125.0)
    g.add_argument("--jitter", type=float, default=0.0, help="fraction of d0")
    g.add_argument("--plot", default=None, help="write an SVG drawing of the topology here")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("analyze", parents=[common, radio], help="bounds and hidden nodes")
    a.add_argument("topology")
    a.add_argument("--grid", type=float, default=None, help="round min HFD CSRange up to this step")
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("verify-schedule", parents=[common, radio], help="check a slot schedule")
    v.add_argument("topology")
    v.add_argument("--schedule", default=None)
    v.add_argument("--fixture", choices=("fig9", "fig12", "chain"), default=None)
    v.add_argument("--fairness", choices=("uniform", "max"), default="uniform")
    v.add_argument("--dump", action="store_true", help="also print the schedule")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", parents=[common, radio, sim], help="one simulation run")
    s.add_argument("topology")
    s.add_argument("--load", type=float, required=True, help="bit/s per source")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", parents=[common, radio, sim], help="offered-load sweep")
    w.add_argument("topology")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("csrange-sweep", parents=[common, radio, sim], help="CSRange sweep")
    c.add_argument("topology")
    c.add_argument("--csranges", default=None, help="comma-separated meters")
    c.add_argument("--cs-min", type=float, default=None)
    c.add_argument("--cs-max", type=float, default=None)
    c.add_argument("--cs-step", type=float, default=50.0)
    c.set_defaults(func=cmd_csrange_sweep)

    h = sub.add_parser("hfp", parents=[common, radio, sim], help="path selection schemes")
    h.add_argument("topology")
    h.add_argument("--scheme", choices=("1", "2", "3", "all"), default="all")
    h.add_argument("--budget", type=int, default=20_000)
    h.add_argument("--simulate", action="store_true")
    h.add_argument("--selection-out", default=None)
    h.set_defaults(func=cmd_hfp)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "tx_range", 0) is None:
        args.tx_range = 0.4 if args.kind == "random_disk" else 250.0
    try:
        return args.func(args)
    except (ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
