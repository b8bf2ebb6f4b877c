"""
Command-line entry point for jellynet.
Generates topology blueprints, evaluates them and runs named experiments.
CSV goes to stdout (or --out); logs go to stderr and the log file.

Exit codes: 0 ok, 1 usage (bad flags or parameters), 2 runtime failure.
"""

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd
from dotenv import load_dotenv

import expand
import flow
import metrics
import route
import settings
import topo
from experiments import ExperimentParams, ExperimentRunner
from logging_config import LoggedOperation, get_logger, setup_logging
from models import ExperimentError, JellynetError, ParameterError, PathLevel, RoutingMode, Topology, TopologyError
from topology_parser import TopologyParser

logger = get_logger('cli')

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    """Bad command line."""


class _ArgumentParser(argparse.ArgumentParser):
    """Raises instead of exiting so main() owns the exit code."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _ints(text: str, count: int, flag: str) -> List[int]:
    parts = text.split(',')
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise ParameterError(f"{flag} expects {count} comma-separated integers, got '{text}'") from None
    if len(values) != count:
        raise ParameterError(f"{flag} expects {count} comma-separated integers, got {len(values)}")
    return values


def _floats(text: str) -> List[float]:
    try:
        return [float(p) for p in text.split(',') if p.strip()]
    except ValueError:
        raise ParameterError(f"expected comma-separated numbers, got '{text}'") from None


def _float_format() -> str:
    return str(settings.get_section('experiments').get('float_format', '%.6f'))


def _emit_text(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding='utf-8', newline='\n')
        logger.info(f"Wrote {out}")
    else:
        sys.stdout.write(text)


def _emit_frame(frame: pd.DataFrame, out: Optional[str]) -> None:
    _emit_text(frame.to_csv(index=False, float_format=_float_format(), lineterminator='\n'), out)


def _read(path: str) -> Topology:
    return TopologyParser().read(path)


# -- commands ---------------------------------------------------------------------------------------

def cmd_gen(args: argparse.Namespace) -> int:
    chosen = [f for f in ('rrg', 'fat_tree', 'swdc', 'layered', 'import_path') if getattr(args, f) is not None]
    if len(chosen) != 1:
        raise UsageError("gen needs exactly one of --rrg, --fat-tree, --swdc, --layered, --import")
    if args.rrg is not None:
        n, k, r = _ints(args.rrg, 3, '--rrg')
        topology = topo.build_rrg(n, k, r, args.seed)
    elif args.fat_tree is not None:
        topology = topo.build_fat_tree(args.fat_tree)
    elif args.swdc is not None:
        variant, _, rest = args.swdc.partition(',')
        n, degree, servers = _ints(rest, 3, '--swdc')
        topology = topo.build_swdc(variant, n, degree, servers, args.seed)
    elif args.layered is not None:
        c, m, k, r_local, r_global, servers = _ints(args.layered, 6, '--layered')
        topology = topo.build_layered_rrg(c, m, k, r_local, r_global, servers, args.seed)
    else:
        if args.ports is None:
            raise ParameterError("--import needs --ports")
        topology = topo.load_edge_list(args.import_path, args.ports, args.servers)

    _emit_text(topo.serialize(topology), args.out)
    print(topology.summary(), file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    topology = _read(args.topology)
    if args.paths:
        _emit_frame(metrics.path_lengths(topology, PathLevel(args.paths)).to_frame(), args.out)
        return EXIT_OK
    if args.connectivity:
        rows = metrics.sample_pair_connectivity(topology, args.connectivity, args.seed)
        _emit_frame(pd.DataFrame(rows, columns=['src', 'dst', 'connectivity']), args.out)
        return EXIT_OK

    values = {'switches': topology.num_switches, 'servers': topology.num_servers, 'links': topology.num_links}
    try:
        dist = metrics.path_lengths(topology)
        values.update({'mean_path': dist.mean, 'diameter': dist.diameter})
    except TopologyError as e:
        logger.warning(f"Path metrics skipped: {e}")
    degrees = set(topology.degrees)
    if len(degrees) == 1 and topology.num_switches >= 2:
        r = degrees.pop()
        if r >= 1:
            values['bisection_bound'] = max(0.0, metrics.bisection_lower_bound(topology.num_switches, r))
        if r >= 3:
            values['diameter_bound'] = metrics.diameter_upper_bound(topology.num_switches, r)
    if topology.containers is not None:
        values['local_fraction'] = metrics.local_fraction(topology)
    _emit_frame(metrics.scalar_frame(values), args.out)
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    topology = _read(args.topology)
    traffic = flow.random_permutation(topology.num_servers, args.perm_seed)
    with LoggedOperation(f"solve {args.mode} on {topology.summary()}", 'cli'):
        if args.mode == 'optimal':
            solution = flow.max_concurrent_flow(topology, traffic, args.eps)
        else:
            solution = flow.restricted_flow(topology, traffic, RoutingMode(args.mode), args.limit, args.eps)
    row = {'param': args.mode, 'trial': 0, 'seed': topology.seed, 'perm_seed': args.perm_seed}
    row.update(flow.solution_row(solution))
    row.update({'upper_bound': solution.upper_bound, 'iterations': solution.iterations})
    _emit_frame(pd.DataFrame([row]), args.out)
    return EXIT_OK


def cmd_routes(args: argparse.Namespace) -> int:
    topology = _read(args.topology)
    traffic = flow.random_permutation(topology.num_servers, args.perm_seed)
    counts = route.link_path_counts(topology, route.switch_flows(topology, traffic),
                                    RoutingMode(args.mode), args.limit)
    if args.hist:
        frame = route.path_count_ranking(counts)
        logger.info(f"{route.fraction_at_most(counts, 2):.1%} of directed links carry at most 2 paths")
    else:
        frame = pd.DataFrame([(a, b, c) for (a, b), c in counts.items()], columns=['src', 'dst', 'count'])
    _emit_frame(frame, args.out)
    return EXIT_OK


def cmd_expand(args: argparse.Namespace) -> int:
    topology = _read(args.topology)
    grown, steps = expand.grow(topology, args.add, args.ports, args.servers, args.seed)
    if args.log:
        Path(args.log).write_text(TopologyParser().serialize_steps(steps), encoding='utf-8', newline='\n')
    _emit_text(topo.serialize(grown), args.out)
    print(grown.summary(), file=sys.stdout if args.out else sys.stderr)
    return EXIT_OK


def cmd_fail(args: argparse.Namespace) -> int:
    topology = _read(args.topology)
    fractions = _floats(args.fraction)
    if not args.trials:
        if len(fractions) != 1:
            raise UsageError("writing a failed topology takes a single --fraction")
        damaged = expand.fail_links(topology, fractions[0], args.seed)
        _emit_text(topo.serialize(damaged), args.out)
        print(damaged.summary(), file=sys.stdout if args.out else sys.stderr)
        return EXIT_OK
    report = flow.throughput_vs_failures(topology, fractions, args.trials, args.eps, args.seed)
    _emit_text(report.to_csv(_float_format()), args.out)
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    params = ExperimentParams(
        seed=args.seed, perm_seed=args.perm_seed, trials=args.trials, max_ports=args.max_ports, eps=args.eps,
        jobs=args.jobs, fractions=_floats(args.fractions) if args.fractions else None,
        containers=args.containers, container_size=args.container_size, ports=args.ports,
        servers=args.servers, switches=args.switches, limit=args.limit, imports=list(args.imports or []))
    report = ExperimentRunner(params).run(args.name)
    _emit_text(report.to_csv(_float_format()), args.out)
    logger.info(f"Experiment {args.name}: {len(report.rows)} rows in {report.wall_time:.1f}s")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='jellynet', description="Jellyfish data center topology toolkit")
    parser.add_argument('--config', help="configuration file (default: $JELLYNET_CONFIG or config.json)")
    parser.add_argument('--log-level', help="console log level (DEBUG, INFO, WARNING, ...)")
    parser.add_argument('--log-file', help="log file override; empty string disables it")
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen', help="build a topology blueprint")
    gen.add_argument('--rrg', metavar='N,k,r')
    gen.add_argument('--fat-tree', type=int, metavar='k')
    gen.add_argument('--swdc', metavar='variant,N,deg,srv')
    gen.add_argument('--layered', metavar='C,M,k,rl,rg,srv')
    gen.add_argument('--import', dest='import_path', metavar='path')
    gen.add_argument('--ports', type=int, help="ports per switch for --import")
    gen.add_argument('--servers', type=int, default=0, help="servers per switch for --import")
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--out')
    gen.set_defaults(func=cmd_gen)

    met = sub.add_parser('metrics', help="graph statistics as CSV")
    met.add_argument('topology')
    met.add_argument('--paths', '--level', choices=[l.value for l in PathLevel], help="path-length histogram")
    met.add_argument('--connectivity', type=int, metavar='PAIRS', help="sampled pair connectivity")
    met.add_argument('--seed', type=int, default=0)
    met.add_argument('--out')
    met.set_defaults(func=cmd_metrics)

    solve = sub.add_parser('solve', help="throughput under one random permutation")
    solve.add_argument('topology')
    solve.add_argument('--perm-seed', type=int, default=0)
    solve.add_argument('--eps', type=float)
    solve.add_argument('--mode', choices=['optimal'] + [m.value for m in RoutingMode], default='optimal')
    solve.add_argument('--limit', type=int, default=8)
    solve.add_argument('--out')
    solve.set_defaults(func=cmd_solve)

    routes = sub.add_parser('routes', help="per-link path counts")
    routes.add_argument('topology')
    routes.add_argument('--mode', choices=[m.value for m in RoutingMode], default='ecmp')
    routes.add_argument('--limit', type=int, default=8)
    routes.add_argument('--perm-seed', type=int, default=0)
    routes.add_argument('--hist', action='store_true', help="ranked counts instead of per-link rows")
    routes.add_argument('--out')
    routes.set_defaults(func=cmd_routes)

    exp = sub.add_parser('expand', help="add racks incrementally")
    exp.add_argument('topology')
    exp.add_argument('--add', type=int, default=1, help="number of racks")
    exp.add_argument('--ports', type=int, required=True)
    exp.add_argument('--servers', type=int, default=0)
    exp.add_argument('--seed', type=int, default=0)
    exp.add_argument('--log', help="write the expansion log here")
    exp.add_argument('--out')
    exp.set_defaults(func=cmd_expand)

    fail = sub.add_parser('fail', help="random link failures")
    fail.add_argument('topology')
    fail.add_argument('--fraction', required=True, help="fraction, or comma list with --trials")
    fail.add_argument('--trials', type=int, default=0, help="evaluate throughput over this many trials")
    fail.add_argument('--eps', type=float)
    fail.add_argument('--seed', type=int, default=0)
    fail.add_argument('--out')
    fail.set_defaults(func=cmd_fail)

    run = sub.add_parser('experiment', help="named reproduction")
    run.add_argument('name')
    run.add_argument('--seed', type=int, default=1, help="topology seed")
    run.add_argument('--perm-seed', type=int, default=2, help="traffic seed")
    run.add_argument('--trials', type=int)
    run.add_argument('--max-ports', type=int)
    run.add_argument('--eps', type=float)
    run.add_argument('--jobs', type=int, help="worker processes (0: all cores)")
    run.add_argument('--fractions', help="failure fractions, comma separated")
    run.add_argument('--containers', type=int)
    run.add_argument('--container-size', type=int, default=8)
    run.add_argument('--ports', type=int, default=10)
    run.add_argument('--servers', type=int, default=4)
    run.add_argument('--switches', type=int, default=64)
    run.add_argument('--limit', type=int, default=8)
    run.add_argument('--import', dest='imports', action='append', metavar='path')
    run.add_argument('--out')
    run.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    if args.config:
        os.environ[settings.CONFIG_ENV_VAR] = args.config
        settings.reload()
    setup_logging(settings.config_path(), level=args.log_level, log_file=args.log_file)

    try:
        return args.func(args)
    except (UsageError, ParameterError, ExperimentError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_USAGE
    except (JellynetError, OSError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
