"""
Topology blueprint reader/writer.
Handles the line-oriented topology text format, bare edge lists and expansion logs.
"""

from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

from logging_config import get_logger, log_function_call
from models import (ExpansionKind, ExpansionStep, FormatError, Link, RNG_ID, Topology,
                    TopologyError, TopologyKind, normalize_link)

logger = get_logger('parser')

FORMAT_VERSION = 1
TOPOLOGY_HEADER = "jellynet-topology"
EXPANSION_HEADER = "jellynet-expansion"


def _content_lines(text: str) -> Iterator[Tuple[int, List[str]]]:
    """Yield (line number, tokens) for non-empty lines with comments stripped."""
    for line_no, raw in enumerate(text.split('\n'), 1):
        line = raw.split('#', 1)[0].strip()
        if line:
            yield line_no, line.split()


def _int(token: str, line_no: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise FormatError(f"expected integer {what}, got '{token}'", line_no) from None


class TopologyParser:
    """Reads and writes topology blueprints and expansion logs."""

    def __init__(self):
        self.logger = get_logger('parser')

    def _read_file(self, file_path: str) -> str:
        """Read a UTF-8 file (a leading BOM is tolerated)."""
        try:
            return Path(file_path).read_text(encoding='utf-8-sig')
        except UnicodeDecodeError as e:
            raise FormatError(f"{file_path} is not UTF-8: {e}") from None

    # -- topology text format -------------------------------------------------

    def serialize(self, topology: Topology) -> str:
        """Render a topology; links come out sorted so the bytes are deterministic."""
        extra = ''.join(f" {k}={v}" for k, v in topology.meta)
        lines = [
            f"{TOPOLOGY_HEADER} {FORMAT_VERSION}",
            f"kind {topology.kind.value} seed {topology.seed} rng {topology.rng}{extra}",
            f"switches {topology.num_switches}",
        ]
        for i, (k, s) in enumerate(zip(topology.ports, topology.servers)):
            line = f"switch {i} ports {k} servers {s}"
            if topology.containers is not None:
                line += f" container {topology.containers[i]}"
            lines.append(line)
        lines.extend(f"link {a} {b}" for a, b in topology.links)
        return '\n'.join(lines) + '\n'

    def deserialize(self, text: str) -> Topology:
        """Parse the topology text format; errors name the offending line."""
        lines = _content_lines(text)

        line_no, tokens = next(lines, (0, []))
        if len(tokens) != 2 or tokens[0] != TOPOLOGY_HEADER:
            raise FormatError(f"expected '{TOPOLOGY_HEADER} {FORMAT_VERSION}' header", line_no or 1)
        if tokens[1] != str(FORMAT_VERSION):
            raise FormatError(f"unsupported format version {tokens[1]} (expected {FORMAT_VERSION})", line_no)

        line_no, tokens = next(lines, (line_no + 1, []))
        if len(tokens) < 6 or tokens[0] != 'kind' or tokens[2] != 'seed' or tokens[4] != 'rng':
            raise FormatError("expected 'kind <tag> seed <u64> rng <id>'", line_no)
        try:
            kind = TopologyKind(tokens[1])
        except ValueError:
            raise FormatError(f"unknown topology kind '{tokens[1]}'", line_no) from None
        seed = _int(tokens[3], line_no, 'seed')
        rng = tokens[5]
        meta: Dict[str, str] = {}
        for token in tokens[6:]:
            key, sep, value = token.partition('=')
            if not sep or not key:
                raise FormatError(f"malformed metadata '{token}' (expected key=value)", line_no)
            meta[key] = value

        line_no, tokens = next(lines, (line_no + 1, []))
        if len(tokens) != 2 or tokens[0] != 'switches':
            raise FormatError("expected 'switches <S>'", line_no)
        count = _int(tokens[1], line_no, 'switch count')
        if count < 1:
            raise FormatError("switch count must be positive", line_no)

        ports: List[int] = []
        servers: List[int] = []
        containers: List[int] = []
        for expected in range(count):
            line_no, tokens = next(lines, (line_no + 1, []))
            if len(tokens) not in (6, 8) or tokens[0] != 'switch' or tokens[2] != 'ports' \
                    or tokens[4] != 'servers' or (len(tokens) == 8 and tokens[6] != 'container'):
                raise FormatError("expected 'switch <id> ports <k> servers <s>'", line_no)
            if _int(tokens[1], line_no, 'switch id') != expected:
                raise FormatError(f"switch ids must ascend from 0; expected {expected}", line_no)
            ports.append(_int(tokens[3], line_no, 'port count'))
            servers.append(_int(tokens[5], line_no, 'server count'))
            if len(tokens) == 8:
                containers.append(_int(tokens[7], line_no, 'container'))
        if containers and len(containers) != count:
            raise FormatError("container ids must be given for all switches or none", line_no)

        links: List[Link] = []
        seen = set()
        previous: Optional[Link] = None
        for line_no, tokens in lines:
            if len(tokens) != 3 or tokens[0] != 'link':
                raise FormatError("expected 'link <a> <b>'", line_no)
            a = _int(tokens[1], line_no, 'switch id')
            b = _int(tokens[2], line_no, 'switch id')
            if a >= b:
                raise FormatError(f"link endpoints must satisfy a < b, got {a} {b}", line_no)
            if (a, b) in seen:
                raise FormatError(f"duplicate link {a} {b}", line_no)
            if previous is not None and (a, b) < previous:
                raise FormatError("links must be sorted ascending", line_no)
            seen.add((a, b))
            links.append((a, b))
            previous = (a, b)

        try:
            return Topology(kind=kind, ports=tuple(ports), servers=tuple(servers), links=tuple(links),
                            seed=seed, rng=rng, meta=tuple(meta.items()),
                            containers=tuple(containers) if containers else None)
        except TopologyError as e:
            raise FormatError(str(e)) from None

    @log_function_call
    def read(self, file_path: str) -> Topology:
        topology = self.deserialize(self._read_file(file_path))
        self.logger.info(f"Read {topology.summary()} from {file_path}")
        return topology

    def write(self, topology: Topology, file_path: str) -> None:
        Path(file_path).write_text(self.serialize(topology), encoding='utf-8', newline='\n')
        self.logger.info(f"Wrote {topology.summary()} to {file_path}")

    # -- imported graphs ------------------------------------------------------

    def _parse_edge_list(self, text: str) -> Tuple[int, List[Link]]:
        """Bare edge list: optional single-integer node count line, then 'a b' lines."""
        declared: Optional[int] = None
        links: List[Link] = []
        seen = set()
        for line_no, tokens in _content_lines(text):
            if len(tokens) == 1 and not links and declared is None:
                declared = _int(tokens[0], line_no, 'node count')
                continue
            if len(tokens) != 2:
                raise FormatError("expected 'a b' edge", line_no)
            a = _int(tokens[0], line_no, 'node')
            b = _int(tokens[1], line_no, 'node')
            if a < 0 or b < 0:
                raise FormatError("node indices are 0-based and non-negative", line_no)
            if a == b:
                raise FormatError(f"self-loop on node {a}", line_no)
            link = normalize_link(a, b)
            if link in seen:
                raise FormatError(f"duplicate edge {a} {b}", line_no)
            seen.add(link)
            links.append(link)
        highest = max((b for _, b in links), default=-1) + 1
        count = highest if declared is None else declared
        if count < highest:
            raise FormatError(f"edges reference node {highest - 1} but only {count} nodes declared")
        if count < 1:
            raise FormatError("edge list names no nodes")
        return count, links

    @log_function_call
    def load_edge_list(self, file_path: str, ports: int, servers_per_switch: int) -> Topology:
        """
        Import a graph (topology format or bare edge list) as a topology whose
        switches all have `ports` ports and `servers_per_switch` servers.
        """
        text = self._read_file(file_path)
        first = next(_content_lines(text), (0, ['']))[1]
        if first[0] == TOPOLOGY_HEADER:
            parsed = self.deserialize(text)
            count, links = parsed.num_switches, list(parsed.links)
        else:
            count, links = self._parse_edge_list(text)

        budget = ports - servers_per_switch
        degree = [0] * count
        for a, b in links:
            degree[a] += 1
            degree[b] += 1
        for node, d in enumerate(degree):
            if d > budget:
                raise TopologyError(f"node {node} has degree {d} but only {budget} network ports")

        topology = Topology(kind=TopologyKind.IMPORTED, ports=(ports,) * count,
                            servers=(servers_per_switch,) * count, links=tuple(links), seed=0,
                            rng=RNG_ID, meta=(('source', Path(file_path).name),))
        self.logger.info(f"Imported {topology.summary()} from {file_path}")
        return topology

    # -- expansion logs -------------------------------------------------------

    def serialize_steps(self, steps: List[ExpansionStep]) -> str:
        lines = [f"{EXPANSION_HEADER} {FORMAT_VERSION}"]
        for step in steps:
            lines.append(f"step {step.kind.value} switch {step.new_switch} "
                         f"ports {step.new_switch_ports} servers {step.new_switch_servers}")
            added = iter(step.links_added)
            for v, w in step.links_removed:
                lines.append(f"remove {v} {w}")
                for link in (next(added), next(added)):
                    lines.append(f"add {link[0]} {link[1]}")
        return '\n'.join(lines) + '\n'

    def deserialize_steps(self, text: str) -> List[ExpansionStep]:
        lines = _content_lines(text)
        line_no, tokens = next(lines, (1, []))
        if tokens != [EXPANSION_HEADER, str(FORMAT_VERSION)]:
            raise FormatError(f"expected '{EXPANSION_HEADER} {FORMAT_VERSION}' header", line_no)
        steps: List[ExpansionStep] = []
        for line_no, tokens in lines:
            if tokens[0] == 'step':
                if len(tokens) != 8 or tokens[2] != 'switch' or tokens[4] != 'ports' or tokens[6] != 'servers':
                    raise FormatError("expected 'step <kind> switch <u> ports <k> servers <s>'", line_no)
                try:
                    kind = ExpansionKind(tokens[1])
                except ValueError:
                    raise FormatError(f"unknown expansion kind '{tokens[1]}'", line_no) from None
                steps.append(ExpansionStep(kind=kind,
                                           new_switch=_int(tokens[3], line_no, 'switch id'),
                                           new_switch_ports=_int(tokens[5], line_no, 'port count'),
                                           new_switch_servers=_int(tokens[7], line_no, 'server count')))
            elif tokens[0] in ('remove', 'add') and len(tokens) == 3:
                if not steps:
                    raise FormatError(f"'{tokens[0]}' before any 'step' line", line_no)
                link = (_int(tokens[1], line_no, 'switch id'), _int(tokens[2], line_no, 'switch id'))
                target = steps[-1].links_removed if tokens[0] == 'remove' else steps[-1].links_added
                target.append(link)
            else:
                raise FormatError(f"unexpected line '{' '.join(tokens)}'", line_no)
        return steps
