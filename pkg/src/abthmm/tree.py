"""Behavior tree node types and execution semantics.

Leaves are numbered depth first, left to right. A tree with l leaves has
two implicit output states: index l for overall success and l + 1 for
overall failure.
"""

from dataclasses import dataclass, field
from typing import Union

SUCCESS = "S"
FAILURE = "F"

VISIT_CAP = 10_000


class TickLimitError(RuntimeError):
    """Raised when a tick exceeds the visit cap (a retry loop that never exits)."""


class UnsupportedStructureError(ValueError):
    """Raised when an operation only defined for plain sequence/selector trees
    meets a retry or parallel node."""


@dataclass(frozen=True)
class LeafStats:
    ps: float
    emission: tuple

    def __post_init__(self):
        object.__setattr__(self, "emission", tuple(float(x) for x in self.emission))


@dataclass(frozen=True)
class Leaf:
    name: str
    stats: LeafStats


@dataclass(frozen=True)
class Sequence:
    children: tuple


@dataclass(frozen=True)
class Selector:
    children: tuple


@dataclass(frozen=True)
class Retry:
    child: "Node"


@dataclass(frozen=True)
class Parallel:
    children: tuple
    threshold: float


Node = Union[Leaf, Sequence, Selector, Retry, Parallel]

_COMPOSITES = (Sequence, Selector)


def leaves_of(node):
    out = []
    _collect_leaves(node, out)
    return out


def _collect_leaves(node, out):
    if isinstance(node, Leaf):
        out.append(node)
    elif isinstance(node, _COMPOSITES) or isinstance(node, Parallel):
        for c in node.children:
            _collect_leaves(c, out)
    elif isinstance(node, Retry):
        _collect_leaves(node.child, out)
    else:
        raise TypeError(f"not a tree node: {node!r}")


def n_leaves(node):
    return len(leaves_of(node))


@dataclass(frozen=True)
class ABTDefinition:
    """A behavior tree together with everything the compiler needs: per leaf
    success probabilities and emission rows (stored on the leaves), the two
    output state emission rows, and the symbol alphabet size."""

    root: Node
    n_symbols: int
    out_success: tuple
    out_failure: tuple

    def __post_init__(self):
        object.__setattr__(self, "out_success", tuple(float(x) for x in self.out_success))
        object.__setattr__(self, "out_failure", tuple(float(x) for x in self.out_failure))

    @property
    def leaves(self):
        return leaves_of(self.root)

    @property
    def n_leaves(self):
        return len(self.leaves)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def add(self, path, message):
        self.violations.append((path, message))


def validate_abt(abt):
    """Structural and probability checks. A tree with an empty report is
    accepted by the compiler."""
    report = ValidationReport()
    if abt.n_symbols < 1:
        report.add("", f"alphabet size must be positive, got {abt.n_symbols}")
    _validate_node(abt.root, "root", abt.n_symbols, report)
    for label, row in (("out_success", abt.out_success), ("out_failure", abt.out_failure)):
        _validate_row(row, label, abt.n_symbols, report)
    names = [leaf.name for leaf in abt.leaves]
    seen = set()
    for name in names:
        if name in seen:
            report.add(name, "duplicate leaf name")
        seen.add(name)
    return report


def _validate_row(row, path, n_symbols, report):
    if len(row) != n_symbols:
        report.add(path, f"emission row has {len(row)} entries, alphabet is {n_symbols}")
        return
    if any(x < 0 for x in row):
        report.add(path, "emission row has negative entries")
    elif abs(sum(row) - 1.0) > 1e-6:
        report.add(path, f"emission row sums to {sum(row)!r}")


def _validate_node(node, path, n_symbols, report):
    if isinstance(node, Leaf):
        if not (0.0 <= node.stats.ps <= 1.0):
            report.add(path, f"ps={node.stats.ps} outside [0, 1]")
        _validate_row(node.stats.emission, f"{path}:{node.name}", n_symbols, report)
    elif isinstance(node, _COMPOSITES):
        kind = type(node).__name__.lower()
        if len(node.children) < 1:
            report.add(path, f"empty {kind}")
        for i, c in enumerate(node.children):
            _validate_node(c, f"{path}/{kind}[{i}]", n_symbols, report)
    elif isinstance(node, Retry):
        _validate_node(node.child, f"{path}/retry", n_symbols, report)
    elif isinstance(node, Parallel):
        if len(node.children) < 2:
            report.add(path, "parallel needs at least two children")
        if not (0.0 < node.threshold <= 1.0):
            report.add(path, f"parallel threshold {node.threshold} outside (0, 1]")
        for i, c in enumerate(node.children):
            _validate_node(c, f"{path}/parallel[{i}]", n_symbols, report)
    else:
        report.add(path, f"unknown node type {type(node).__name__}")


def canonicalize(node):
    """Flatten nested same-kind composites and collapse single-child
    sequences and selectors. Execution semantics are unchanged."""
    if isinstance(node, Leaf):
        return node
    if isinstance(node, Retry):
        return Retry(canonicalize(node.child))
    if isinstance(node, Parallel):
        return Parallel(tuple(canonicalize(c) for c in node.children), node.threshold)
    kind = type(node)
    flat = []
    for c in node.children:
        c = canonicalize(c)
        if isinstance(c, kind):
            flat.extend(c.children)
        else:
            flat.append(c)
    if len(flat) == 1:
        return flat[0]
    return kind(tuple(flat))


def successor_map(root):
    """Map each leaf index to the pair (state on success, state on failure).

    Targets are leaf indices, or l for overall success and l + 1 for overall
    failure. Accepts a node or a whole ABTDefinition. Only plain
    sequence/selector trees are supported here; retry and parallel nodes go
    through the compiler.
    """
    if isinstance(root, ABTDefinition):
        root = root.root
    total = n_leaves(root)
    out = {}
    _walk_successors(root, 0, total, total + 1, out)
    return out


def _walk_successors(node, start, succ, fail, out):
    if isinstance(node, Leaf):
        out[start] = (succ, fail)
        return start + 1
    if isinstance(node, (Retry, Parallel)):
        raise UnsupportedStructureError(
            f"{type(node).__name__.lower()} nodes have no per-leaf successor map; "
            "compile the tree instead"
        )
    if not isinstance(node, _COMPOSITES):
        raise TypeError(f"not a tree node: {node!r}")
    widths = [n_leaves(c) for c in node.children]
    pos = start
    for i, child in enumerate(node.children):
        last = i == len(node.children) - 1
        nxt = succ if last else pos + widths[i]
        if isinstance(node, Sequence):
            pos = _walk_successors(child, pos, nxt if not last else succ, fail, out)
        else:
            pos = _walk_successors(child, pos, succ, nxt if not last else fail, out)
    return pos


@dataclass(frozen=True)
class TickTrace:
    visited: tuple
    result: str


def execute(root, leaf_offset=0):
    """Generator that walks the tree.

    It yields ("leaf", index) for an ordinary leaf visit and expects SUCCESS
    or FAILURE back. For a parallel node it yields
    ("parallel", node, statuses) where statuses holds one entry per child:
    ("run", leaf_index) for a child waiting at a leaf or ("done", outcome)
    for a finished one; the reply is a list with an outcome for every
    running child. Returns the overall outcome.
    """
    if isinstance(root, Leaf):
        outcome = yield ("leaf", leaf_offset)
        return outcome
    if isinstance(root, Sequence):
        pos = leaf_offset
        for child in root.children:
            outcome = yield from execute(child, pos)
            if outcome == FAILURE:
                return FAILURE
            pos += n_leaves(child)
        return SUCCESS
    if isinstance(root, Selector):
        pos = leaf_offset
        for child in root.children:
            outcome = yield from execute(child, pos)
            if outcome == SUCCESS:
                return SUCCESS
            pos += n_leaves(child)
        return FAILURE
    if isinstance(root, Retry):
        while True:
            outcome = yield from execute(root.child, leaf_offset)
            if outcome == SUCCESS:
                return SUCCESS
    if isinstance(root, Parallel):
        return (yield from _execute_parallel(root, leaf_offset))
    raise TypeError(f"not a tree node: {root!r}")


def _execute_parallel(node, leaf_offset):
    gens = []
    statuses = []
    pos = leaf_offset
    for child in node.children:
        g = execute(child, pos)
        pos += n_leaves(child)
        try:
            kind, idx = g.send(None)
        except StopIteration:  # pragma: no cover - children always hold a leaf
            raise UnsupportedStructureError("parallel child with no leaves")
        if kind != "leaf":
            raise UnsupportedStructureError("parallel children must be plain subtrees")
        gens.append(g)
        statuses.append(("run", idx))
    while True:
        outcomes = yield ("parallel", node, tuple(statuses))
        it = iter(outcomes)
        for i, status in enumerate(statuses):
            if status[0] != "run":
                continue
            try:
                event = gens[i].send(next(it))
            except StopIteration as stop:
                statuses[i] = ("done", stop.value)
                continue
            kind, idx = event
            if kind != "leaf":
                raise UnsupportedStructureError("parallel children must be plain subtrees")
            statuses[i] = ("run", idx)
        if all(s[0] == "done" for s in statuses):
            wins = sum(1 for s in statuses if s[1] == SUCCESS)
            frac = wins / len(statuses)
            return SUCCESS if frac >= node.threshold - 1e-12 else FAILURE


def tick(abt, outcomes):
    """Run the tree once with a fixed outcome per leaf and return the trace.

    outcomes maps every leaf index to SUCCESS or FAILURE; entries for leaves
    that are never reached are ignored. Retry loops that cannot exit under
    the given outcomes raise TickLimitError after VISIT_CAP visits.
    """
    total = abt.n_leaves
    for i in range(total):
        if i not in outcomes:
            raise ValueError(f"no outcome given for leaf {i}")
        if outcomes[i] not in (SUCCESS, FAILURE):
            raise ValueError(f"outcome for leaf {i} must be {SUCCESS!r} or {FAILURE!r}")
    visited = []
    gen = execute(abt.root)
    reply = None
    try:
        while True:
            event = gen.send(reply)
            if event[0] == "leaf":
                idx = event[1]
                reply = outcomes[idx]
                visited.append((idx, reply))
            else:
                reply = []
                for status in event[2]:
                    if status[0] == "run":
                        idx = status[1]
                        reply.append(outcomes[idx])
                        visited.append((idx, outcomes[idx]))
            if len(visited) > VISIT_CAP:
                raise TickLimitError(
                    f"tree did not finish within {VISIT_CAP} leaf visits"
                )
    except StopIteration as stop:
        return TickTrace(tuple(visited), stop.value)
