"""Compile behavior trees into labeled Markov models and back.

A tree with l leaves becomes a model with l + 2 states: one state per
leaf in depth-first order, then one absorbing state for overall success
and one for overall failure. Each leaf state carries exactly two
outgoing transitions, taken with probability ps and 1 - ps, and each
transition remembers which leaf outcome it encodes. That labeling is
what makes the mapping invertible: decompile reads the tree structure
back out of the jump targets alone.

Retry decorators redirect the failure exits of their subtree back to
its first state, which breaks the upper-diagonal shape on purpose.
Parallel nodes expand into a block of product states, one per reachable
combination of child positions.
"""

import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .hmm import DiscreteHMM, load_hmm, save_hmm
from .tree import (
    ABTDefinition,
    FAILURE,
    Leaf,
    LeafStats,
    Parallel,
    Retry,
    SUCCESS,
    Selector,
    Sequence,
    UnsupportedStructureError,
    canonicalize,
    leaves_of,
    n_leaves,
    successor_map,
    validate_abt,
)

DEFAULT_STATE_CAP = 4096

SUCCESS_LABEL = "success"
FAILURE_LABEL = "failure"


class InconsistentLabelsError(ValueError):
    """The edge labels cannot come from any behavior tree."""


class StateCapError(ValueError):
    """A parallel product expansion exceeded the configured state cap."""


def _state_cap(explicit):
    if explicit is not None:
        return int(explicit)
    return int(os.environ.get("ABTHMM_STATE_CAP", DEFAULT_STATE_CAP))


@dataclass(frozen=True)
class EdgeLabel:
    """Outcome labeling of one leaf state's two outgoing transitions."""

    succ_target: int
    succ_prob: float
    fail_target: int
    fail_prob: float


@dataclass(frozen=True)
class ParallelBlock:
    """Bookkeeping for one parallel product block inside a compiled model.

    statuses lists the product states in state order, starting with the
    entry; each one is a tuple with a ("run", leaf) or ("done", outcome)
    marker per child. n_core is the nominal product dimension, the product
    of the children's leaf counts.
    """

    first: int
    statuses: tuple
    threshold: float
    succ_target: int
    fail_target: int
    n_core: int

    @property
    def n_states(self):
        return len(self.statuses)


@dataclass(frozen=True, eq=False)
class LabeledHMM:
    """A model together with the outcome labels of its transitions.

    edges holds an EdgeLabel per leaf state and None for terminal and
    product states. leaf_states maps each tree leaf index to its state, or
    None when the leaf lives inside a parallel block.
    """

    hmm: DiscreteHMM
    edges: tuple
    o_s: int
    o_f: int
    labels: tuple
    leaf_states: tuple = ()
    retry_ranges: tuple = ()
    blocks: tuple = ()

    @property
    def n_states(self):
        return self.hmm.n_states

    @property
    def n_symbols(self):
        return self.hmm.n_symbols

    @property
    def pi(self):
        return self.hmm.startprob

    @property
    def a(self):
        return self.hmm.transmat

    @property
    def b(self):
        return self.hmm.emissionprob

    def edge_label_strings(self):
        """The file representation of edges: "S:<t> F:<t>" or None per state."""
        out = []
        for e in self.edges:
            out.append(None if e is None else f"S:{e.succ_target} F:{e.fail_target}")
        return out


# ----------------------------------------------------------------------
# compilation


def compile_abt(abt, *, state_cap=None):
    """Build the labeled model for a validated tree.

    The result has one state per leaf plus two absorbing output states;
    parallel subtrees add product-state blocks in place of their leaves.
    Raises ValueError on an invalid tree, UnsupportedStructureError on
    nesting the transforms cannot express, and StateCapError when a
    parallel product would blow past the state cap.
    """
    root = canonicalize(abt.root)
    abt = ABTDefinition(root, abt.n_symbols, abt.out_success, abt.out_failure)
    report = validate_abt(abt)
    if not report.ok:
        path, message = report.violations[0]
        raise ValueError(f"invalid tree at {path or 'root'}: {message}")

    acc = {"atoms": [], "next_leaf": 0, "retries": []}
    mirror = _scan(root, acc, in_retry=False)
    atoms = acc["atoms"]
    n_atoms = len(atoms)
    smap = successor_map(mirror)

    j_symbols = abt.n_symbols
    cap = _state_cap(state_cap)
    blocks_raw = []
    widths = []
    for atom in atoms:
        if atom[0] == "leaf":
            widths.append(1)
            blocks_raw.append(None)
        else:
            specs = _child_specs_from_tree(atom[1], atom[2], abt)
            built = _product_states(specs, atom[1].threshold, cap)
            widths.append(len(built[0]))
            blocks_raw.append(built)

    offsets = []
    pos = 0
    for w in widths:
        offsets.append(pos)
        pos += w
    n_states = pos + 2
    o_s, o_f = pos, pos + 1
    if any(b is not None for b in blocks_raw) and n_states > cap:
        raise StateCapError(
            f"product blow-up: {n_states} states exceed the cap of {cap}"
        )

    def target(atom_idx):
        if atom_idx == n_atoms:
            return o_s
        if atom_idx == n_atoms + 1:
            return o_f
        return offsets[atom_idx]

    j_model = j_symbols
    for built in blocks_raw:
        if built is not None:
            j_model = max(j_model, built[2].shape[1])

    a = np.zeros((n_states, n_states))
    b = np.zeros((n_states, j_model))
    edges = [None] * n_states
    labels = [None] * n_states
    leaf_states = [None] * acc["next_leaf"]
    blocks = []

    for i, atom in enumerate(atoms):
        st, ft = target(smap[i][0]), target(smap[i][1])
        q = offsets[i]
        if atom[0] == "leaf":
            node, g = atom[1], atom[2]
            ps = float(node.stats.ps)
            a[q, st] += ps
            a[q, ft] += 1.0 - ps
            b[q, :j_symbols] = node.stats.emission
            edges[q] = EdgeLabel(st, ps, ft, 1.0 - ps)
            labels[q] = node.name
            leaf_states[g] = q
        else:
            statuses, trans, emit, n_core = blocks_raw[i]
            for r, cells in enumerate(trans):
                for col, prob in cells:
                    if col == "S":
                        a[q + r, st] += prob
                    elif col == "F":
                        a[q + r, ft] += prob
                    else:
                        a[q + r, q + col] += prob
            b[q : q + len(statuses), : emit.shape[1]] = emit
            for r, status in enumerate(statuses):
                labels[q + r] = _status_label(status, abt)
            blocks.append(
                ParallelBlock(q, tuple(statuses), atom[1].threshold, st, ft, n_core)
            )

    a[o_s, o_s] = 1.0
    a[o_f, o_f] = 1.0
    b[o_s, :j_symbols] = abt.out_success
    b[o_f, :j_symbols] = abt.out_failure
    labels[o_s] = SUCCESS_LABEL
    labels[o_f] = FAILURE_LABEL
    pi = np.zeros(n_states)
    pi[0] = 1.0

    model = LabeledHMM(
        hmm=DiscreteHMM(pi, a, b),
        edges=tuple(edges),
        o_s=o_s,
        o_f=o_f,
        labels=tuple(labels),
        leaf_states=tuple(leaf_states),
        blocks=tuple(blocks),
    )
    for a_atom, b_atom in acc["retries"]:
        start = offsets[a_atom]
        stop = o_s if b_atom == n_atoms else offsets[b_atom]
        model = apply_retry(model, start, stop)
    return model


def _scan(node, acc, in_retry):
    """Collect compilation atoms in depth-first order and return a mirror
    tree in which every parallel subtree is a single placeholder leaf, so
    the plain successor map can route between atoms."""
    if isinstance(node, Leaf):
        acc["atoms"].append(("leaf", node, acc["next_leaf"]))
        acc["next_leaf"] += 1
        return node
    if isinstance(node, (Sequence, Selector)):
        kids = tuple(_scan(c, acc, in_retry) for c in node.children)
        return type(node)(kids)
    if isinstance(node, Retry):
        if in_retry:
            raise UnsupportedStructureError("nested retry ranges overlap")
        start = len(acc["atoms"])
        mirror = _scan(node.child, acc, in_retry=True)
        acc["retries"].append((start, len(acc["atoms"])))
        return mirror
    if isinstance(node, Parallel):
        for c in node.children:
            _require_plain(c)
        first = acc["next_leaf"]
        acc["next_leaf"] += n_leaves(node)
        acc["atoms"].append(("par", node, first))
        return Leaf(f"#par{len(acc['atoms'])}", _PLACEHOLDER_STATS)
    raise TypeError(f"not a tree node: {node!r}")


_PLACEHOLDER_STATS = LeafStats(0.5, (1.0,))


def _require_plain(node):
    if isinstance(node, Leaf):
        return
    if isinstance(node, (Sequence, Selector)):
        for c in node.children:
            _require_plain(c)
        return
    raise UnsupportedStructureError(
        f"parallel children must be plain subtrees, found {type(node).__name__.lower()}"
    )


def _status_label(status, abt):
    names = [leaf.name for leaf in abt.leaves]
    parts = []
    for marker in status:
        if marker[0] == "run":
            parts.append(names[marker[1]])
        else:
            parts.append(marker[1])
    return "(" + "|".join(parts) + ")"


# ----------------------------------------------------------------------
# parallel products


class _ChildSpec:
    """Everything the product builder needs to know about one child."""

    def __init__(self, entry, succ, fail, ps, rows, done_rows, n_leaves):
        self.entry = entry
        self.succ = succ  # key -> status after the leaf succeeds
        self.fail = fail
        self.ps = ps
        self.rows = rows  # key -> emission row
        self.done_rows = done_rows  # outcome -> emission row
        self.n_leaves = n_leaves

    def step(self, key, outcome):
        return self.succ[key] if outcome == SUCCESS else self.fail[key]

    def emission(self, marker):
        if marker[0] == "run":
            return self.rows[marker[1]]
        return self.done_rows[marker[1]]


def _child_specs_from_tree(par_node, first_leaf, abt):
    specs = []
    g0 = first_leaf
    for child in par_node.children:
        local = successor_map(child)
        width = n_leaves(child)
        child_leaves = leaves_of(child)
        succ, fail, ps, rows = {}, {}, {}, {}
        for i in range(width):
            key = g0 + i
            succ[key] = _local_status(local[i][0], width, g0)
            fail[key] = _local_status(local[i][1], width, g0)
            ps[key] = float(child_leaves[i].stats.ps)
            rows[key] = np.asarray(child_leaves[i].stats.emission)
        done = {
            SUCCESS: np.asarray(abt.out_success),
            FAILURE: np.asarray(abt.out_failure),
        }
        specs.append(_ChildSpec(g0, succ, fail, ps, rows, done, width))
        g0 += width
    return specs


def _local_status(t, width, g0):
    if t == width:
        return ("done", SUCCESS)
    if t == width + 1:
        return ("done", FAILURE)
    return ("run", g0 + t)


def _product_states(specs, threshold, cap):
    """Enumerate the reachable product states of a parallel block.

    Returns the ordered status tuples (entry first), the transition cells
    per state as (column, probability) pairs where the column is a local
    state index or "S"/"F" for the two exits, the joint emission matrix,
    and the nominal core size.
    """
    entry = tuple(("run", s.entry) for s in specs)
    seen = {entry}
    frontier = [entry]
    while frontier:
        state = frontier.pop()
        for nxt, _ in _expand(state, specs, threshold):
            if nxt in ("S", "F") or nxt in seen:
                continue
            if len(seen) >= cap:
                raise StateCapError(
                    f"product blow-up: more than {cap} parallel product states"
                )
            seen.add(nxt)
            frontier.append(nxt)
    states = [entry] + sorted(seen - {entry})
    index = {s: i for i, s in enumerate(states)}
    trans = []
    for state in states:
        cells = {}
        for nxt, prob in _expand(state, specs, threshold):
            col = nxt if nxt in ("S", "F") else index[nxt]
            cells[col] = cells.get(col, 0.0) + prob
        trans.append(sorted(cells.items(), key=repr))
    emit = []
    for state in states:
        row = np.ones(1)
        for spec, marker in zip(specs, state):
            row = np.kron(row, spec.emission(marker))
        emit.append(row)
    n_core = math.prod(s.n_leaves for s in specs)
    return states, trans, np.asarray(emit), n_core


def _expand(state, specs, threshold):
    """All one-step moves out of a product state with their probabilities."""
    k = len(specs)
    running = [i for i, m in enumerate(state) if m[0] == "run"]
    out = []
    for outcomes in itertools.product((SUCCESS, FAILURE), repeat=len(running)):
        prob = 1.0
        nxt = list(state)
        for i, oc in zip(running, outcomes):
            key = state[i][1]
            p = specs[i].ps[key]
            prob *= p if oc == SUCCESS else 1.0 - p
            nxt[i] = specs[i].step(key, oc)
        if prob == 0.0:
            continue
        if all(m[0] == "done" for m in nxt):
            wins = sum(1 for m in nxt if m[1] == SUCCESS)
            col = "S" if wins / k >= threshold - 1e-12 else "F"
            out.append((col, prob))
        else:
            out.append((tuple(nxt), prob))
    return out


def product_parallel(children, threshold, *, state_cap=None):
    """Combine compiled child models into one standalone parallel model.

    The children advance in lockstep, so each product row carries one cell
    per combination of child outcomes. Once every child has finished, the
    walk moves to the success output state iff the fraction of successful
    children reaches the threshold. Joint symbols are the mixed-radix
    encoding of the child symbols, first child most significant.
    """
    if len(children) < 2:
        raise ValueError("parallel needs at least two children")
    if not (0.0 < threshold <= 1.0):
        raise ValueError(f"threshold {threshold} outside (0, 1]")
    specs = []
    for child in children:
        if child.retry_ranges or child.blocks:
            raise UnsupportedStructureError(
                "parallel children must be plain compiled trees"
            )
        width = child.o_s
        succ, fail, ps, rows = {}, {}, {}, {}
        for i in range(width):
            e = child.edges[i]
            if e is None:
                raise UnsupportedStructureError("child is missing edge labels")
            succ[i] = _local_status(e.succ_target, width, 0)
            fail[i] = _local_status(e.fail_target, width, 0)
            ps[i] = e.succ_prob
            rows[i] = child.hmm.emissionprob[i]
        done = {
            SUCCESS: child.hmm.emissionprob[child.o_s],
            FAILURE: child.hmm.emissionprob[child.o_f],
        }
        specs.append(_ChildSpec(0, succ, fail, ps, rows, done, width))

    cap = _state_cap(state_cap)
    states, trans, emit, n_core = _product_states(specs, threshold, cap)
    n = len(states) + 2
    if n > cap:
        raise StateCapError(f"product blow-up: {n} states exceed the cap of {cap}")
    o_s, o_f = n - 2, n - 1
    a = np.zeros((n, n))
    for r, cells in enumerate(trans):
        for col, prob in cells:
            if col == "S":
                a[r, o_s] += prob
            elif col == "F":
                a[r, o_f] += prob
            else:
                a[r, col] += prob
    a[o_s, o_s] = 1.0
    a[o_f, o_f] = 1.0
    term_s = np.ones(1)
    term_f = np.ones(1)
    for child in children:
        term_s = np.kron(term_s, child.hmm.emissionprob[child.o_s])
        term_f = np.kron(term_f, child.hmm.emissionprob[child.o_f])
    b = np.vstack([emit, term_s, term_f])
    pi = np.zeros(n)
    pi[0] = 1.0

    labels = []
    for status in states:
        parts = []
        for child, marker in zip(children, status):
            if marker[0] == "run":
                parts.append(str(child.labels[marker[1]]))
            else:
                parts.append(marker[1])
        labels.append("(" + "|".join(parts) + ")")
    labels += [SUCCESS_LABEL, FAILURE_LABEL]

    block = ParallelBlock(0, tuple(states), float(threshold), o_s, o_f, n_core)
    return LabeledHMM(
        hmm=DiscreteHMM(pi, a, b),
        edges=tuple([None] * len(states) + [None, None]),
        o_s=o_s,
        o_f=o_f,
        labels=tuple(labels),
        leaf_states=(),
        blocks=(block,),
    )


# ----------------------------------------------------------------------
# retry


def apply_retry(model, start, stop=None):
    """Redirect the failure exits of the state range [start, stop) back to
    its first state.

    This is the repeat-until-success transform: whatever would have made
    the subtree fail now restarts it instead, so the range's failure exit
    becomes unreachable and back-edges appear at column start. Overlapping
    ranges are rejected.
    """
    if stop is None:
        stop = model.o_s
    start, stop = int(start), int(stop)
    if not (0 <= start < stop <= model.o_s):
        raise ValueError(f"retry range [{start}, {stop}) out of bounds")
    for lo, hi in model.retry_ranges:
        if start < hi and lo < stop:
            raise ValueError(
                f"retry range [{start}, {stop}) overlaps [{lo}, {hi})"
            )
    for blk in model.blocks:
        lo, hi = blk.first, blk.first + blk.n_states
        inside = start <= lo and hi <= stop
        outside = hi <= start or stop <= lo
        if not (inside or outside):
            raise ValueError("retry range splits a parallel block")

    a = model.hmm.transmat.copy()
    edges = list(model.edges)
    blocks = list(model.blocks)
    for i in range(start, stop):
        e = edges[i]
        if e is not None:
            if not (start <= e.fail_target < stop):
                a[i, start] += a[i, e.fail_target]
                a[i, e.fail_target] = 0.0
                edges[i] = EdgeLabel(e.succ_target, e.succ_prob, start, e.fail_prob)
    for bi, blk in enumerate(blocks):
        if start <= blk.first and blk.first + blk.n_states <= stop:
            if not (start <= blk.fail_target < stop):
                for r in range(blk.first, blk.first + blk.n_states):
                    a[r, start] += a[r, blk.fail_target]
                    a[r, blk.fail_target] = 0.0
                blocks[bi] = ParallelBlock(
                    blk.first, blk.statuses, blk.threshold,
                    blk.succ_target, start, blk.n_core,
                )
    return LabeledHMM(
        hmm=DiscreteHMM(model.hmm.startprob.copy(), a, model.hmm.emissionprob.copy()),
        edges=tuple(edges),
        o_s=model.o_s,
        o_f=model.o_f,
        labels=model.labels,
        leaf_states=model.leaf_states,
        retry_ranges=model.retry_ranges + ((start, stop),),
        blocks=tuple(blocks),
    )


# ----------------------------------------------------------------------
# constraint checking


@dataclass
class ConstraintReport:
    upper_diagonal: bool = True
    two_nonzero_per_row: bool = True
    superdiagonal_nonzero: bool = True
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return self.upper_diagonal and self.two_nonzero_per_row and self.superdiagonal_nonzero


def check_constraints(model, terminal=None):
    """Check the transition-matrix shape every plain compiled tree has.

    Three checks over the non-terminal rows: no mass at or below the
    diagonal, exactly two outgoing transitions, and a non-empty transition
    to the next state. Accepts a labeled model (checked through its edge
    labels, so probability-zero edges still count), a bare model, or a
    matrix; terminal defaults to the last two states.
    """
    edges = None
    if isinstance(model, LabeledHMM):
        edges = model.edges
        matrix = model.hmm.transmat
        if terminal is None:
            terminal = (model.o_s, model.o_f)
    elif isinstance(model, DiscreteHMM):
        matrix = model.transmat
    else:
        matrix = np.asarray(model, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"need a square matrix, got shape {matrix.shape}")
    n = matrix.shape[0]
    if terminal is None:
        terminal = (n - 2, n - 1)
    report = ConstraintReport()
    for i in range(n):
        if i in terminal:
            continue
        if edges is not None and edges[i] is not None:
            e = edges[i]
            cols = sorted({e.succ_target, e.fail_target})
        else:
            cols = list(np.nonzero(matrix[i])[0])
        if any(c <= i for c in cols):
            report.upper_diagonal = False
            report.violations.append((i, f"mass at or below the diagonal: {cols}"))
        if len(cols) != 2:
            report.two_nonzero_per_row = False
            report.violations.append((i, f"{len(cols)} outgoing transitions"))
        if i + 1 not in cols:
            report.superdiagonal_nonzero = False
            report.violations.append((i, "no transition to the next state"))
    return report


# ----------------------------------------------------------------------
# decompilation


def decompile(model):
    """Reconstruct the canonical tree a labeled model was compiled from.

    Reads only the jump targets. Each leaf range is oriented by which of
    its two continuations is exited first (failure first means a sequence,
    success first a selector) and then split into children at boundaries
    found by recursive descent. Raises InconsistentLabelsError when the
    labels cannot come from any tree, and UnsupportedStructureError for
    models with retry back-edges or parallel blocks.
    """
    if model.retry_ranges or model.blocks:
        raise UnsupportedStructureError(
            "only plain compiled models can be decompiled"
        )
    total = model.o_s
    if total < 1:
        raise InconsistentLabelsError("model has no leaf states")
    for i in range(total):
        e = model.edges[i]
        if e is None:
            raise InconsistentLabelsError(f"state {i} has no edge labels")
        if e.succ_target == e.fail_target:
            raise InconsistentLabelsError(
                f"state {i}: both outcomes share a target"
            )
    root = _parse_range(model, 0, total, model.o_s, model.o_f)
    b = model.hmm.emissionprob
    return ABTDefinition(
        root,
        model.n_symbols,
        tuple(b[model.o_s]),
        tuple(b[model.o_f]),
    )


def _leaf_of(model, i):
    e = model.edges[i]
    name = model.labels[i] if model.labels and model.labels[i] else f"l{i}"
    return Leaf(name, LeafStats(e.succ_prob, tuple(model.hmm.emissionprob[i])))


def _parse_range(model, a, b, s, f, forbid=None):
    """Rebuild the node covering leaf states [a, b) whose success exit is s
    and failure exit is f.  forbid blocks a root kind that would repeat the
    parent kind, which compilation never produces on canonical trees."""
    if b - a == 1:
        e = model.edges[a]
        if (e.succ_target, e.fail_target) != (s, f):
            raise InconsistentLabelsError(
                f"state {a}: targets ({e.succ_target}, {e.fail_target})"
                f" do not close the context ({s}, {f})"
            )
        return _leaf_of(model, a)
    kind = _root_kind(model, a, b, s, f)
    if kind is forbid:
        raise InconsistentLabelsError(
            f"states {a}..{b - 1}: nested {kind.__name__.lower()} is not canonical"
        )
    return kind(tuple(_parse_children(model, a, b, s, f, kind)))


def _root_kind(model, a, b, s, f):
    """Decide whether leaf states [a, b) hang under a sequence or a selector.

    Every child of a sequence can fail the whole range, but only the last
    child can finish it, so the first row exiting to f sits left of the
    first row exiting to s.  A selector mirrors the argument.
    """
    hit_s = hit_f = b
    for g in range(b - 1, a - 1, -1):
        e = model.edges[g]
        if s in (e.succ_target, e.fail_target):
            hit_s = g
        if f in (e.succ_target, e.fail_target):
            hit_f = g
    if hit_s == b:
        raise InconsistentLabelsError(
            f"states {a}..{b - 1}: no exit to the success continuation {s}"
        )
    if hit_f == b:
        raise InconsistentLabelsError(
            f"states {a}..{b - 1}: no exit to the failure continuation {f}"
        )
    if hit_f < hit_s:
        return Sequence
    if hit_s < hit_f:
        return Selector
    raise InconsistentLabelsError(
        f"states {a}..{b - 1}: cannot orient the split at state {hit_s}"
    )


def _parse_children(model, a, b, s, f, kind):
    """Split [a, b) into the children of a `kind` node, backtracking over
    candidate boundaries: a sequence child keeps the range failure exit and
    succeeds into the next boundary, a selector child the other way round."""
    dead = set()

    def attempt(c, first):
        if c in dead:
            raise InconsistentLabelsError(f"state {c}: no boundary fits")
        errors = []
        stop = b if first else b + 1
        for e in range(c + 1, stop):
            if kind is Sequence:
                ctx = (e if e < b else s, f)
            else:
                ctx = (s, e if e < b else f)
            try:
                child = _parse_range(model, c, e, ctx[0], ctx[1], forbid=kind)
            except InconsistentLabelsError as err:
                errors.append(err)
                continue
            if e == b:
                return [child]
            try:
                return [child] + attempt(e, False)
            except InconsistentLabelsError as err:
                errors.append(err)
        dead.add(c)
        raise errors[-1] if errors else InconsistentLabelsError(
            f"state {c}: no boundary fits"
        )

    return attempt(a, True)


# ----------------------------------------------------------------------
# counting and enumeration

ENUMERATION_CAP = 8


def count_bts(l):
    """Number of transition-matrix shapes over l leaf states: 2^(l-1) l!."""
    l = int(l)
    if l < 1:
        raise ValueError("leaf count must be at least 1")
    return 2 ** (l - 1) * math.factorial(l)


@dataclass(frozen=True)
class StructureShape:
    """One shape from the constraint class over l leaf states.

    rows holds one (orientation, far_column) pair per leaf state:
    orientation "S" means the success edge feeds the next state and the
    failure edge jumps to far_column, "F" the other way round.
    """

    rows: tuple

    @property
    def n_leaves(self):
        return len(self.rows)

    def edge_targets(self):
        out = []
        for i, (orient, far) in enumerate(self.rows):
            if orient == SUCCESS:
                out.append((i + 1, far))
            else:
                out.append((far, i + 1))
        return out

    def to_labeled(self, ps=0.5):
        """Materialize the shape as a labeled model with every success
        probability set to ps and synthetic emission rows."""
        from .divergence import SyntheticEmissionSpec, synth_emissions

        l = self.n_leaves
        n = l + 2
        rows = synth_emissions(SyntheticEmissionSpec(n, 1.0))
        a = np.zeros((n, n))
        edges = []
        for i, (st, ft) in enumerate(self.edge_targets()):
            a[i, st] += ps
            a[i, ft] += 1.0 - ps
            edges.append(EdgeLabel(st, float(ps), ft, 1.0 - float(ps)))
        a[l, l] = 1.0
        a[l + 1, l + 1] = 1.0
        pi = np.zeros(n)
        pi[0] = 1.0
        labels = tuple(f"l{i}" for i in range(l)) + (SUCCESS_LABEL, FAILURE_LABEL)
        return LabeledHMM(
            hmm=DiscreteHMM(pi, a, rows),
            edges=tuple(edges) + (None, None),
            o_s=l,
            o_f=l + 1,
            labels=labels,
            leaf_states=tuple(range(l)),
        )

    @classmethod
    def of_model(cls, model):
        """Read the shape off a labeled model's edges."""
        rows = []
        for i in range(model.o_s):
            e = model.edges[i]
            if e.succ_target == i + 1:
                rows.append((SUCCESS, e.fail_target))
            elif e.fail_target == i + 1:
                rows.append((FAILURE, e.succ_target))
            else:
                raise InconsistentLabelsError(
                    f"state {i}: neither outcome continues at state {i + 1}"
                )
        return cls(tuple(rows))


def enumerate_structures(l):
    """Yield every transition shape over l leaf states exactly once.

    Row i < l-1 picks an orientation and a far column in [i+2, l+1]; the
    last row is forced. The stream has exactly count_bts(l) members.
    Capped at l <= 8 because the count grows as 2^(l-1) l!.
    """
    l = int(l)
    if l < 1:
        raise ValueError("leaf count must be at least 1")
    if l > ENUMERATION_CAP:
        raise ValueError(
            f"enumeration over {l} leaves would yield {count_bts(l)} shapes; "
            f"the cap is {ENUMERATION_CAP}"
        )
    per_row = [
        [(o, far) for o in (SUCCESS, FAILURE) for far in range(i + 2, l + 2)]
        for i in range(l - 1)
    ]
    per_row.append([(SUCCESS, l + 1)])
    for combo in itertools.product(*per_row):
        yield StructureShape(tuple(combo))


# ----------------------------------------------------------------------
# model files


def save_model(model, path):
    """Write a labeled model to a file; see hmm.save_hmm for the format."""
    save_hmm(model.hmm, path, labels=model.labels, edge_labels=model.edge_label_strings())


def load_model(path):
    """Read a labeled model back. Retry back-edges survive through their
    edge labels; parallel block bookkeeping is not persisted."""
    hmm, labels, edge_strings = load_hmm(path)
    n = hmm.n_states
    o_s, o_f = n - 2, n - 1
    if labels is None:
        labels = tuple(f"l{i}" for i in range(o_s)) + (SUCCESS_LABEL, FAILURE_LABEL)
    edges = []
    if edge_strings is None:
        raise ValueError("model file has no edge_labels block")
    for i, text in enumerate(edge_strings):
        if text is None:
            edges.append(None)
            continue
        try:
            s_part, f_part = text.split()
            st = int(s_part.removeprefix("S:"))
            ft = int(f_part.removeprefix("F:"))
        except (ValueError, AttributeError):
            raise ValueError(f"bad edge label for state {i}: {text!r}")
        edges.append(EdgeLabel(st, float(hmm.transmat[i, st]), ft, float(hmm.transmat[i, ft])))
    retry = []
    for i, e in enumerate(edges):
        if e is not None and e.fail_target <= i:
            retry.append((e.fail_target, i + 1))
    retry_ranges = tuple(_merge_ranges(retry))
    leaf_states = tuple(i for i in range(o_s) if edges[i] is not None)
    return LabeledHMM(
        hmm=hmm,
        edges=tuple(edges),
        o_s=o_s,
        o_f=o_f,
        labels=tuple(labels),
        leaf_states=leaf_states,
        retry_ranges=retry_ranges,
    )


def _merge_ranges(ranges):
    merged = []
    for lo, hi in sorted(ranges):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(hi, merged[-1][1]))
        else:
            merged.append((lo, hi))
    return merged
