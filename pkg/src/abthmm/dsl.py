"""Text format for augmented behavior trees.

An s-expression per node, with optional header directives before the root:

    file      : directive* node
    directive : "(alphabet" INT ")"
              | "(outputs" dist dist ")"
              | "(ratio" FLOAT ")"
    node      : "(sequence" node+ ")"
              | "(selector" node+ ")"
              | "(retry" node ")"
              | "(parallel" ":threshold" FLOAT node node+ ")"
              | "(leaf" NAME ":ps" FLOAT ":emit" dist ")"
    dist      : "(table" FLOAT+ ")"
              | "(gauss" INT? ")"

Comments run from ";" to the end of the line. "(gauss)" builds the leaf's
emission row from the synthetic family in the divergence module, using the
leaf's depth-first index and the header ratio (default 1.0); in the outputs
directive the row index is given explicitly. When the outputs directive is
omitted the two rows continue the synthetic progression at indices l and
l + 1. When "(alphabet J)" is omitted, J is taken from the first table row,
or from the synthetic family's default size if every row is synthetic.

>>> parse("(leaf a :ps 1.0 :emit (table 1.0))").n_leaves
1
"""

from . import divergence
from .tree import (
    ABTDefinition,
    Leaf,
    LeafStats,
    Parallel,
    Retry,
    Selector,
    Sequence,
    leaves_of,
    validate_abt,
)


class ParseError(ValueError):
    def __init__(self, message, line=None, col=None):
        if line is not None:
            message = f"line {line}, col {col}: {message}"
        super().__init__(message)


_KINDS = ("sequence", "selector", "retry", "parallel", "leaf")


def _tokenize(text):
    tokens = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < len(text) and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append((ch, line, col))
            col += 1
            i += 1
        else:
            j = i
            while j < len(text) and text[j] not in " \t\r\n();":
                j += 1
            tokens.append((text[i:j], line, col))
            col += j - i
            i = j
    return tokens


class _Tokens:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        if self.pos >= len(self.tokens):
            return None
        return self.tokens[self.pos]

    def pop(self, expected=None):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of input")
        self.pos += 1
        if expected is not None and tok[0] != expected:
            raise ParseError(f"expected {expected!r}, got {tok[0]!r}", tok[1], tok[2])
        return tok


def _number(toks, what):
    tok = toks.pop()
    try:
        return float(tok[0]), tok
    except ValueError:
        raise ParseError(f"expected a number for {what}, got {tok[0]!r}", tok[1], tok[2])


def _parse_dist(toks, allow_index):
    open_tok = toks.pop("(")
    head = toks.pop()
    if head[0] == "table":
        values = []
        while toks.peek() is not None and toks.peek()[0] != ")":
            v, _ = _number(toks, "table entry")
            values.append(v)
        toks.pop(")")
        if not values:
            raise ParseError("empty table", head[1], head[2])
        return ("table", tuple(values))
    if head[0] == "gauss":
        idx = None
        nxt = toks.peek()
        if nxt is not None and nxt[0] != ")":
            if not allow_index:
                raise ParseError(
                    "leaf (gauss) takes no index, the leaf's own is used",
                    nxt[1], nxt[2],
                )
            v, tok = _number(toks, "gauss index")
            idx = int(v)
            if idx != v or idx < 0:
                raise ParseError("gauss index must be a non-negative integer", tok[1], tok[2])
        elif allow_index:
            raise ParseError("outputs (gauss idx) needs an explicit row index", head[1], head[2])
        toks.pop(")")
        return ("gauss", idx)
    raise ParseError(f"expected table or gauss, got {head[0]!r}", head[1], head[2])


def _parse_node(toks):
    toks.pop("(")
    head = toks.pop()
    kind = head[0]
    if kind not in _KINDS:
        raise ParseError(f"unknown node kind {kind!r}", head[1], head[2])
    if kind == "leaf":
        name_tok = toks.pop()
        name = name_tok[0]
        if name in "()" or name.startswith(":"):
            raise ParseError("leaf needs a name", name_tok[1], name_tok[2])
        toks.pop(":ps")
        ps, ps_tok = _number(toks, ":ps")
        if not (0.0 <= ps <= 1.0):
            raise ParseError(f"ps={ps} outside [0, 1]", ps_tok[1], ps_tok[2])
        toks.pop(":emit")
        dist = _parse_dist(toks, allow_index=False)
        toks.pop(")")
        return ("leaf", name, ps, dist, head)
    if kind == "parallel":
        toks.pop(":threshold")
        threshold, th_tok = _number(toks, ":threshold")
        if not (0.0 < threshold <= 1.0):
            raise ParseError(
                f"threshold {threshold} outside (0, 1]", th_tok[1], th_tok[2]
            )
        children = []
        while toks.peek() is not None and toks.peek()[0] == "(":
            children.append(_parse_node(toks))
        toks.pop(")")
        if len(children) < 2:
            raise ParseError("parallel needs at least two children", head[1], head[2])
        return ("parallel", threshold, children, head)
    if kind == "retry":
        child = _parse_node(toks)
        toks.pop(")")
        return ("retry", child, head)
    children = []
    while toks.peek() is not None and toks.peek()[0] == "(":
        children.append(_parse_node(toks))
    toks.pop(")")
    if not children:
        raise ParseError(f"empty {kind}", head[1], head[2])
    return (kind, children, head)


def _collect_raw_leaves(raw, out):
    if raw[0] == "leaf":
        out.append(raw)
    elif raw[0] == "retry":
        _collect_raw_leaves(raw[1], out)
    elif raw[0] == "parallel":
        for c in raw[2]:
            _collect_raw_leaves(c, out)
    else:
        for c in raw[1]:
            _collect_raw_leaves(c, out)


def parse(text, default_ratio=1.0):
    """Parse DSL text into an ABTDefinition. Raises ParseError."""
    toks = _Tokens(_tokenize(text))
    alphabet = None
    outputs = None
    ratio = None
    root_raw = None
    while toks.peek() is not None:
        save = toks.pos
        open_tok = toks.pop("(")
        head = toks.peek()
        if head is None:
            raise ParseError("unexpected end of input")
        word = head[0]
        if word == "alphabet":
            toks.pop()
            v, tok = _number(toks, "alphabet size")
            if int(v) != v or v < 1:
                raise ParseError("alphabet size must be a positive integer", tok[1], tok[2])
            alphabet = int(v)
            toks.pop(")")
        elif word == "outputs":
            toks.pop()
            outputs = (_parse_dist(toks, allow_index=True), _parse_dist(toks, allow_index=True))
            toks.pop(")")
        elif word == "ratio":
            toks.pop()
            ratio, _ = _number(toks, "ratio")
            toks.pop(")")
        else:
            toks.pos = save
            if root_raw is not None:
                raise ParseError("more than one root node", head[1], head[2])
            root_raw = _parse_node(toks)
    if root_raw is None:
        raise ParseError("no tree in input")
    if ratio is None:
        ratio = default_ratio

    raw_leaves = []
    _collect_raw_leaves(root_raw, raw_leaves)
    total = len(raw_leaves)
    names = set()
    for raw in raw_leaves:
        name, head = raw[1], raw[4]
        if name in names:
            raise ParseError(f"duplicate leaf name {name!r}", head[1], head[2])
        names.add(name)

    n_symbols = alphabet
    if n_symbols is None:
        for raw in raw_leaves:
            if raw[3][0] == "table":
                n_symbols = len(raw[3][1])
                break
    if n_symbols is None and outputs is not None:
        for dist in outputs:
            if dist[0] == "table":
                n_symbols = len(dist[1])
                break
    n_states = total + 2
    if n_symbols is None:
        n_symbols = divergence.default_n_symbols(n_states, ratio)

    needs_synth = any(raw[3][0] == "gauss" for raw in raw_leaves)
    needs_synth = needs_synth or outputs is None
    needs_synth = needs_synth or any(d[0] == "gauss" for d in outputs or ())
    synth = None
    if needs_synth:
        spec = divergence.SyntheticEmissionSpec(
            n_states=n_states, ratio=ratio, n_symbols=n_symbols
        )
        try:
            synth = divergence.synth_emissions(spec)
        except ValueError as err:
            raise ParseError(f"cannot build synthetic rows: {err}")

    def resolve(dist, default_idx):
        if dist[0] == "table":
            row = dist[1]
            if len(row) != n_symbols:
                raise ParseError(
                    f"table has {len(row)} entries, alphabet is {n_symbols}"
                )
            if abs(sum(row) - 1.0) > 1e-6:
                raise ParseError(f"table sums to {sum(row)!r}, expected 1")
            if any(x < 0 for x in row):
                raise ParseError("table has negative entries")
            return row
        idx = dist[1] if dist[1] is not None else default_idx
        if idx >= n_states:
            raise ParseError(f"gauss index {idx} out of range for {n_states} rows")
        return tuple(synth[idx])

    counter = iter(range(total))

    def build(raw):
        if raw[0] == "leaf":
            idx = next(counter)
            row = resolve(raw[3], idx)
            return Leaf(raw[1], LeafStats(raw[2], row))
        if raw[0] == "retry":
            return Retry(build(raw[1]))
        if raw[0] == "parallel":
            return Parallel(tuple(build(c) for c in raw[2]), raw[1])
        kind = Sequence if raw[0] == "sequence" else Selector
        return kind(tuple(build(c) for c in raw[1]))

    root = build(root_raw)
    if outputs is not None:
        out_s = resolve(outputs[0], total)
        out_f = resolve(outputs[1], total + 1)
    else:
        out_s = tuple(synth[total])
        out_f = tuple(synth[total + 1])
    abt = ABTDefinition(root, n_symbols, out_s, out_f)
    report = validate_abt(abt)
    if not report.ok:
        path, message = report.violations[0]
        raise ParseError(f"{path}: {message}" if path else message)
    return abt


def _fmt(x):
    return repr(float(x))


def _serialize_node(node, indent):
    pad = "  " * indent
    if isinstance(node, Leaf):
        table = " ".join(_fmt(v) for v in node.stats.emission)
        return f"{pad}(leaf {node.name} :ps {_fmt(node.stats.ps)} :emit (table {table}))"
    if isinstance(node, Retry):
        return f"{pad}(retry\n{_serialize_node(node.child, indent + 1)})"
    if isinstance(node, Parallel):
        body = "\n".join(_serialize_node(c, indent + 1) for c in node.children)
        return f"{pad}(parallel :threshold {_fmt(node.threshold)}\n{body})"
    kind = "sequence" if isinstance(node, Sequence) else "selector"
    body = "\n".join(_serialize_node(c, indent + 1) for c in node.children)
    return f"{pad}({kind}\n{body})"


def serialize(abt):
    """Render an ABTDefinition as canonical DSL text; parse(serialize(abt))
    rebuilds an equal definition."""
    out_s = " ".join(_fmt(v) for v in abt.out_success)
    out_f = " ".join(_fmt(v) for v in abt.out_failure)
    parts = [
        f"(alphabet {abt.n_symbols})",
        f"(outputs\n  (table {out_s})\n  (table {out_f}))",
        _serialize_node(abt.root, 0),
    ]
    return "\n".join(parts) + "\n"
