"""Line-oriented model description files.

A config is a header line `input <c> <h> <w>` followed by one layer per line.
`#` starts a comment; blank lines are skipped. Layers take `key=value`
integer attributes with per-kind required/optional sets:

    conv cin= cout= k= [s=1] [p=0]
    pconv c= cp= [k=3]
    pwconv cin= cout=
    bn c=
    relu
    fasternet c= cp= [k=3] [e=2]
    nam_channel c=
    nam_spatial c= h= w=
    residual_begin / residual_end
    gap_head classes=

Parsing validates everything it can statically: attribute sets, channel
continuity from layer to layer, exact integral conv output sizes, matched
residual markers with equal shapes at the join, and nam_spatial dims against
the propagated map. Errors carry 1-based line numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

# kind -> (required attrs, {optional attr: default})
LAYER_SCHEMA: dict[str, tuple[tuple[str, ...], dict[str, int]]] = {
    "conv": (("cin", "cout", "k"), {"s": 1, "p": 0}),
    "pconv": (("c", "cp"), {"k": 3}),
    "pwconv": (("cin", "cout"), {}),
    "bn": (("c",), {}),
    "relu": ((), {}),
    "fasternet": (("c", "cp"), {"k": 3, "e": 2}),
    "nam_channel": (("c",), {}),
    "nam_spatial": (("c", "h", "w"), {}),
    "residual_begin": ((), {}),
    "residual_end": ((), {}),
    "gap_head": (("classes",), {}),
}

# Canonical attribute order used by the serializer.
_ATTR_ORDER = ("cin", "cout", "c", "cp", "k", "s", "p", "e", "h", "w", "classes")


@dataclass
class LayerNode:
    """One layer line: kind plus its integer attributes.

    The source line number is kept for error messages but ignored by
    equality, so parse(serialize(g)) == g holds.
    """

    kind: str
    attrs: dict[str, int]
    line: int = field(default=-1, compare=False)

    def attr_text(self) -> str:
        parts = [self.kind]
        for key in _ATTR_ORDER:
            if key in self.attrs:
                parts.append(f"{key}={self.attrs[key]}")
        return " ".join(parts)


@dataclass
class GraphSpec:
    """A named layer sequence with its (c, h, w) input shape."""

    name: str
    input_shape: tuple[int, int, int]
    layers: list[LayerNode]


def parse_model_config(text: str, name: str = "model") -> GraphSpec:
    """Parse and fully validate a config; raises ParseError with line numbers."""
    input_shape = None
    nodes: list[LayerNode] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        head = fields[0]
        if input_shape is None:
            if head != "input":
                raise ParseError(f"expected 'input <c> <h> <w>' header, got '{head}'", lineno)
            if len(fields) != 4:
                raise ParseError("input header takes exactly 3 integers: c h w", lineno)
            dims = [_parse_int(v, "input dimension", lineno) for v in fields[1:]]
            if min(dims) < 1:
                raise ParseError(f"input dimensions must be >= 1, got {tuple(dims)}", lineno)
            input_shape = (dims[0], dims[1], dims[2])
            continue
        if head == "input":
            raise ParseError("duplicate input header", lineno)
        if head not in LAYER_SCHEMA:
            raise ParseError(f"unknown layer kind '{head}'", lineno)
        required, optional = LAYER_SCHEMA[head]
        attrs: dict[str, int] = {}
        for token in fields[1:]:
            if "=" not in token:
                raise ParseError(f"expected key=value attribute, got '{token}'", lineno)
            key, _, value = token.partition("=")
            if key not in required and key not in optional:
                raise ParseError(f"unknown attribute '{key}' for layer '{head}'", lineno)
            if key in attrs:
                raise ParseError(f"duplicate attribute '{key}'", lineno)
            attrs[key] = _parse_int(value, f"attribute '{key}'", lineno)
        for key in required:
            if key not in attrs:
                raise ParseError(f"layer '{head}' is missing required attribute '{key}'", lineno)
        for key, default in optional.items():
            attrs.setdefault(key, default)
        nodes.append(LayerNode(head, attrs, lineno))
    if input_shape is None:
        raise ParseError("config has no 'input' header", len(text.splitlines()) or 1)
    graph = GraphSpec(name=name, input_shape=input_shape, layers=nodes)
    propagate_shapes(graph)  # full static validation
    return graph


def _parse_int(token: str, what: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got '{token}'", lineno) from None


def serialize_model_config(graph: GraphSpec) -> str:
    """Canonical text form; parse(serialize(g), name=g.name) == g."""
    lines = ["input {} {} {}".format(*graph.input_shape)]
    lines.extend(node.attr_text() for node in graph.layers)
    return "\n".join(lines) + "\n"


def load_model_config(path, name: str | None = None) -> GraphSpec:
    """Read a config file; the graph is named after the file stem by default."""
    import os

    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    stem = os.path.splitext(os.path.basename(str(path)))[0]
    return parse_model_config(text, name=name if name is not None else stem)


def _node_error(node: LayerNode, message: str) -> ValidationError:
    where = f"line {node.line}: " if node.line > 0 else ""
    return ValidationError(f"{where}layer '{node.kind}': {message}")


def propagate_shapes(
    graph: GraphSpec, input_shape: tuple[int, int, int] | None = None
) -> list[tuple[int, int, int]]:
    """Walk the graph, checking continuity; returns each layer's output shape.

    Residual markers appear in the result with their pass-through shape.
    """
    shape = tuple(input_shape if input_shape is not None else graph.input_shape)
    if len(shape) != 3 or min(shape) < 1:
        raise ValidationError(f"input shape must be (c, h, w) of positive ints, got {shape}")
    shapes: list[tuple[int, int, int]] = []
    stack: list[tuple[tuple[int, int, int], LayerNode]] = []
    for node in graph.layers:
        c, h, w = shape
        a = node.attrs
        kind = node.kind
        if kind == "conv":
            if a["cin"] != c:
                raise _node_error(node, f"declared cin={a['cin']} but incoming channels are {c}")
            from .tensor_ops import ConvSpec

            try:
                spec = ConvSpec(a["cin"], a["cout"], a["k"], a["s"], a["p"])
                oh, ow = spec.out_hw(h, w)
            except ValidationError as exc:
                raise _node_error(node, str(exc)) from None
            shape = (a["cout"], oh, ow)
        elif kind == "pwconv":
            if a["cin"] != c:
                raise _node_error(node, f"declared cin={a['cin']} but incoming channels are {c}")
            shape = (a["cout"], h, w)
        elif kind == "pconv":
            if a["c"] != c:
                raise _node_error(node, f"declared c={a['c']} but incoming channels are {c}")
            from .blocks import PConvSpec

            try:
                PConvSpec(a["c"], a["cp"], a["k"])
            except ValidationError as exc:
                raise _node_error(node, str(exc)) from None
        elif kind == "bn":
            if a["c"] != c:
                raise _node_error(node, f"declared c={a['c']} but incoming channels are {c}")
        elif kind == "relu":
            pass
        elif kind == "fasternet":
            if a["c"] != c:
                raise _node_error(node, f"declared c={a['c']} but incoming channels are {c}")
            from .blocks import FasterNetBlockSpec

            try:
                FasterNetBlockSpec(a["c"], a["cp"], a["k"], a["e"])
            except ValidationError as exc:
                raise _node_error(node, str(exc)) from None
        elif kind == "nam_channel":
            if a["c"] != c:
                raise _node_error(node, f"declared c={a['c']} but incoming channels are {c}")
        elif kind == "nam_spatial":
            if a["c"] != c:
                raise _node_error(node, f"declared c={a['c']} but incoming channels are {c}")
            if (a["h"], a["w"]) != (h, w):
                raise _node_error(
                    node, f"declared map {a['h']}x{a['w']} but incoming map is {h}x{w}"
                )
        elif kind == "residual_begin":
            stack.append((shape, node))
        elif kind == "residual_end":
            if not stack:
                raise _node_error(node, "residual_end without matching residual_begin")
            saved, _ = stack.pop()
            if saved != shape:
                raise _node_error(
                    node, f"branch output shape {shape} != skip shape {saved} at the join"
                )
        elif kind == "gap_head":
            if a["classes"] < 1:
                raise _node_error(node, f"classes must be >= 1, got {a['classes']}")
            shape = (a["classes"], 1, 1)
        else:  # pragma: no cover - schema and dispatch are kept in sync
            raise _node_error(node, "unhandled kind")
        shapes.append(shape)
    if stack:
        raise _node_error(stack[-1][1], "residual_begin without matching residual_end")
    return shapes
