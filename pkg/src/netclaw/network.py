"""Road network description: edges, junctions and external boundaries.

Networks are read from a small line-oriented text format::

    # comment
    edge e1 L=1 vmax=1 umax=2 h=0.08 d=0.02 init=linear(1,-1)
    edge e2 L=1 vmax=1.5 umax=1 h=0.08 d=0.02 init=linear(0,0.8)
    node id=n1 in=e1 out=e2 A=1
    boundary edge=e1 end=left u=1
    boundary edge=e2 end=right u=0.8

``A`` is row-major with rows separated by ``;``.  Initial profiles are
functions of the position x in [0, L]: ``constant(a)``, ``linear(a,b)`` for
a + b x, ``cosine(a,b,k)`` for a + b cos(k pi x) and ``samples(v0,...,vn)``
for the piecewise linear interpolant of equispaced samples.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .area_sync import EdgePort, GhostPort, SyncDiagnostics, synchronize_node
from .edge_field import LEFT, RIGHT, ParticleField, sample_initial
from .errors import ValidationError
from .flux import FluxFunction
from .node_riemann import NodeSpec

PROFILE_ARITY = {"constant": 1, "linear": 2, "cosine": 3}


def natural_key(s: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", s)]


def _fmt(v: float) -> str:
    # shortest repr that round-trips, without a trailing ".0"
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


@dataclass(frozen=True)
class Profile:
    """Named initial density profile on [0, L]."""

    kind: str
    params: tuple

    def __call__(self, x, L: float = 1.0):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "constant":
            return np.full(x.shape, p[0])
        if self.kind == "linear":
            return p[0] + p[1] * x
        if self.kind == "cosine":
            return p[0] + p[1] * np.cos(p[2] * np.pi * x)
        if self.kind == "samples":
            grid = np.linspace(0.0, L, len(p))
            return np.interp(x, grid, np.asarray(p))
        raise ValueError(f"unknown profile {self.kind!r}")

    def text(self) -> str:
        return f"{self.kind}({','.join(_fmt(v) for v in self.params)})"


@dataclass(frozen=True)
class EdgeSpec:
    id: str
    length: float
    flux: FluxFunction
    init: Profile
    h: float
    d: float

    def initial_field(self, h: float | None = None, d: float | None = None) -> ParticleField:
        h = self.h if h is None else h
        d = self.d if d is None else d
        L = self.length
        return sample_initial(lambda x: self.init(x, L), L, h, self.flux, d)


@dataclass(frozen=True)
class BoundarySpec:
    """Prescribed density at an edge end, or an absorbing end (``u is None``)."""

    edge: str
    end: str
    u: float | None = None

    @property
    def absorbing(self) -> bool:
        return self.u is None

    @property
    def state(self) -> float:
        return 0.0 if self.u is None else self.u


@dataclass
class Network:
    edges: dict = field(default_factory=dict)
    nodes: list = field(default_factory=list)
    boundaries: list = field(default_factory=list)

    def edge_ids(self) -> list:
        return sorted(self.edges, key=natural_key)

    def sorted_nodes(self) -> list:
        return sorted(self.nodes, key=lambda nd: natural_key(nd.name))

    def sorted_boundaries(self) -> list:
        return sorted(self.boundaries, key=lambda b: (natural_key(b.edge), b.end))


def max_sync_dt(net: Network) -> float:
    """Largest step keeping every wave from an edge end inside half the edge."""
    if not net.edges:
        return math.inf
    return min(0.5 * e.length / e.flux.v_max for e in net.edges.values())


# -- parsing -------------------------------------------------------------------

_TOKEN = re.compile(r"\S+?\([^)]*\)|\S+")


def _tokens(line: str):
    # whitespace-separated tokens; parentheses may contain spaces
    return [(m.group(0), m.start() + 1) for m in _TOKEN.finditer(line)]


def _float(text, lineno, col, what):
    try:
        v = float(text)
    except ValueError:
        raise ValidationError("syntax", f"{what}: expected a number, got {text!r}", lineno, col) from None
    if not math.isfinite(v):
        raise ValidationError("syntax", f"{what}: number must be finite", lineno, col)
    return v


def _keyvals(tokens, lineno, allowed, flags=()):
    out, cols, seen_flags = {}, {}, set()
    for tok, col in tokens:
        if "=" not in tok:
            if tok in flags:
                seen_flags.add(tok)
                continue
            raise ValidationError("syntax", f"expected key=value, got {tok!r}", lineno, col)
        key, val = tok.split("=", 1)
        if key not in allowed:
            raise ValidationError("syntax", f"unknown key {key!r}", lineno, col)
        if key in out:
            raise ValidationError("syntax", f"duplicate key {key!r}", lineno, col)
        out[key], cols[key] = val, col + len(key) + 1
    return out, cols, seen_flags


def _parse_profile(text, lineno, col) -> Profile:
    m = re.fullmatch(r"(\w+)\((.*)\)", text.strip())
    if not m:
        raise ValidationError("syntax", f"bad initial profile {text!r}", lineno, col)
    kind, body = m.group(1), m.group(2)
    parts = [p.strip() for p in body.split(",")] if body.strip() else []
    params = tuple(_float(p, lineno, col, f"{kind} parameter") for p in parts)
    if kind in PROFILE_ARITY:
        if len(params) != PROFILE_ARITY[kind]:
            raise ValidationError(
                "syntax", f"{kind} takes {PROFILE_ARITY[kind]} parameters, got {len(params)}", lineno, col
            )
    elif kind == "samples":
        if len(params) < 2:
            raise ValidationError("syntax", "samples needs at least two values", lineno, col)
    else:
        raise ValidationError("syntax", f"unknown profile {kind!r}", lineno, col)
    return Profile(kind, params)


def _parse_matrix(text, lineno, col):
    rows = []
    for r in text.split(";"):
        rows.append([_float(v, lineno, col, "A entry") for v in r.split(",")])
    if len({len(r) for r in rows}) != 1:
        raise ValidationError("syntax", "rows of A differ in length", lineno, col)
    return np.array(rows)


def _idlist(text, lineno, col):
    ids = [s for s in text.split(",")]
    if not ids or any(not re.fullmatch(r"[A-Za-z0-9_.\-]+", s) for s in ids):
        raise ValidationError("syntax", f"bad edge list {text!r}", lineno, col)
    return ids


def parse_network(text: str) -> Network:
    """Parse and validate a network document."""
    net = Network()
    node_lines = []
    bnd_lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        toks = _tokens(line)
        head, hcol = toks[0]
        rest = toks[1:]
        if head == "edge":
            if not rest or "=" in rest[0][0]:
                raise ValidationError("syntax", "edge needs an id", lineno, hcol)
            eid, _ = rest[0]
            if not re.fullmatch(r"[A-Za-z0-9_.\-]+", eid):
                raise ValidationError("syntax", f"bad edge id {eid!r}", lineno, rest[0][1])
            if eid in net.edges:
                raise ValidationError("syntax", f"duplicate edge id {eid!r}", lineno, rest[0][1])
            kv, cols, _ = _keyvals(rest[1:], lineno, {"L", "vmax", "umax", "h", "d", "init"})
            for key in ("L", "vmax", "umax", "h", "d", "init"):
                if key not in kv:
                    raise ValidationError("syntax", f"edge {eid}: missing {key}=", lineno, hcol)
            num = {k: _float(kv[k], lineno, cols[k], k) for k in ("L", "vmax", "umax", "h", "d")}
            for k in ("L", "vmax", "umax"):
                if num[k] <= 0:
                    raise ValidationError("invalid_value", f"edge {eid}: {k} must be positive", lineno, cols[k])
            if not (0 < num["d"] <= num["h"] < num["L"]):
                raise ValidationError("invalid_value", f"edge {eid}: need 0 < d <= h < L", lineno, cols["d"])
            prof = _parse_profile(kv["init"], lineno, cols["init"])
            flux = FluxFunction(num["vmax"], num["umax"])
            xs = np.linspace(0.0, num["L"], 2001)
            vals = prof(xs, num["L"])
            if np.any(vals < -1e-12) or np.any(vals > num["umax"] + 1e-12):
                raise ValidationError("invalid_value", f"edge {eid}: initial profile leaves [0, umax]", lineno, cols["init"])
            net.edges[eid] = EdgeSpec(eid, num["L"], flux, prof, num["h"], num["d"])
        elif head == "node":
            kv, cols, _ = _keyvals(rest, lineno, {"id", "in", "out", "A", "c"})
            for key in ("in", "out", "A"):
                if key not in kv:
                    raise ValidationError("syntax", f"node: missing {key}=", lineno, hcol)
            node_lines.append((lineno, hcol, kv, cols))
        elif head == "boundary":
            kv, cols, flags = _keyvals(rest, lineno, {"edge", "end", "u"}, flags=("absorbing",))
            if "edge" not in kv or "end" not in kv:
                raise ValidationError("syntax", "boundary needs edge= and end=", lineno, hcol)
            if ("u" in kv) == bool(flags):
                raise ValidationError("syntax", "boundary needs exactly one of u= or absorbing", lineno, hcol)
            bnd_lines.append((lineno, hcol, kv, cols, bool(flags)))
        else:
            raise ValidationError("syntax", f"unknown directive {head!r}", lineno, hcol)

    names = set()
    for k, (lineno, hcol, kv, cols) in enumerate(node_lines, start=1):
        name = kv.get("id", f"n{k}")
        if name in names:
            raise ValidationError("syntax", f"duplicate node id {name!r}", lineno, cols.get("id", hcol))
        names.add(name)
        ins = _idlist(kv["in"], lineno, cols["in"])
        outs = _idlist(kv["out"], lineno, cols["out"])
        for key, ids in (("in", ins), ("out", outs)):
            for e in ids:
                if e not in net.edges:
                    raise ValidationError("unknown_edge", f"node {name}: unknown edge {e!r}", lineno, cols[key])
        A = _parse_matrix(kv["A"], lineno, cols["A"])
        if A.shape != (len(outs), len(ins)):
            raise ValidationError(
                "syntax", f"node {name}: A must be {len(outs)}x{len(ins)}, got {A.shape[0]}x{A.shape[1]}", lineno, cols["A"]
            )
        c = None
        if "c" in kv:
            c = np.array([_float(v, lineno, cols["c"], "c entry") for v in kv["c"].split(",")])
            if len(c) != len(ins):
                raise ValidationError("bad_merging_vector", f"node {name}: c needs {len(ins)} entries", lineno, cols["c"])
        try:
            net.nodes.append(NodeSpec(ins, outs, A, c, name=name))
        except ValidationError as exc:
            raise ValidationError(exc.code, exc.message, lineno, hcol) from None

    for lineno, hcol, kv, cols, absorbing in bnd_lines:
        eid = kv["edge"]
        if eid not in net.edges:
            raise ValidationError("unknown_edge", f"boundary: unknown edge {eid!r}", lineno, cols["edge"])
        end = kv["end"]
        if end not in (LEFT, RIGHT):
            raise ValidationError("syntax", f"end must be left or right, got {end!r}", lineno, cols["end"])
        u = None
        if not absorbing:
            u = _float(kv["u"], lineno, cols["u"], "u")
            if not 0 <= u <= net.edges[eid].flux.u_max:
                raise ValidationError("invalid_value", f"boundary u={u} outside [0, umax] of {eid}", lineno, cols["u"])
        net.boundaries.append(BoundarySpec(eid, end, u))

    validate_attachments(net)
    return net


def validate_attachments(net: Network):
    """Every edge end must meet exactly one node or boundary."""
    count = {(e, s): 0 for e in net.edges for s in (LEFT, RIGHT)}
    for nd in net.nodes:
        for e in nd.in_edges:
            count[(e, RIGHT)] += 1
        for e in nd.out_edges:
            count[(e, LEFT)] += 1
    for b in net.boundaries:
        count[(b.edge, b.end)] += 1
    for (e, s), k in count.items():
        if k == 0:
            raise ValidationError("dangling_end", f"{s} end of edge {e} is not attached to anything")
        if k > 1:
            raise ValidationError("dangling_end", f"{s} end of edge {e} is attached {k} times")


def serialize_network(net: Network) -> str:
    """Canonical text form; parsing it gives back an equal network."""
    lines = []
    for e in net.edges.values():
        f = e.flux
        lines.append(
            f"edge {e.id} L={_fmt(e.length)} vmax={_fmt(f.v_max)} umax={_fmt(f.u_max)} "
            f"h={_fmt(e.h)} d={_fmt(e.d)} init={e.init.text()}"
        )
    for nd in net.nodes:
        A = ";".join(",".join(_fmt(v) for v in row) for row in nd.A)
        c = ",".join(_fmt(v) for v in nd.c)
        lines.append(f"node id={nd.name} in={','.join(nd.in_edges)} out={','.join(nd.out_edges)} A={A} c={c}")
    for b in net.boundaries:
        tail = "absorbing" if b.absorbing else f"u={_fmt(b.u)}"
        lines.append(f"boundary edge={b.edge} end={b.end} {tail}")
    return "\n".join(lines) + "\n"


def networks_equal(a: Network, b: Network) -> bool:
    if list(a.edges) != list(b.edges) or any(a.edges[k] != b.edges[k] for k in a.edges):
        return False
    if len(a.nodes) != len(b.nodes) or a.boundaries != b.boundaries:
        return False
    for x, y in zip(a.nodes, b.nodes):
        if (x.name, x.in_edges, x.out_edges) != (y.name, y.in_edges, y.out_edges):
            return False
        if not (np.array_equal(x.A, y.A) and np.array_equal(x.c, y.c)):
            return False
    return True


# -- external boundaries ---------------------------------------------------------


def apply_external_boundary(
    fld: ParticleField,
    bc: BoundarySpec,
    dt: float,
    length: float,
    diagnostics: SyncDiagnostics | None = None,
) -> float:
    """Couple an edge end to a constant reservoir after a free step.

    The reservoir behaves like an edge of the same flux holding ``bc.state``
    forever; the end is synchronized as a 1-to-1 junction with it.  Returns
    the vehicles that crossed the end during the step (into the edge on a
    left end, out of it on a right end).
    """
    ghost = GhostPort(fld.flux, bc.state)
    spec = NodeSpec(["ghost"], ["edge"], [[1.0]]) if bc.end == LEFT else NodeSpec(["edge"], ["ghost"], [[1.0]])
    if bc.end == LEFT:
        rep = synchronize_node(spec, [ghost], [EdgePort(fld, LEFT, length)], dt, diagnostics)
    else:
        rep = synchronize_node(spec, [EdgePort(fld, RIGHT, length)], [ghost], dt, diagnostics)
    return float(rep.flux_integrals[0])


def node_ports(nd: NodeSpec, fields: dict, net: Network):
    ins = [EdgePort(fields[e], RIGHT, net.edges[e].length) for e in nd.in_edges]
    outs = [EdgePort(fields[e], LEFT, net.edges[e].length) for e in nd.out_edges]
    return ins, outs


def build_fields(net: Network, h: float | None = None, d: float | None = None) -> dict:
    return {eid: net.edges[eid].initial_field(h, d) for eid in net.edges}

