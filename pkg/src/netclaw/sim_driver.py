"""Time loop, snapshots, error norms and the standard study harnesses."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .area_sync import SyncDiagnostics, synchronize_node
from .edge_field import LEFT, RIGHT, ParticleField
from .errors import DomainError, ValidationError
from .network import (
    Network,
    apply_external_boundary,
    build_fields,
    max_sync_dt,
    natural_key,
    node_ports,
    parse_network,
)
from .scenarios import bottleneck_text, diamond_text

CSV_HEADER = ["t", "edge_id", "x", "u"]


@dataclass
class SimConfig:
    network: Network
    dt: float | None = None
    t_final: float = 1.0
    snapshot_every: float | None = None
    h: float | None = None
    d: float | None = None
    workers: int = 1
    strict_tvd: bool = False

    def resolved_dt(self) -> float:
        limit = max_sync_dt(self.network)
        dt = 0.8 * limit if self.dt is None else float(self.dt)
        if not (dt > 0 and math.isfinite(dt)):
            raise ValidationError("invalid_value", f"dt must be positive, got {dt}")
        if dt > limit * (1 + 1e-12):
            raise ValidationError("invalid_value", f"dt={dt} exceeds the synchronization bound {limit}")
        if not self.t_final >= 0:
            raise ValidationError("invalid_value", f"t_final must be nonnegative, got {self.t_final}")
        if self.snapshot_every is not None and not self.snapshot_every > 0:
            raise ValidationError("invalid_value", "snapshot interval must be positive")
        return dt


@dataclass
class Snapshot:
    t: float
    edges: dict  # edge id -> (x, u) arrays
    credits: dict = field(default_factory=dict)
    inflow: float = 0.0
    outflow: float = 0.0

    def total_area(self) -> float:
        return sum(float(np.sum(np.diff(x) * 0.5 * (u[:-1] + u[1:]))) for x, u in self.edges.values())

    def field(self, edge_id, flux, d=1.0) -> ParticleField:
        x, u = self.edges[edge_id]
        return ParticleField(x, u, flux, d)


class Simulation:
    """Particle fields on every edge, coupled at nodes and boundaries."""

    def __init__(self, net: Network, h=None, d=None, workers: int = 1):
        self.net = net
        self.fields = build_fields(net, h, d)
        self.order = net.edge_ids()
        self.workers = max(1, int(workers))
        self.diagnostics = SyncDiagnostics()
        self.inflow = 0.0
        self.outflow = 0.0
        self.t = 0.0
        self.steps = 0
        # install the junction states before anything moves
        self.synchronize(0.0)

    def advance_edges(self, dt: float):
        if self.workers == 1:
            for eid in self.order:
                self.fields[eid].advance(dt)
            return
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            list(pool.map(lambda eid: self.fields[eid].advance(dt), self.order))

    def synchronize(self, dt: float):
        for nd in self.net.sorted_nodes():
            ins, outs = node_ports(nd, self.fields, self.net)
            synchronize_node(nd, ins, outs, dt, self.diagnostics)
        for bc in self.net.sorted_boundaries():
            L = self.net.edges[bc.edge].length
            phi = apply_external_boundary(self.fields[bc.edge], bc, dt, L, self.diagnostics)
            if bc.end == LEFT:
                self.inflow += phi
            else:
                self.outflow += phi

    def step(self, dt: float):
        self.advance_edges(dt)
        self.synchronize(dt)
        self.t += dt
        self.steps += 1

    def total_area(self) -> float:
        return sum(self.fields[e].total_area() for e in self.order)

    def snapshot(self) -> Snapshot:
        return Snapshot(
            self.t,
            {e: (self.fields[e].x.copy(), self.fields[e].u.copy()) for e in self.order},
            {e: (self.fields[e].credit_left, self.fields[e].credit_right) for e in self.order},
            self.inflow,
            self.outflow,
        )


@dataclass
class RunResult:
    snapshots: list
    diagnostics: SyncDiagnostics
    inflow: float
    outflow: float
    initial_area: float
    final_area: float
    steps: int
    fields: dict

    def audit_error(self) -> float:
        """Relative mismatch between boundary tallies and the change in vehicles."""
        change = self.final_area - self.initial_area
        scale = max(abs(self.initial_area), abs(self.final_area), abs(self.inflow), abs(self.outflow), 1e-300)
        return abs(change - (self.inflow - self.outflow)) / scale


def _time_marks(t_final: float, every: float | None) -> list:
    marks = []
    if every is not None:
        j = 1
        while j * every < t_final * (1 - 1e-12):
            marks.append(j * every)
            j += 1
    marks.append(t_final)
    return marks


def run_simulation(cfg: SimConfig) -> RunResult:
    """Step the network to ``cfg.t_final``, recording snapshots along the way.

    Steps have length ``dt`` except where one is shortened to land exactly
    on a snapshot time or the final time.
    """
    dt = cfg.resolved_dt()
    sim = Simulation(cfg.network, cfg.h, cfg.d, cfg.workers)
    a0 = sim.total_area()
    snaps = [sim.snapshot()]
    for mark in _time_marks(cfg.t_final, cfg.snapshot_every):
        while sim.t < mark:
            t_next = sim.t + dt
            if t_next > mark - 1e-9 * dt:
                t_next = mark
            sim.step(t_next - sim.t)
            sim.t = t_next
        if mark > 0 or not snaps:
            snaps.append(sim.snapshot())
    return RunResult(snaps, sim.diagnostics, sim.inflow, sim.outflow, a0, sim.total_area(), sim.steps, sim.fields)


# -- snapshot files ----------------------------------------------------------------


def _g17(v) -> str:
    return "%.17g" % v


def write_snapshot(snap: Snapshot, sink, header: bool = True):
    """CSV rows ``t,edge_id,x,u`` in edge-id then particle order."""
    w = csv.writer(sink, lineterminator="\n")
    if header:
        w.writerow(CSV_HEADER)
    t = _g17(snap.t)
    for eid in sorted(snap.edges, key=natural_key):
        x, u = snap.edges[eid]
        for a, b in zip(x, u):
            w.writerow([t, eid, _g17(a), _g17(b)])


def write_snapshots(snaps, sink):
    for k, s in enumerate(snaps):
        write_snapshot(s, sink, header=(k == 0))
    if not snaps:
        csv.writer(sink, lineterminator="\n").writerow(CSV_HEADER)


def snapshots_to_text(snaps) -> str:
    buf = io.StringIO()
    write_snapshots(snaps, buf)
    return buf.getvalue()


def read_snapshots(source) -> list:
    """Parse CSV written by :func:`write_snapshots` back into snapshots."""
    reader = csv.reader(source)
    head = next(reader, None)
    if head != CSV_HEADER:
        raise ValueError(f"unexpected header {head!r}")
    rows = {}
    times = []
    for t, eid, x, u in reader:
        if t not in rows:
            rows[t] = {}
            times.append(t)
        rows[t].setdefault(eid, ([], []))
        rows[t][eid][0].append(float(x))
        rows[t][eid][1].append(float(u))
    return [
        Snapshot(float(t), {e: (np.array(xs), np.array(us)) for e, (xs, us) in rows[t].items()})
        for t in times
    ]


# -- error norms ---------------------------------------------------------------------


def error_norms(a: ParticleField, b: ParticleField, interval) -> tuple[float, float]:
    """L-infinity and L2 distance between two interpolants on ``interval``.

    Both interpolants are linear between the union of their particle
    positions, so the norms are evaluated piece by piece from one-sided
    limits; each piece is further split tenfold.
    """
    x0, x1 = map(float, interval)
    if not x0 < x1:
        raise DomainError("empty interval")
    for f in (a, b):
        if x0 < f.x[0] - f.pos_tol or x1 > f.x[-1] + f.pos_tol:
            raise DomainError(f"interval [{x0}, {x1}] not inside hull [{f.x[0]}, {f.x[-1]}]")
    pts = np.concatenate(([x0, x1], a.x, b.x))
    pts = np.unique(pts[(pts >= x0) & (pts <= x1)])
    t = np.linspace(0.0, 1.0, 11)[:-1]
    fine = np.concatenate([p + t * (q - p) for p, q in zip(pts[:-1], pts[1:])] + [[pts[-1]]])
    fine = np.unique(fine)
    lo, hi = fine[:-1], fine[1:]
    # one-sided limits on each piece: right limit at its start, left limit at its end
    e0 = a.interpolant_value(lo, RIGHT) - b.interpolant_value(lo, RIGHT)
    e1 = a.interpolant_value(hi, LEFT) - b.interpolant_value(hi, LEFT)
    w = hi - lo
    linf = float(max(np.max(np.abs(e0)), np.max(np.abs(e1))))
    # Simpson is exact for the square of a linear function
    em = 0.5 * (e0 + e1)
    l2sq = float(np.sum(w / 6.0 * (e0**2 + 4 * em**2 + e1**2)))
    return linf, math.sqrt(max(l2sq, 0.0))


# -- harnesses -------------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    k: int
    dt: float
    linf: float
    l2: float


@dataclass
class ConvergenceResult:
    rows: list
    order_linf: float | None
    order_l2: float | None
    reference_dt: float


def fitted_order(dts, errors) -> float | None:
    """Least-squares slope of log(error) against log(dt)."""
    if len(dts) < 2:
        return None
    slope, _ = np.polyfit(np.log(dts), np.log(errors), 1)
    return float(slope)


def bottleneck_run(
    k: int, h: float, d: float, t_final: float = 3.0, workers: int = 1, network_text=bottleneck_text
) -> RunResult:
    """Run ``network_text(h, d)`` with dt = 2^(-k/2)."""
    net = parse_network(network_text(h, d))
    return run_simulation(SimConfig(net, dt=2.0 ** (-k / 2), t_final=t_final, workers=workers))


def convergence_study(
    k_list=range(4, 13),
    k_ref: int = 16,
    h: float = 8e-4,
    d: float = 2e-4,
    t_final: float = 3.0,
    interval=(0.0, 0.3),
    edge: str = "2",
    workers: int = 1,
    network_text=bottleneck_text,
) -> ConvergenceResult:
    """Errors for dt = 2^(-k/2) against a fine-dt run, by default on the bottleneck."""
    ref = bottleneck_run(k_ref, h, d, t_final, workers, network_text).fields[edge]
    rows = []
    for k in k_list:
        fld = bottleneck_run(k, h, d, t_final, workers, network_text).fields[edge]
        linf, l2 = error_norms(fld, ref, interval)
        rows.append(ConvergenceRow(k, 2.0 ** (-k / 2), linf, l2))
    dts = [r.dt for r in rows]
    return ConvergenceResult(
        rows,
        fitted_order(dts, [r.linf for r in rows]),
        fitted_order(dts, [r.l2 for r in rows]),
        2.0 ** (-k_ref / 2),
    )


def diamond_run(scale: float, t_final: float = 2.0, workers: int = 1, snapshot_every=None) -> RunResult:
    """Diamond network at resolution h = 0.02 s, d = 0.005 s, dt = 0.01 s."""
    net = parse_network(diamond_text(scale))
    return run_simulation(
        SimConfig(net, dt=0.01 * scale, t_final=t_final, workers=workers, snapshot_every=snapshot_every)
    )


@dataclass
class Shock:
    position: float
    strength: float
    left: float
    right: float


def extract_shocks(x, u, d: float, min_strength: float = 0.1) -> list:
    """Locate shocks as runs of steep upward steps no wider than 2d.

    Merging keeps shocks resolved on a few particles spaced about d apart,
    while smooth parts are spaced about h; zero-width jumps count as well.
    """
    x, u = np.asarray(x), np.asarray(u)
    if len(x) < 2:
        return []
    w = np.diff(x)
    du = np.diff(u)
    steep = (w <= 2.0 * d * (1 + 1e-9)) & (du > 0)
    # a narrow step is only shock-like if it is much steeper than a smooth ramp of width h
    steep &= du > 1e-3
    shocks = []
    i, n = 0, len(w)
    while i < n:
        if not steep[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and steep[j + 1]:
            j += 1
        ul, ur = u[i], u[j + 1]
        if ur - ul >= min_strength:
            # position where the jump is half done
            half = 0.5 * (ul + ur)
            seg_x, seg_u = x[i : j + 2], u[i : j + 2]
            pos = float(np.interp(half, seg_u, seg_x)) if np.all(np.diff(seg_u) > 0) else 0.5 * (x[i] + x[j + 1])
            shocks.append(Shock(pos, float(ur - ul), float(ul), float(ur)))
        i = j + 1
    return shocks


def match_shocks(a: list, b: list, tol: float, strong: float = 0.15, weak: float = 0.05) -> list:
    """Unmatched strong shocks: each strong shock needs a partner within ``tol``."""
    missing = []
    for mine, other in ((a, b), (b, a)):
        for s in mine:
            if s.strength < strong:
                continue
            if not any(abs(o.position - s.position) <= tol and o.strength >= weak for o in other):
                missing.append(s)
    return missing
