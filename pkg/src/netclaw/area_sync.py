"""Conservative coupling of edge fields at a junction.

Between synchronizations every edge evolves on its own and its extremal
particles drift off the edge ends.  The signed area between an edge end and
its extremal particle obeys

    d/dt I = F(t) - f(u_e) + u_e f'(u_e),

with F the (unknown) flux through the end and u_e the extremal value, which
is constant during the step.  Writing Phi = integral of F over the step,
each end therefore satisfies I = Phi + dt * (u_e f'(u_e) - f(u_e)).  The
Phi of all edges at a junction are tied together by the destination matrix
(and by the merging vector when both ingoing roads are held back); they are
read off the edges whose boundary data come from their own interior and
propagated to the others.  Each edge then changes its area by exactly
Phi_left - Phi_right, which is what makes the scheme conservative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .edge_field import LEFT, RIGHT, ParticleField
from .errors import InternalError
from .flux import FluxFunction
from .node_riemann import (
    AFFECTED,
    INFLUENCING,
    INGOING,
    NEUTRAL,
    OUTGOING,
    NodeSpec,
    solve_node,
)


def area_drift_rate(flux_a: FluxFunction, u_a: float, flux_b: FluxFunction, u_b: float, coeff: float = 1.0) -> float:
    """Rate C at which I_b - coeff * I_a changes for two flux-linked traces.

    Requires f_b(u_b) = coeff * f_a(u_a), so that the unknown node fluxes
    cancel from the difference.
    """
    fa, fb = flux_a.flow(u_a), flux_b.flow(u_b)
    scale = max(flux_a.f_max, flux_b.f_max) * max(1.0, abs(coeff))
    if abs(fb - coeff * fa) > 1e-9 * scale:
        raise InternalError(f"traces are not flux-linked: f_b={fb}, coeff*f_a={coeff * fa}")
    return flux_b.speed_times_density(u_b) - coeff * flux_a.speed_times_density(u_a)


@dataclass
class EndBalance:
    """Area bookkeeping for one edge end (or boundary reservoir) at a node.

    ``measured`` is the signed area between the end and the extremal
    particle as found after the free evolution; ``credit`` the area credit
    taken on that side during the step.
    """

    role: str  # INGOING or OUTGOING, relative to the node
    flux: FluxFunction
    u_ext: float
    measured: float
    credit: float = 0.0
    status: str = AFFECTED
    ghost: bool = False

    @property
    def sign(self) -> float:
        return 1.0 if self.role == INGOING else -1.0

    def drift(self, dt: float) -> float:
        f = self.flux
        return dt * (f.speed_times_density(self.u_ext) - f.flow(self.u_ext))

    def measured_flux_integral(self, dt: float) -> float:
        return self.measured - self.sign * self.credit - self.drift(dt)

    def area_from_flux_integral(self, phi: float, dt: float) -> float:
        return phi + self.drift(dt) + self.sign * self.credit

    def correction(self, target: float) -> float:
        """Area to add near this end so that its signed area becomes ``target``."""
        return self.sign * (self.measured - target)


def _nullspace(M: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    _, sv, vt = np.linalg.svd(M)
    rank = int(np.sum(sv > rtol * (sv[0] if len(sv) else 0.0)))
    return vt[rank:].T


def propagate_virtual_areas(
    spec: NodeSpec,
    ends: Sequence[EndBalance],
    dt: float,
    merge_limited: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Flux integrals and target signed areas for every end at a node.

    ``ends`` lists the ingoing ends first, then the outgoing ones.  Ends that
    are influencing or neutral fix the flux integrals; the destination
    relations (and the merging ratio when ``merge_limited``) carry them to the
    affected ends.  If the known ends over-determine the system the misfit
    is spread by least squares; if they under-determine it, affected edge
    ends fall back on their own measurement.  The relations themselves hold
    exactly in every case.
    """
    n, m = spec.shape
    if len(ends) != n + m:
        raise InternalError(f"expected {n + m} ends, got {len(ends)}")
    if merge_limited:
        base = spec.c.reshape(n, 1)
    else:
        base = np.eye(n)
    M = np.vstack((base, spec.A @ base))
    meas = np.array([e.measured_flux_integral(dt) for e in ends])

    known = [k for k, e in enumerate(ends) if e.status in (INFLUENCING, NEUTRAL)]
    soft = [k for k, e in enumerate(ends) if e.status == AFFECTED and not e.ghost]

    z = np.zeros(M.shape[1])
    free = np.eye(M.shape[1])
    for rows in (known, soft):
        if not rows or free.shape[1] == 0:
            continue
        Mr = M[rows] @ free
        w, *_ = np.linalg.lstsq(Mr, meas[rows] - M[rows] @ z, rcond=None)
        z = z + free @ w
        free = free @ _nullspace(Mr)

    phi_in = base @ z
    phi = np.concatenate((phi_in, spec.A @ phi_in))
    targets = np.array([e.area_from_flux_integral(p, dt) for e, p in zip(ends, phi)])
    return phi, targets


@dataclass
class Reconstruction:
    step: int  # 0 = nothing to do, else 1, 2 or 3
    k: int
    clamped: bool = False


def reconstruct_area(
    field_: ParticleField,
    delta: float,
    dt: float,
    side: str = LEFT,
    limit: float | None = None,
) -> Reconstruction:
    """Add ``delta`` area near one end without touching the extremal particle.

    Walking inward over particles k = 2, 3, ... the profile between the end
    particle and particle k is replaced by (1) a ramp plus a constant,
    (2) a constant within the local value range, or, once k is further than
    ``dt * v_max`` from the end, (3) whatever constant matches ``delta``.
    ``limit`` caps how far from the end the walk may reach; a particle is
    inserted on the interpolant at that distance when needed.
    """
    if delta == 0.0:
        return Reconstruction(0, 1)
    flux = field_.flux
    x, u = field_.x, field_.u
    n = len(x)
    if n < 2:
        raise InternalError("cannot reconstruct area on a single particle")
    if side == LEFT:
        order = np.arange(n)
    elif side == RIGHT:
        order = np.arange(n - 1, -1, -1)
    else:
        raise ValueError(f"unknown side {side!r}")
    xo, uo = x[order], u[order]
    x_node = xo[0]
    dist = np.abs(xo - x_node)
    seg = np.diff(dist) * 0.5 * (uo[:-1] + uo[1:])
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    radius = dt * flux.v_max
    u1 = uo[0]
    lo = hi = u1

    barrier = None
    clamped = False
    interior: list[tuple[float, float]] = []
    k = 1
    while True:
        D, uk, area_old = dist[k], uo[k], cum[k]
        if limit is not None and D > limit and dist[k - 1] < limit:
            t = (limit - dist[k - 1]) / (D - dist[k - 1])
            uk = uo[k - 1] + t * (uo[k] - uo[k - 1])
            area_old = cum[k - 1] + (limit - dist[k - 1]) * 0.5 * (uo[k - 1] + uk)
            D = limit
            barrier = (D, uk)
        lo, hi = min(lo, uk), max(hi, uk)
        target = area_old + delta
        last = barrier is not None or k == n - 1 or D >= radius or (limit is not None and D >= limit)
        if D > 0:
            sol = _ramp_and_constant(D, u1, uk, target)
            if sol is not None:
                step, interior = 1, sol
                break
            c = target / D
            if lo <= c <= hi:
                step, interior = 2, _constant_window(D, u1, uk, c)
                break
            if last:
                clamped = not (0.0 <= c <= flux.u_max)
                c = min(max(c, 0.0), flux.u_max)
                step, interior = 3, _constant_window(D, u1, uk, c)
                break
        elif last and k == n - 1:
            raise InternalError("no room to place area correction")
        k += 1

    sgn = 1.0 if side == LEFT else -1.0
    new_pts = [(x_node + sgn * dd, vv) for dd, vv in interior]
    if barrier is not None:
        new_pts.append((x_node + sgn * barrier[0], barrier[1]))
    head_x = [xo[0]] + [p[0] for p in new_pts]
    head_u = [uo[0]] + [p[1] for p in new_pts]
    ox = np.concatenate((head_x, xo[k:]))
    ou = np.concatenate((head_u, uo[k:]))
    # positions rebuilt from distances may cross an old particle by an ulp
    if side == RIGHT:
        ox = np.minimum.accumulate(ox)
        ox, ou = ox[::-1], ou[::-1]
    else:
        ox = np.maximum.accumulate(ox)
    field_.x = np.ascontiguousarray(ox)
    field_.u = np.ascontiguousarray(ou)
    return Reconstruction(step, k + 1, clamped)


def _ramp_and_constant(D, u1, uk, target):
    # new interior particles (distance, value) or None if unreachable
    tol = 1e-14 * max(1.0, abs(target))
    if u1 == uk:
        if abs(target - D * u1) <= tol:
            return []
        return None
    half = 0.5 * (u1 - uk)
    # ramp from the end value to uk at xi, then constant uk up to D
    xi = (target - D * uk) / half
    if -tol <= xi <= D + tol * D:
        xi = min(max(xi, 0.0), D)
        return [] if xi >= D else [(xi, uk)]
    # constant end value up to xi, then ramp to uk at D
    xi = (target - D * 0.5 * (u1 + uk)) / half
    if -tol <= xi <= D + tol * D:
        xi = min(max(xi, 0.0), D)
        return [] if xi <= 0.0 else [(xi, u1)]
    return None


def _constant_window(D, u1, uk, c):
    pts = []
    if c != u1:
        pts.append((0.0, c))
    if c != uk:
        pts.append((D, c))
    return pts


# -- node orchestration -------------------------------------------------------


@dataclass
class EdgePort:
    """One end of an edge field attached to a node."""

    field: ParticleField
    side: str  # which end of the edge sits at the node
    length: float


@dataclass
class GhostPort:
    """A semi-infinite reservoir of constant density standing in for a boundary."""

    flux: FluxFunction
    state: float


@dataclass
class SyncDiagnostics:
    steps: dict = field(default_factory=lambda: {1: 0, 2: 0, 3: 0})
    clamped: int = 0

    def record(self, rec: Reconstruction):
        if rec.step:
            self.steps[rec.step] += 1
        if rec.clamped:
            self.clamped += 1

    @property
    def failsafe(self) -> int:
        return self.steps[3]


@dataclass
class NodeSyncReport:
    flux_integrals: np.ndarray
    classification: list
    new_states: list
    corrections: list


def _port_flux(p):
    return p.field.flux if isinstance(p, EdgePort) else p.flux


def synchronize_node(
    spec: NodeSpec,
    in_ports: Sequence,
    out_ports: Sequence,
    dt: float,
    diagnostics: SyncDiagnostics | None = None,
) -> NodeSyncReport:
    """Couple the fields meeting at one node after a free step of length ``dt``.

    Trims every edge end to the node, solves the junction Riemann problem on
    the traces, installs the new boundary states, balances the area via the
    flux integrals and finally rebuilds each end to carry its share.
    """
    ports = list(in_ports) + list(out_ports)
    roles = [INGOING] * len(in_ports) + [OUTGOING] * len(out_ports)
    ends: list[EndBalance] = []
    traces = []
    for p, role in zip(ports, roles):
        if isinstance(p, EdgePort):
            expected = RIGHT if role == INGOING else LEFT
            if p.side != expected:
                raise InternalError(f"{role} edge must meet the node at its {expected} end")
            fld = p.field
            u_ext = fld.extremal(p.side).u
            if p.side == LEFT:
                credit = fld.credit_left
                fld.credit_left = 0.0
            else:
                credit = fld.credit_right
                fld.credit_right = 0.0
            trim = fld.boundary_trim(p.length, p.side)
            ends.append(EndBalance(role, fld.flux, u_ext, trim.signed_area(p.side), credit))
            traces.append(trim.value)
        else:
            f = p.flux
            ends.append(EndBalance(role, f, p.state, dt * f.speed_times_density(p.state), 0.0, ghost=True))
            traces.append(p.state)

    n = len(in_ports)
    fluxes = [_port_flux(p) for p in ports]
    sol = solve_node(spec, fluxes[:n], traces[:n], fluxes[n:], traces[n:])
    for p, u_hat in zip(ports, sol.new_states):
        if isinstance(p, EdgePort):
            p.field.insert_boundary_state(u_hat, p.side)
    for e, status, u_hat in zip(ends, sol.classification, sol.new_states):
        # a reservoir only knows its flux while the solve leaves its state alone
        e.status = AFFECTED if e.ghost and u_hat != e.u_ext else status

    phi, targets = propagate_virtual_areas(spec, ends, dt, sol.merge_limited)
    corrections = []
    for p, e, target in zip(ports, ends, targets):
        delta = e.correction(target)
        corrections.append(delta)
        if not isinstance(p, EdgePort):
            continue
        if abs(delta) <= 1e-15 * (1.0 + abs(e.measured)):
            continue
        rec = reconstruct_area(p.field, delta, dt, p.side, limit=0.5 * p.length)
        if diagnostics is not None:
            diagnostics.record(rec)
    return NodeSyncReport(phi, sol.classification, sol.new_states, corrections)
