"""Generalized Riemann problem at a junction.

Ingoing fluxes maximize the total throughput subject to the demand and
supply bounds and the destination matrix; when the optimum is not unique
the merging vector picks the point on the optimal face.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, InternalError, ValidationError
from .flux import CONGESTED, FREE, FluxFunction

INGOING = "in"
OUTGOING = "out"

INFLUENCING = "influencing"
AFFECTED = "affected"
NEUTRAL = "neutral"

SUPPORTED_SHAPES = {(1, 1), (1, 2), (2, 1)}


@dataclass
class NodeSpec:
    """Junction with ``n`` ingoing and ``m`` outgoing edges.

    ``A`` is the m x n destination matrix (column-stochastic); ``c`` the
    merging vector, only used for confluences.
    """

    in_edges: Sequence[str]
    out_edges: Sequence[str]
    A: np.ndarray
    c: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.in_edges = tuple(self.in_edges)
        self.out_edges = tuple(self.out_edges)
        n, m = len(self.in_edges), len(self.out_edges)
        label = self.name or f"in={','.join(self.in_edges)} out={','.join(self.out_edges)}"
        if (n, m) not in SUPPORTED_SHAPES:
            raise ValidationError("unsupported_shape", f"node {label}: {n}-to-{m} junctions are not supported")
        self.A = np.asarray(self.A, dtype=float).reshape(m, n)
        if np.any(self.A < 0) or np.any(self.A > 1):
            raise ValidationError("non_stochastic", f"node {label}: destination fractions must lie in [0, 1]")
        sums = self.A.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValidationError(
                "non_stochastic",
                f"node {label}: destination matrix columns sum to {', '.join(f'{s:g}' for s in sums)}",
            )
        if self.c is None:
            self.c = np.ones(n)
        self.c = np.asarray(self.c, dtype=float).reshape(n)
        if np.any(self.c <= 0):
            raise ValidationError("bad_merging_vector", f"node {label}: merging vector must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.in_edges), len(self.out_edges)


@dataclass
class NodeFluxSolution:
    gamma_in: np.ndarray
    gamma_out: np.ndarray
    new_states: list = field(default_factory=list)
    classification: list = field(default_factory=list)
    # both ingoing edges of a confluence are held back: fluxes follow c
    merge_limited: bool = False


def _check_nonneg(values, what):
    for v in values:
        if v < 0 or not math.isfinite(v):
            raise DomainError(f"{what} must be finite and nonnegative, got {v}")


def solve_node_fluxes(spec: NodeSpec, demands, supplies) -> tuple[np.ndarray, np.ndarray]:
    """Throughput-maximizing fluxes (gamma_in, gamma_out) for one junction."""
    demands = [float(v) for v in demands]
    supplies = [float(v) for v in supplies]
    n, m = spec.shape
    if len(demands) != n or len(supplies) != m:
        raise DomainError(f"expected {n} demands and {m} supplies")
    _check_nonneg(demands, "demands")
    _check_nonneg(supplies, "supplies")
    A = spec.A

    if n == 1:
        g = demands[0]
        for j in range(m):
            a = A[j, 0]
            # compare before dividing so tiny fractions cannot overflow
            if a > 0 and supplies[j] < g * a:
                g = supplies[j] / a
        gamma_in = np.array([g])
    else:
        d1, d2 = demands
        s = supplies[0]
        if d1 + d2 <= s:
            gamma_in = np.array([d1, d2])
        else:
            c1, c2 = spec.c
            beta = s / (c1 + c2)
            g1, g2 = beta * c1, beta * c2
            if g1 > d1:
                g1, g2 = d1, s - d1
            elif g2 > d2:
                g1, g2 = s - d2, d2
            gamma_in = np.array([g1, g2])
    return gamma_in, A @ gamma_in


def _flux_equal(flux: FluxFunction, gamma: float, u: float) -> bool:
    return abs(gamma - flux.flow(u)) <= 1e-12 * flux.f_max


def riemann_new_states(fluxes, u_old, gammas, sides) -> list[float]:
    """Boundary states carrying the node fluxes, with waves leaving the node."""
    out = []
    for flux, u, g, side in zip(fluxes, u_old, gammas, sides):
        if g > flux.f_max * (1.0 + 1e-12) + 1e-15:
            raise InternalError(f"node flux {g} exceeds edge capacity {flux.f_max}")
        if _flux_equal(flux, g, u):
            out.append(float(u))
        elif abs(g - flux.f_max) <= 1e-12 * flux.f_max:
            # the inverse is ill-conditioned at the sonic point
            out.append(flux.u_crit)
        elif side == INGOING:
            out.append(flux.inverse_flow(g, CONGESTED))
        elif side == OUTGOING:
            out.append(flux.inverse_flow(g, FREE))
        else:
            raise ValueError(f"unknown side {side!r}")
    return out


def classify_edge(flux: FluxFunction, u_old: float, u_new: float, side: str) -> str:
    """Influencing, affected or neutral, from the trace before and after the solve.

    A changed state makes the edge affected unless the new state is sonic,
    in which case the wave it launches is stationary at the node.
    """
    tol = 1e-12 * flux.v_max
    if abs(u_new - u_old) > 1e-12:
        return NEUTRAL if abs(flux.wave_speed(u_new)) <= tol else AFFECTED
    s = flux.wave_speed(u_old)
    if abs(s) <= tol:
        return NEUTRAL
    into_node = s > 0 if side == INGOING else s < 0
    return INFLUENCING if into_node else AFFECTED


def classify_edges(fluxes, u_old, u_new, sides) -> list[str]:
    """Tag each edge as influencing, affected or neutral for this node."""
    return [classify_edge(f, a, b, s) for f, a, b, s in zip(fluxes, u_old, u_new, sides)]


def solve_node(spec: NodeSpec, in_fluxes, in_states, out_fluxes, out_states) -> NodeFluxSolution:
    """Full Riemann solve from the edge traces at the node."""
    demands = [f.demand(u) for f, u in zip(in_fluxes, in_states)]
    supplies = [f.supply(u) for f, u in zip(out_fluxes, out_states)]
    g_in, g_out = solve_node_fluxes(spec, demands, supplies)
    fluxes = list(in_fluxes) + list(out_fluxes)
    states = list(in_states) + list(out_states)
    gammas = list(g_in) + list(g_out)
    sides = [INGOING] * len(in_fluxes) + [OUTGOING] * len(out_fluxes)
    new = riemann_new_states(fluxes, states, gammas, sides)
    cls = classify_edges(fluxes, states, new, sides)
    merge_limited = len(in_fluxes) == 2 and all(
        g < dem - 1e-12 * f.f_max for g, dem, f in zip(g_in, demands, in_fluxes)
    )
    return NodeFluxSolution(g_in, g_out, new, cls, merge_limited)
