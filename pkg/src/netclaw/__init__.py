"""Characteristic particle simulation of LWR traffic flow on road networks."""

from .area_sync import area_drift_rate, propagate_virtual_areas, reconstruct_area, synchronize_node
from .edge_field import LEFT, RIGHT, Particle, ParticleField, sample_initial, segment_area
from .errors import DomainError, InternalError, ValidationError
from .flux import FluxFunction
from .network import (
    BoundarySpec,
    EdgeSpec,
    Network,
    apply_external_boundary,
    max_sync_dt,
    parse_network,
    serialize_network,
)
from .node_riemann import NodeSpec, classify_edges, riemann_new_states, solve_node, solve_node_fluxes
from .sim_driver import SimConfig, Snapshot, convergence_study, error_norms, run_simulation, write_snapshot

__all__ = [
    "LEFT",
    "RIGHT",
    "BoundarySpec",
    "DomainError",
    "EdgeSpec",
    "FluxFunction",
    "InternalError",
    "Network",
    "NodeSpec",
    "Particle",
    "ParticleField",
    "SimConfig",
    "Snapshot",
    "ValidationError",
    "apply_external_boundary",
    "area_drift_rate",
    "classify_edges",
    "convergence_study",
    "error_norms",
    "max_sync_dt",
    "parse_network",
    "propagate_virtual_areas",
    "reconstruct_area",
    "riemann_new_states",
    "run_simulation",
    "sample_initial",
    "segment_area",
    "serialize_network",
    "solve_node",
    "solve_node_fluxes",
    "synchronize_node",
    "write_snapshot",
]
