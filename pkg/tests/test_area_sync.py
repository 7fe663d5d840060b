import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netclaw.area_sync import (
    EdgePort,
    EndBalance,
    SyncDiagnostics,
    area_drift_rate,
    propagate_virtual_areas,
    reconstruct_area,
    synchronize_node,
)
from netclaw.edge_field import LEFT, RIGHT, ParticleField, sample_initial
from netclaw.errors import InternalError
from netclaw.flux import FluxFunction
from netclaw.network import parse_network
from netclaw.node_riemann import AFFECTED, INFLUENCING, INGOING, NEUTRAL, OUTGOING, NodeSpec
from netclaw.scenarios import ring_text
from netclaw.sim_driver import Simulation

unit = FluxFunction(1.0, 1.0)
wide = FluxFunction(1.0, 2.0)
fast = FluxFunction(1.5, 1.0)

U_JAM = (2 + math.sqrt(2.08)) / 2
ONE_ONE = NodeSpec(["1"], ["2"], [[1.0]])
CONF = NodeSpec(["1", "2"], ["3"], [[1.0, 1.0]])


def field(pairs, flux=unit, d=0.05):
    xs, us = zip(*pairs)
    return ParticleField(xs, us, flux, d)


class TestDriftRate:
    def test_identical_traces(self):
        assert area_drift_rate(unit, 0.3, unit, 0.3) == 0.0

    def test_bottleneck_traces(self):
        c = area_drift_rate(wide, U_JAM, fast, 0.8)
        expected = 0.8 * fast.wave_speed(0.8) - U_JAM * wide.wave_speed(U_JAM)
        assert c == pytest.approx(expected, abs=1e-15)
        assert c == pytest.approx(0.52112, abs=5e-5)

    def test_critical_traces(self):
        assert area_drift_rate(wide, 1.0, wide, 1.0) == 0.0

    def test_bifurcation_coefficient(self):
        # f(0.5) on edge 1 splits evenly: each outgoing carries 0.125 at u = (1 - sqrt(0.5)) / 2
        u_out = (1 - math.sqrt(0.5)) / 2
        c = area_drift_rate(unit, 0.5, unit, u_out, coeff=0.5)
        assert c == pytest.approx(u_out * unit.wave_speed(u_out), abs=1e-15)

    def test_not_flux_linked(self):
        with pytest.raises(InternalError):
            area_drift_rate(unit, 0.2, unit, 0.3)


class TestPropagate:
    def test_equilibrium(self):
        ends = [
            EndBalance(INGOING, unit, 0.3, unit.flow(0.3) * 0.1 + 0.1 * (unit.speed_times_density(0.3) - unit.flow(0.3)), status=INFLUENCING),
            EndBalance(OUTGOING, unit, 0.3, 0.0, status=AFFECTED),
        ]
        phi, targets = propagate_virtual_areas(ONE_ONE, ends, 0.1)
        assert phi[0] == pytest.approx(0.1 * unit.flow(0.3), abs=1e-15)
        assert phi[1] == phi[0]

    def test_bottleneck_example(self):
        dt = 0.1
        ends = [
            EndBalance(INGOING, wide, U_JAM, 0.02, status=INFLUENCING),
            EndBalance(OUTGOING, fast, 0.8, 0.0, status=AFFECTED),
        ]
        phi, targets = propagate_virtual_areas(ONE_ONE, ends, dt)
        c = area_drift_rate(wide, U_JAM, fast, 0.8)
        assert targets[0] == pytest.approx(0.02, abs=1e-15)
        assert targets[1] == pytest.approx(0.02 + dt * c, abs=1e-14)
        assert targets[1] == pytest.approx(0.072112, abs=1e-5)

    def test_credit_is_subtracted(self):
        ends = [
            EndBalance(INGOING, unit, 0.3, 0.05, credit=0.01, status=INFLUENCING),
            EndBalance(OUTGOING, unit, 0.3, 0.0, status=AFFECTED),
        ]
        with_credit, _ = propagate_virtual_areas(ONE_ONE, ends, 0.1)
        ends[0].credit = 0.0
        without, _ = propagate_virtual_areas(ONE_ONE, ends, 0.1)
        assert without[0] - with_credit[0] == pytest.approx(0.01, abs=1e-15)

    def test_confluence_free_case(self):
        dt = 0.1
        u1, u2 = 0.2, 0.1
        u3 = unit.inverse_flow(unit.flow(u1) + unit.flow(u2), "free")
        ends = [
            EndBalance(INGOING, unit, u1, 0.01, status=INFLUENCING),
            EndBalance(INGOING, unit, u2, 0.01, status=INFLUENCING),
            EndBalance(OUTGOING, unit, u3, 0.0, status=AFFECTED),
        ]
        _, targets = propagate_virtual_areas(CONF, ends, dt)
        g = unit.speed_times_density
        assert targets[2] == pytest.approx(0.01 + 0.01 + (g(u3) - g(u1) - g(u2)) * dt, abs=1e-14)

    def test_confluence_merge_limited_split(self):
        # held back ingoing edges share the outgoing flux in the ratio c1 : c2
        spec = NodeSpec(["1", "2"], ["3"], [[1.0, 1.0]], c=[1.0, 3.0])
        ends = [
            EndBalance(INGOING, unit, 0.8, 0.0, status=AFFECTED),
            EndBalance(INGOING, unit, 0.8, 0.0, status=AFFECTED),
            EndBalance(OUTGOING, unit, 0.2, -0.04, status=INFLUENCING),
        ]
        phi, _ = propagate_virtual_areas(spec, ends, 0.1, merge_limited=True)
        assert phi[1] == pytest.approx(3 * phi[0], abs=1e-15)
        assert phi[2] == pytest.approx(phi[0] + phi[1], abs=1e-15)

    def test_relations_hold_when_overdetermined(self):
        ends = [
            EndBalance(INGOING, unit, 0.2, 0.03, status=INFLUENCING),
            EndBalance(OUTGOING, unit, 0.8, -0.01, status=INFLUENCING),
        ]
        phi, _ = propagate_virtual_areas(ONE_ONE, ends, 0.1)
        assert phi[0] == phi[1]

    def test_wrong_arity(self):
        with pytest.raises(InternalError):
            propagate_virtual_areas(ONE_ONE, [EndBalance(INGOING, unit, 0.2, 0.0)], 0.1)


class TestReconstruct:
    def test_zero_is_noop(self):
        f = field([(0, 0.2), (0.5, 0.4)])
        rec = reconstruct_area(f, 0.0, 1.0)
        assert rec.step == 0
        assert f.particles == [(0.0, 0.2), (0.5, 0.4)]

    def test_ramp_then_constant(self):
        f = field([(0, 0.2), (0.5, 0.4)])
        rec = reconstruct_area(f, 0.03, 1.0)
        assert rec.step == 1
        assert f.total_area() == pytest.approx(0.18, abs=1e-15)
        np.testing.assert_allclose(f.x, [0, 0.2, 0.5], atol=1e-15)
        np.testing.assert_allclose(f.u, [0.2, 0.4, 0.4], atol=1e-15)

    def test_flat_needs_failsafe(self):
        f = field([(0, 0.5), (1, 0.5)])
        rec = reconstruct_area(f, 0.1, 1.0)
        assert rec.step == 3
        assert f.total_area() == pytest.approx(0.6, abs=1e-15)
        # the end particle keeps its value, the interior is lifted to 0.6
        assert f.particles[0] == (0.0, 0.5)
        np.testing.assert_allclose(f.interpolant_value(np.array([1e-9, 0.5, 1 - 1e-9])), 0.6)

    def test_larger_corrections_fall_through(self):
        base = [(0, 0.2), (0.1, 0.3), (0.2, 0.5), (0.3, 0.6), (0.4, 0.7)]
        results = []
        for delta in (0.002, 0.01, 0.05):
            f = field(base)
            results.append(reconstruct_area(f, delta, 1.0))
        assert [r.k for r in results] == sorted(r.k for r in results)
        assert results[0].k < results[-1].k or results[0].step < results[-1].step

    def test_first_particle_untouched_right_side(self):
        f = field([(0.0, 0.3), (0.6, 0.3), (0.8, 0.6), (1.0, 0.1)])
        area = f.total_area()
        rec = reconstruct_area(f, -0.02, 1.0, side=RIGHT)
        assert rec.step in (1, 2)
        assert f.particles[-1] == (1.0, 0.1)
        assert f.total_area() == pytest.approx(area - 0.02, abs=1e-15)
        assert np.all(np.diff(f.x) >= 0)

    def test_locality_radius(self):
        xs = np.linspace(0, 1, 21)
        f = ParticleField(xs, 0.3 + 0.2 * xs, unit, 0.05)
        before = f.copy()
        dt = 0.1
        reconstruct_area(f, 0.004, dt)
        far = before.x > dt * unit.v_max + 1e-12
        kept = f.x > dt * unit.v_max + 1e-12
        np.testing.assert_array_equal(f.x[kept], before.x[far])
        np.testing.assert_array_equal(f.u[kept], before.u[far])

    def test_barrier_at_limit(self):
        f = field([(0.0, 0.2), (1.0, 0.2)])
        rec = reconstruct_area(f, 0.01, 10.0, limit=0.5)
        assert f.total_area() == pytest.approx(0.21, abs=1e-15)
        assert (0.5, 0.2) in f.particles
        assert f.u[-1] == 0.2 and rec.step == 3

    def test_clamped_failsafe_is_flagged(self):
        f = field([(0.0, 0.9), (0.1, 0.9)])
        rec = reconstruct_area(f, 0.5, 10.0)
        assert rec.step == 3 and rec.clamped

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(0.0, 1.0), min_size=3, max_size=10),
        st.floats(-0.05, 0.05),
        st.sampled_from([LEFT, RIGHT]),
    )
    def test_area_and_tvd(self, us, delta, side):
        xs = np.linspace(0.0, 1.0, len(us))
        f = ParticleField(xs, us, unit, 0.05)
        area = f.total_area()
        end = f.extremal(side)
        rec = reconstruct_area(f, delta, 0.5, side=side)
        assert f.extremal(side) == end
        assert np.all(np.diff(f.x) >= 0)
        if not rec.clamped:
            assert f.total_area() == pytest.approx(area + delta, abs=1e-12)
        if rec.step in (1, 2):
            assert f.u.min() >= min(us) - 1e-12 and f.u.max() <= max(us) + 1e-12


def _constant(flux, value, L=1.0, h=0.1, d=0.02):
    return sample_initial(lambda x: np.full_like(x, value), L, h, flux, d)


class TestSynchronize:
    def test_equilibrium_unchanged(self):
        a, b = _constant(unit, 0.3), _constant(unit, 0.3)
        a.advance(0.05)
        b.advance(0.05)
        total = a.total_area() + b.total_area()
        diag = SyncDiagnostics()
        rep = synchronize_node(ONE_ONE, [EdgePort(a, RIGHT, 1.0)], [EdgePort(b, LEFT, 1.0)], 0.05, diag)
        assert rep.new_states == [0.3, 0.3]
        np.testing.assert_allclose(np.concatenate((a.u, b.u)), 0.3, atol=1e-15)
        assert a.x[-1] == 1.0 and b.x[0] == 0.0
        # the flux 0.21 moved 0.0105 vehicles from a to b
        assert rep.flux_integrals[0] == pytest.approx(0.05 * 0.21, abs=1e-15)
        assert a.total_area() + b.total_area() == pytest.approx(total, abs=1e-14)

    def test_supply_limited_bottleneck(self):
        a, b = _constant(wide, 1.0), _constant(fast, 0.8)
        a.advance(0.01)
        b.advance(0.01)
        rep = synchronize_node(ONE_ONE, [EdgePort(a, RIGHT, 1.0)], [EdgePort(b, LEFT, 1.0)], 0.01)
        assert rep.new_states[0] == pytest.approx(U_JAM, abs=1e-14)
        assert a.extremal(RIGHT) == (1.0, rep.new_states[0])
        assert rep.classification[0] == AFFECTED
        assert rep.classification[1] in (INFLUENCING, NEUTRAL)

    def test_split_field_matches_single_field(self):
        prof = lambda x: 0.6 - 0.4 * x / 2
        single = sample_initial(prof, 2.0, 0.05, unit, 0.02)
        a = sample_initial(prof, 1.0, 0.05, unit, 0.02)
        b = sample_initial(lambda x: prof(x + 1.0), 1.0, 0.05, unit, 0.02)
        dt = 0.1
        for _ in range(5):
            for f in (single, a, b):
                f.advance(dt)
            synchronize_node(ONE_ONE, [EdgePort(a, RIGHT, 1.0)], [EdgePort(b, LEFT, 1.0)], dt)
        assert a.total_area() + b.total_area() == pytest.approx(single.total_area(), abs=1e-13)

    def test_wrong_end(self):
        a, b = _constant(unit, 0.3), _constant(unit, 0.3)
        with pytest.raises(InternalError):
            synchronize_node(ONE_ONE, [EdgePort(a, LEFT, 1.0)], [EdgePort(b, LEFT, 1.0)], 0.1)

    def test_ring_conservation(self):
        sim = Simulation(parse_network(ring_text()))
        total = sim.total_area()
        for _ in range(200):
            sim.step(0.02)
        assert sim.total_area() == pytest.approx(total, rel=1e-12)
        assert sim.diagnostics.failsafe == 0
