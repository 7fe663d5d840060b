import numpy as np
import pytest

from netclaw.area_sync import SyncDiagnostics
from netclaw.edge_field import LEFT, RIGHT, sample_initial
from netclaw.errors import ValidationError
from netclaw.flux import FluxFunction
from netclaw.network import (
    BoundarySpec,
    apply_external_boundary,
    max_sync_dt,
    natural_key,
    networks_equal,
    parse_network,
    serialize_network,
)
from netclaw.scenarios import bottleneck_text, diamond_text, ring_text

unit = FluxFunction(1.0, 1.0)


def constant_field(value, flux=unit, L=1.0, h=0.1, d=0.02):
    return sample_initial(lambda x: np.full_like(x, value), L, h, flux, d)


def parse_error(text):
    with pytest.raises(ValidationError) as err:
        parse_network(text)
    return err.value


class TestParse:
    def test_bottleneck(self):
        net = parse_network(bottleneck_text())
        assert len(net.edges) == 2 and len(net.nodes) == 1 and len(net.boundaries) == 2
        assert net.edges["1"].flux == FluxFunction(1.0, 2.0)
        assert net.edges["2"].flux == FluxFunction(1.5, 1.0)
        b = {(x.edge, x.end): x.u for x in net.boundaries}
        assert b == {("1", "left"): 1.0, ("2", "right"): 0.8}

    def test_diamond(self):
        net = parse_network(diamond_text())
        assert len(net.edges) == 7
        assert len({e.flux for e in net.edges.values()}) == 1
        splits = [nd for nd in net.nodes if nd.shape == (1, 2)]
        assert len(splits) == 2
        for nd in splits:
            np.testing.assert_array_equal(nd.A[:, 0], [0.5, 0.5])

    def test_comments_and_default_node_ids(self):
        text = (
            "# two roads\n"
            "edge a L=1 vmax=1 umax=1 h=0.1 d=0.05 init=constant(0.2)  # first\n"
            "edge b L=1 vmax=1 umax=1 h=0.1 d=0.05 init=samples(0.1, 0.2, 0.3)\n"
            "node in=a out=b A=1\n"
            "boundary edge=a end=left u=0.2\n"
            "boundary edge=b end=right absorbing\n"
        )
        net = parse_network(text)
        assert net.nodes[0].name == "n1"
        assert net.edges["b"].init(np.array([0.25]), 1.0)[0] == pytest.approx(0.15)
        assert net.boundaries[1].absorbing and net.boundaries[1].state == 0.0

    def test_non_stochastic_names_node(self):
        text = diamond_text().replace("node id=2 in=2 out=4,5 A=0.5;0.5", "node id=2 in=2 out=4,5 A=0.6;0.5")
        err = parse_error(text)
        assert err.code == "non_stochastic"
        assert "node 2" in err.message
        assert err.line == 9

    def test_syntax_error_position(self):
        err = parse_error("edge a L=one vmax=1 umax=1 h=0.1 d=0.05 init=constant(0.2)\n")
        assert (err.code, err.line, err.column) == ("syntax", 1, 10)

    def test_unknown_directive(self):
        err = parse_error("\n\nroad a\n")
        assert (err.code, err.line, err.column) == ("syntax", 3, 1)

    def test_unknown_edge(self):
        text = bottleneck_text().replace("out=2", "out=9")
        err = parse_error(text)
        assert err.code == "unknown_edge" and err.line == 3

    def test_unsupported_shape(self):
        text = (
            "".join(f"edge {i} L=1 vmax=1 umax=1 h=0.1 d=0.05 init=constant(0.2)\n" for i in range(1, 5))
            + "node in=1,2 out=3,4 A=0.5,0.5;0.5,0.5\n"
        )
        assert parse_error(text).code == "unsupported_shape"

    def test_bad_merging_vector(self):
        text = diamond_text().replace("node id=3 in=3,4 out=6 A=1,1", "node id=3 in=3,4 out=6 A=1,1 c=1,-2")
        assert parse_error(text).code == "bad_merging_vector"

    def test_dangling_end(self):
        text = bottleneck_text().replace("boundary edge=2 end=right u=0.8\n", "")
        err = parse_error(text)
        assert err.code == "dangling_end" and "edge 2" in err.message

    @pytest.mark.parametrize(
        "edit",
        [
            ("h=0.08 d=0.02", "h=0.08 d=0.1"),
            ("L=1 vmax=1 umax=2", "L=1 vmax=0 umax=2"),
            ("init=linear(1,-1)", "init=linear(1,2)"),
            ("end=left u=1", "end=left u=3"),
        ],
    )
    def test_invalid_values(self, edit):
        err = parse_error(bottleneck_text().replace(*edit))
        assert err.code == "invalid_value"

    def test_bad_profile(self):
        err = parse_error(bottleneck_text().replace("linear(1,-1)", "cosine(1,-1)"))
        assert err.code == "syntax" and err.line == 1

    def test_codes_are_distinct(self):
        codes = {
            parse_error("road\n").code,
            parse_error(bottleneck_text().replace("out=2", "out=9")).code,
            parse_error(diamond_text().replace("A=0.5;0.5", "A=0.6;0.5", 1)).code,
            parse_error(bottleneck_text().replace("boundary edge=2 end=right u=0.8\n", "")).code,
        }
        assert len(codes) == 4


class TestSerialize:
    @pytest.mark.parametrize("text", [bottleneck_text(), diamond_text(5), ring_text()])
    def test_round_trip(self, text):
        net = parse_network(text)
        canon = serialize_network(net)
        again = parse_network(canon)
        assert networks_equal(net, again)
        assert serialize_network(again) == canon

    def test_exact_digits(self):
        net = parse_network(bottleneck_text(h=0.1 / 3, d=1e-3 / 7))
        again = parse_network(serialize_network(net))
        assert again.edges["1"].h == 0.1 / 3
        assert again.edges["1"].d == 1e-3 / 7


class TestMaxSyncDt:
    def test_examples(self):
        single = "edge a L=1 vmax=1 umax=1 h=0.1 d=0.05 init=constant(0)\nboundary edge=a end=left u=0\nboundary edge=a end=right absorbing\n"
        assert max_sync_dt(parse_network(single)) == 0.5
        assert max_sync_dt(parse_network(bottleneck_text())) == pytest.approx(1 / 3)
        assert max_sync_dt(parse_network(diamond_text())) == 0.5

    def test_bound_keeps_waves_in_half_edge(self):
        net = parse_network(ring_text())
        dt = max_sync_dt(net)
        for e in net.edges.values():
            assert e.flux.v_max * dt <= e.length / 2 + 1e-15


class TestNaturalOrder:
    def test_numbers_sort_numerically(self):
        assert sorted(["10", "2", "1"], key=natural_key) == ["1", "2", "10"]


class TestExternalBoundary:
    def test_free_inflow_fills_fan(self):
        f = constant_field(0.2)
        f.advance(0.1)
        phi = apply_external_boundary(f, BoundarySpec("e", LEFT, 0.3), 0.1, 1.0)
        # inflow 0.3 behind 0.2: rarefaction between x = 0.04 and x = 0.06
        assert f.particles[:3] == [
            pytest.approx((0.0, 0.3), abs=1e-14),
            pytest.approx((0.04, 0.3), abs=1e-14),
            pytest.approx((0.06, 0.2), abs=1e-14),
        ]
        assert phi == pytest.approx(0.1 * unit.flow(0.3), abs=1e-15)

    def test_congested_trace_blocks_inflow(self):
        f = constant_field(0.9)
        f.advance(0.1)
        diag = SyncDiagnostics()
        phi = apply_external_boundary(f, BoundarySpec("e", LEFT, 0.3), 0.1, 1.0, diag)
        # supply 0.09 < demand 0.21
        assert phi == pytest.approx(0.1 * 0.09, abs=1e-15)
        np.testing.assert_allclose(f.u, 0.9)
        assert f.x[0] == 0.0
        assert diag.failsafe == 0

    def test_absorbing_overshoot_is_discarded(self):
        f = constant_field(0.3)
        area = f.total_area()
        f.advance(0.1)
        phi = apply_external_boundary(f, BoundarySpec("e", RIGHT), 0.1, 1.0)
        assert phi == pytest.approx(0.1 * unit.flow(0.3), abs=1e-15)
        assert f.x[-1] == 1.0
        np.testing.assert_allclose(f.u, 0.3)
        assert f.total_area() == pytest.approx(0.3 * (1.0 - f.x[0]), abs=1e-15)
        assert area > f.total_area()

    def test_congested_exit(self):
        f = constant_field(0.8)
        bc = BoundarySpec("e", RIGHT)
        # the opening sync caps the exit trace at the sonic state
        assert apply_external_boundary(f, bc, 0.0, 1.0) == 0.0
        assert f.particles[-2:] == [(1.0, 0.8), (1.0, 0.5)]
        f.advance(0.1)
        assert f.particles[-2] == pytest.approx((0.94, 0.8))
        phi = apply_external_boundary(f, bc, 0.1, 1.0)
        # the end value 0.8 fell short of the exit; the gap is rebuilt as the fan
        assert f.x[-1] == 1.0 and f.u[-1] == 0.5
        xs = np.linspace(0.94, 1.0, 7)
        np.testing.assert_allclose(f.interpolant_value(xs), 0.5 * (1 - (xs - 1.0) / 0.1), atol=1e-12)
        assert phi == pytest.approx(0.1 * 0.25, abs=1e-15)
