"""Network documents for the standard test problems."""

from __future__ import annotations


def _num(v: float) -> str:
    return repr(float(v))


def bottleneck_text(h: float = 0.08, d: float = 0.02) -> str:
    """Two roads of different capacity joined end to end.

    The wide road (umax=2) starts half full and decreasing, the narrow and
    faster one (umax=1, vmax=1.5) starts with a ramp up to 0.8.
    """
    return (
        f"edge 1 L=1 vmax=1 umax=2 h={_num(h)} d={_num(d)} init=linear(1,-1)\n"
        f"edge 2 L=1 vmax=1.5 umax=1 h={_num(h)} d={_num(d)} init=linear(0,0.8)\n"
        "node id=1 in=1 out=2 A=1\n"
        "boundary edge=1 end=left u=1\n"
        "boundary edge=2 end=right u=0.8\n"
    )


DIAMOND_TOPOLOGY = [
    # id, from, to
    ("1", "A", "1"),
    ("2", "1", "2"),
    ("3", "1", "3"),
    ("4", "2", "3"),
    ("5", "2", "4"),
    ("6", "3", "4"),
    ("7", "4", "B"),
]


def diamond_text(scale: float = 1.0, inflow: float = 0.4) -> str:
    """Seven identical roads: two bifurcations feeding two confluences.

    Resolution parameters are h = 0.02 s, d = 0.005 s; every edge starts
    from 0.4 + 0.4 cos(3 pi x).  Traffic enters edge 1 at density ``inflow``
    and leaves edge 7 freely.
    """
    h, d = 0.02 * scale, 0.005 * scale
    lines = [
        f"edge {eid} L=1 vmax=1 umax=1 h={_num(h)} d={_num(d)} init=cosine(0.4,0.4,3)"
        for eid, _, _ in DIAMOND_TOPOLOGY
    ]
    lines += [
        "node id=1 in=1 out=2,3 A=0.5;0.5",
        "node id=2 in=2 out=4,5 A=0.5;0.5",
        "node id=3 in=3,4 out=6 A=1,1",
        "node id=4 in=5,6 out=7 A=1,1",
        f"boundary edge=1 end=left u={_num(inflow)}",
        "boundary edge=7 end=right absorbing",
    ]
    return "\n".join(lines) + "\n"


def smooth_bottleneck_text(h: float = 0.08, d: float = 0.02) -> str:
    """Bottleneck variant whose junction stays in free flow.

    No trace ever reaches the sonic state, so the solution on edge 2 is
    smooth and exposes the order of the synchronization in dt.
    """
    return (
        f"edge 1 L=1 vmax=1 umax=2 h={_num(h)} d={_num(d)} init=linear(0.6,-0.5)\n"
        f"edge 2 L=1 vmax=1.5 umax=1 h={_num(h)} d={_num(d)} init=constant(0.1)\n"
        "node id=1 in=1 out=2 A=1\n"
        "boundary edge=1 end=left u=0.6\n"
        "boundary edge=2 end=right absorbing\n"
    )


def ring_text(h: float = 0.05, d: float = 0.0125) -> str:
    """Closed loop of two unequal roads; nothing enters or leaves."""
    return (
        f"edge a L=1 vmax=1 umax=1 h={_num(h)} d={_num(d)} init=cosine(0.5,0.3,2)\n"
        f"edge b L=1.5 vmax=1.25 umax=0.8 h={_num(h)} d={_num(d)} init=linear(0.7,-0.4)\n"
        "node id=1 in=a out=b A=1\n"
        "node id=2 in=b out=a A=1\n"
    )
