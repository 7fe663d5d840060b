"""Characteristic particles on a single edge.

A field is an ordered set of particles (x, u).  Between neighbours the
solution is the similarity interpolant, which for the parabolic flux is the
straight line joining them.  Particles move with their characteristic speed;
colliding pairs are merged so that the area under the interpolant is kept.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError, InternalError
from .flux import CLAMP_TOL, FluxFunction

LEFT = "left"
RIGHT = "right"


class Particle(NamedTuple):
    x: float
    u: float


@dataclass
class TrimResult:
    """Outcome of cutting a field back to (or extending it up to) an edge end.

    ``excess`` is the interpolant area that lay beyond the boundary and was
    removed; ``gap`` is the distance the extremal particle stopped short, and
    ``extension`` the area of the constant extrapolation that filled it.
    """

    value: float
    excess: float
    gap: float
    extension: float

    def signed_area(self, side: str) -> float:
        """Integral from the boundary to the old extremal particle.

        On a right end this is the integral over [L, x_N], on a left end over
        [0, x_1]; both are negative when the particle stopped short of the end
        on the right, or overshot on the left.
        """
        if side == RIGHT:
            return self.excess - self.extension
        return self.extension - self.excess


def segment_area(x0: float, u0: float, x1: float, u1: float) -> float:
    """Area under the interpolant between two neighbouring particles."""
    return (x1 - x0) * 0.5 * (u0 + u1)


class ParticleField:
    """Particles on one edge plus the area credits taken at the hull ends."""

    def __init__(self, x, u, flux: FluxFunction, d: float, pos_tol: float = 1e-12):
        self.x = np.array(x, dtype=float)
        self.u = np.array(u, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.u.shape or len(self.x) == 0:
            raise ValueError("x and u must be non-empty 1-d arrays of equal length")
        if np.any(np.diff(self.x) < 0):
            raise ValueError("particle positions must be nondecreasing")
        if np.any(self.u < -CLAMP_TOL) or np.any(self.u > flux.u_max + CLAMP_TOL):
            raise DomainError("particle value outside [0, u_max]")
        if d <= 0:
            raise ValueError("shock distance d must be positive")
        self.flux = flux
        self.d = float(d)
        self.pos_tol = pos_tol
        self.credit_left = 0.0
        self.credit_right = 0.0
        self.merges = 0

    # -- basic access -------------------------------------------------------

    def __len__(self):
        return len(self.x)

    @property
    def particles(self) -> list[Particle]:
        return [Particle(float(a), float(b)) for a, b in zip(self.x, self.u)]

    def copy(self) -> "ParticleField":
        other = ParticleField.__new__(ParticleField)
        other.x = self.x.copy()
        other.u = self.u.copy()
        other.flux = self.flux
        other.d = self.d
        other.pos_tol = self.pos_tol
        other.credit_left = self.credit_left
        other.credit_right = self.credit_right
        other.merges = self.merges
        return other

    def speeds(self) -> np.ndarray:
        f = self.flux
        return f.v_max * (1.0 - 2.0 * self.u / f.u_max)

    def take_credits(self) -> tuple[float, float]:
        """Return and reset the (left, right) area credits."""
        out = (self.credit_left, self.credit_right)
        self.credit_left = 0.0
        self.credit_right = 0.0
        return out

    # -- interpolant and areas ---------------------------------------------

    def interpolant_value(self, xq, side: str = RIGHT):
        """Evaluate the similarity interpolant.

        At a position shared by several particles the interpolant jumps;
        ``side`` picks the one-sided limit (``"left"`` or ``"right"``).
        """
        x, u = self.x, self.u
        scalar = np.ndim(xq) == 0
        q = np.atleast_1d(np.asarray(xq, dtype=float))
        if np.any(q < x[0] - self.pos_tol) or np.any(q > x[-1] + self.pos_tol):
            raise DomainError(f"position outside particle hull [{x[0]}, {x[-1]}]")
        q = np.clip(q, x[0], x[-1])
        n = len(x)
        if n == 1:
            out = np.full(q.shape, u[0])
            return float(out[0]) if scalar else out
        if side == RIGHT:
            j = np.searchsorted(x, q, side="right") - 1
            j = np.clip(j, 0, n - 1)
            hit = x[j] == q
            k = np.clip(j, 0, n - 2)
        else:
            j = np.searchsorted(x, q, side="left")
            j = np.clip(j, 0, n - 1)
            hit = x[j] == q
            k = np.clip(j - 1, 0, n - 2)
        x0, x1 = x[k], x[k + 1]
        u0, u1 = u[k], u[k + 1]
        width = x1 - x0
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(width > 0, (q - x0) / np.where(width > 0, width, 1.0), 0.0)
        out = np.where(hit, u[j], u0 + t * (u1 - u0))
        return float(out[0]) if scalar else out

    def segment_areas(self) -> np.ndarray:
        return np.diff(self.x) * 0.5 * (self.u[:-1] + self.u[1:])

    def total_area(self) -> float:
        if len(self.x) < 2:
            return 0.0
        return float(np.sum(self.segment_areas()))

    # -- characteristic motion ---------------------------------------------

    def first_collision_time(self):
        """Earliest time at which two neighbours meet, or ``None``."""
        if len(self.x) < 2:
            return None
        s = self.speeds()
        ds = s[:-1] - s[1:]
        mask = ds > 0
        if not np.any(mask):
            return None
        gap = np.maximum(np.diff(self.x)[mask], 0.0)
        return float(np.min(gap / ds[mask]))

    def merge_at(self, i: int) -> int:
        """Merge the coincident colliding pair (i, i+1).

        Neighbours further than ``d`` away get a particle inserted at distance
        ``d`` on the interpolant; a missing neighbour is replaced by a copy of
        the pair member at distance ``d``, and the area this adds is booked as
        a credit on that side.  Returns the index of the merged particle.
        """
        x, u = self.x, self.u
        n = len(x)
        if not 0 <= i < n - 1:
            raise InternalError(f"merge index {i} out of range for {n} particles")
        s = self.speeds()
        if x[i + 1] - x[i] > self.pos_tol or s[i] <= s[i + 1]:
            raise InternalError(f"pair {i} is not a coincident colliding pair")
        d = self.d
        xi, ui, xj, uj = x[i], u[i], x[i + 1], u[i + 1]

        left_new = []
        if i >= 1:
            xa, ua = x[i - 1], u[i - 1]
            if xi - xa > d + self.pos_tol:
                xa = xi - d
                ua = u[i - 1] + (ui - u[i - 1]) * (xa - x[i - 1]) / (xi - x[i - 1])
                left_new.append((xa, ua))
        else:
            xa, ua = xi - d, ui
            left_new.append((xa, ua))
            self.credit_left += d * ui

        right_new = []
        if i + 2 < n:
            xb, ub = x[i + 2], u[i + 2]
            if xb - xj > d + self.pos_tol:
                xb = xj + d
                ub = uj + (u[i + 2] - uj) * (xb - xj) / (x[i + 2] - xj)
                right_new.append((xb, ub))
        else:
            xb, ub = xj + d, uj
            right_new.append((xb, ub))
            self.credit_right += d * uj

        xm = 0.5 * (xi + xj)
        before = (
            segment_area(xa, ua, xi, ui) + segment_area(xi, ui, xj, uj) + segment_area(xj, uj, xb, ub)
        )
        span = xb - xa
        if span > 0:
            um = (2.0 * before - (xm - xa) * ua - (xb - xm) * ub) / span
        else:
            um = 0.5 * (ui + uj)

        mid = left_new + [(xm, um)] + right_new
        self.x = np.concatenate((x[:i], [p[0] for p in mid], x[i + 2 :]))
        self.u = np.concatenate((u[:i], [p[1] for p in mid], u[i + 2 :]))
        self.merges += 1
        return i + len(left_new)

    def _resolve_coincident(self):
        # merge leftmost coincident colliding pair until none remain
        while len(self.x) >= 2:
            s = self.speeds()
            cand = np.flatnonzero((np.diff(self.x) <= self.pos_tol) & (s[:-1] > s[1:]))
            if len(cand) == 0:
                return
            self.merge_at(int(cand[0]))

    def advance(self, tau: float) -> "ParticleField":
        """Evolve by ``tau`` along characteristics, merging on collision."""
        if tau < 0:
            raise ValueError("duration must be nonnegative")
        remaining = float(tau)
        while True:
            self._resolve_coincident()
            if len(self.x) < 2:
                self.x = self.x + self.speeds() * remaining
                return self
            s = self.speeds()
            ds = s[:-1] - s[1:]
            conv = ds > 0
            if not np.any(conv):
                self.x = self.x + s * remaining
                return self
            times = np.full(ds.shape, np.inf)
            times[conv] = np.maximum(np.diff(self.x)[conv], 0.0) / ds[conv]
            k = int(np.argmin(times))
            t_hit = float(times[k])
            if t_hit >= remaining:
                self.x = self.x + s * remaining
                return self
            self.x = self.x + s * t_hit
            remaining -= t_hit
            if self.x[k + 1] - self.x[k] > self.pos_tol:
                # roundoff left the colliding pair a few ulps apart
                self._merge_loose(k)

    def _merge_loose(self, i: int):
        saved = self.pos_tol
        self.pos_tol = float(self.x[i + 1] - self.x[i])
        try:
            self.merge_at(i)
        finally:
            self.pos_tol = saved

    # -- edge ends -----------------------------------------------------------

    def boundary_trim(self, L: float, side: str) -> TrimResult:
        """Cut the field back to the edge end or extend it with a constant.

        Afterwards the extremal particle sits exactly on the boundary (0 on
        the left, ``L`` on the right).
        """
        x, u = self.x, self.u
        if side == RIGHT:
            xe = x[-1]
            if xe > L:
                if x[0] > L:
                    raise InternalError("whole particle hull lies beyond the right end")
                j = int(np.searchsorted(x, L, side="right"))
                if x[j - 1] == L:
                    ub = u[j - 1]
                    tail_x, tail_u = x[j - 1 :], u[j - 1 :]
                    keep_x, keep_u = x[:j], u[:j]
                else:
                    ub = u[j - 1] + (u[j] - u[j - 1]) * (L - x[j - 1]) / (x[j] - x[j - 1])
                    tail_x = np.concatenate(([L], x[j:]))
                    tail_u = np.concatenate(([ub], u[j:]))
                    keep_x = np.concatenate((x[:j], [L]))
                    keep_u = np.concatenate((u[:j], [ub]))
                excess = float(np.sum(np.diff(tail_x) * 0.5 * (tail_u[:-1] + tail_u[1:])))
                self.x, self.u = keep_x, keep_u
                return TrimResult(float(ub), excess, 0.0, 0.0)
            if xe < L:
                gap = L - xe
                ue = u[-1]
                self.x = np.append(x, L)
                self.u = np.append(u, ue)
                return TrimResult(float(ue), 0.0, float(gap), float(gap * ue))
            return TrimResult(float(u[-1]), 0.0, 0.0, 0.0)

        if side != LEFT:
            raise ValueError(f"unknown side {side!r}")
        xe = x[0]
        if xe < 0.0:
            if x[-1] < 0.0:
                raise InternalError("whole particle hull lies beyond the left end")
            j = int(np.searchsorted(x, 0.0, side="left"))
            if x[j] == 0.0:
                ub = u[j]
                head_x, head_u = x[: j + 1], u[: j + 1]
                keep_x, keep_u = x[j:], u[j:]
            else:
                ub = u[j - 1] + (u[j] - u[j - 1]) * (0.0 - x[j - 1]) / (x[j] - x[j - 1])
                head_x = np.concatenate((x[:j], [0.0]))
                head_u = np.concatenate((u[:j], [ub]))
                keep_x = np.concatenate(([0.0], x[j:]))
                keep_u = np.concatenate(([ub], u[j:]))
            excess = float(np.sum(np.diff(head_x) * 0.5 * (head_u[:-1] + head_u[1:])))
            self.x, self.u = keep_x, keep_u
            return TrimResult(float(ub), excess, 0.0, 0.0)
        if xe > 0.0:
            ue = u[0]
            self.x = np.insert(x, 0, 0.0)
            self.u = np.insert(u, 0, ue)
            return TrimResult(float(ue), 0.0, float(xe), float(xe * ue))
        return TrimResult(float(u[0]), 0.0, 0.0, 0.0)

    def extremal(self, side: str) -> Particle:
        if side == RIGHT:
            return Particle(float(self.x[-1]), float(self.u[-1]))
        return Particle(float(self.x[0]), float(self.u[0]))

    def insert_boundary_state(self, u_hat: float, side: str) -> bool:
        """Add the node trace as a new outermost particle at the same position.

        Returns whether a particle was added; nothing happens when ``u_hat``
        equals the current extremal value.
        """
        if side not in (LEFT, RIGHT):
            raise ValueError(f"unknown side {side!r}")
        if u_hat < -CLAMP_TOL or u_hat > self.flux.u_max + CLAMP_TOL:
            raise InternalError(f"boundary state {u_hat} outside [0, u_max]")
        xe, ue = self.extremal(side)
        if abs(u_hat - ue) <= CLAMP_TOL:
            return False
        if side == RIGHT:
            self.x = np.append(self.x, xe)
            self.u = np.append(self.u, u_hat)
        else:
            self.x = np.insert(self.x, 0, xe)
            self.u = np.insert(self.u, 0, u_hat)
        return True


def sample_initial(
    profile: Callable[[np.ndarray], np.ndarray],
    L: float,
    h: float,
    flux: FluxFunction,
    d: float,
) -> ParticleField:
    """Place particles at 0, h, 2h, ... and L with values from ``profile``."""
    if not (h > 0 and L > 0):
        raise ValueError("h and L must be positive")
    n_full = int(np.floor(L / h + 1e-9))
    xs = np.arange(n_full + 1) * h
    xs = xs[xs < L - 1e-9 * h]
    xs = np.append(xs, L)
    us = np.asarray(profile(xs), dtype=float)
    if us.shape != xs.shape:
        us = np.broadcast_to(us, xs.shape).astype(float)
    if np.any(us < -CLAMP_TOL) or np.any(us > flux.u_max + CLAMP_TOL):
        raise DomainError("initial profile outside [0, u_max]")
    us = np.clip(us, 0.0, flux.u_max)
    return ParticleField(xs, us, flux, d, pos_tol=1e-12 * max(1.0, L))
