"""Parabolic (Greenshields) LWR flux and the flux algebra built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

# roundoff allowance at the ends of the density / flow ranges
CLAMP_TOL = 1e-12

FREE = "free"
CONGESTED = "congested"


@dataclass(frozen=True)
class FluxFunction:
    """Concave flux f(u) = v_max * u * (1 - u / u_max).

    ``v_max`` is the free-flow speed f'(0) and ``u_max`` the jam density.
    """

    v_max: float
    u_max: float

    def __post_init__(self):
        if not (0 < self.v_max < math.inf and 0 < self.u_max < math.inf):
            raise DomainError(f"v_max and u_max must be positive and finite, got {self.v_max}, {self.u_max}")

    @property
    def u_crit(self) -> float:
        return 0.5 * self.u_max

    @property
    def f_max(self) -> float:
        return 0.25 * self.v_max * self.u_max

    def _density(self, u: float) -> float:
        if u < 0.0:
            if u < -CLAMP_TOL:
                raise DomainError(f"density {u} below 0")
            return 0.0
        if u > self.u_max:
            if u > self.u_max + CLAMP_TOL:
                raise DomainError(f"density {u} above u_max={self.u_max}")
            return self.u_max
        return u

    def flow(self, u: float) -> float:
        u = self._density(u)
        return self.v_max * u * (1.0 - u / self.u_max)

    def wave_speed(self, u: float) -> float:
        u = self._density(u)
        return self.v_max * (1.0 - 2.0 * u / self.u_max)

    def inverse_wave_speed(self, w: float) -> float:
        if abs(w) > self.v_max * (1.0 + CLAMP_TOL):
            raise DomainError(f"speed {w} outside [-{self.v_max}, {self.v_max}]")
        w = min(max(w, -self.v_max), self.v_max)
        return 0.5 * self.u_max * (1.0 - w / self.v_max)

    def demand(self, u: float) -> float:
        return self.flow(min(self._density(u), self.u_crit))

    def supply(self, u: float) -> float:
        return self.flow(max(self._density(u), self.u_crit))

    def inverse_flow(self, q: float, branch: str) -> float:
        """Root of f(u) = q on the free ([0, u*]) or congested ([u*, u_max]) branch."""
        if branch not in (FREE, CONGESTED):
            raise ValueError(f"unknown branch {branch!r}")
        fmax = self.f_max
        if q < 0.0:
            if q < -CLAMP_TOL:
                raise DomainError(f"flow {q} below 0")
            q = 0.0
        if q > fmax:
            if q > fmax + CLAMP_TOL:
                raise DomainError(f"flow {q} above f*={fmax}")
            return self.u_crit
        root = math.sqrt(max(0.0, 1.0 - q / fmax))
        if branch == FREE:
            return 0.5 * self.u_max * (1.0 - root)
        return 0.5 * self.u_max * (1.0 + root)

    def chord_average(self, u: float, v: float) -> float:
        """Nonlinear average (u f'(u) - f(u))|_u^v / f'|_u^v.

        For the parabola this collapses to the arithmetic mean.
        """
        return 0.5 * (self._density(u) + self._density(v))

    def chord_speed(self, u: float, v: float) -> float:
        """Rankine-Hugoniot speed of a jump between u and v (f'(u) when equal)."""
        return self.v_max * (1.0 - (self._density(u) + self._density(v)) / self.u_max)

    def speed_times_density(self, u: float) -> float:
        """u f'(u), the transport rate of area carried by a characteristic."""
        return u * self.wave_speed(u)
