"""Stabilizability criteria, decay constants and counterexample certificates.

A chain is stabilizable uniformly in the domain length exactly when the
access-point gaps stay bounded; equivalently, when every interval that
contains no access point is shorter than some fixed L0.  This module
checks both formulations, produces the decay constants (M, k) realized
by the ramp feedback for each boundary-condition kind, and constructs
the explicit counterexample that defeats any prescribed (M, k) once a
long enough gap exists.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import islice
from typing import Iterable

import numpy as np

from .core import ChainLayout
from .errors import (
    BadIntervalError,
    BadParamError,
    NonMonotoneError,
    NoSufficientGapError,
)

__all__ = [
    "Certificate",
    "DecayConstants",
    "GapReport",
    "default_trace_constant",
    "dirichlet_constants",
    "first_interval_amplitude",
    "gap_criterion",
    "interval_criterion",
    "l0_for_constants",
    "neumann_constants",
    "reversed_chain",
    "worst_case_certificate",
]


@dataclass(frozen=True)
class GapReport:
    """Result of scanning leading access-point gaps."""

    max_gap: float
    horizon: int
    stabilizable: bool
    l0: float | None
    bound: float | None

    def to_dict(self) -> dict:
        return {
            "max_gap": self.max_gap,
            "horizon": self.horizon,
            "stabilizable": self.stabilizable,
            "l0": self.l0,
            "bound": self.bound,
        }


def gap_criterion(
    points: ChainLayout | Iterable[float],
    horizon: int | None = None,
    bound: float | None = None,
) -> GapReport:
    """Scan gaps a_{i+1} - a_i and report the least uniform gap bound.

    Parameters
    ----------
    points : ChainLayout or iterable of float
        Layout (active gaps are scanned) or a raw increasing sequence,
        possibly a generator for an infinite chain.
    horizon : int, optional
        Number of leading gaps to examine.  Defaults to the number of
        active gaps for a layout; required information for generators is
        truncated to horizon + 1 points.
    bound : float, optional
        Candidate L0.  When given, ``stabilizable`` means max_gap <= bound.

    Returns
    -------
    GapReport
        max_gap over the scanned range; ``l0`` equals max_gap whenever
        the scan certifies stabilizability.
    """
    if isinstance(points, ChainLayout):
        pts = list(points.access_points[: points.n_l + 1])
        if horizon is not None:
            if horizon < 1:
                raise BadParamError(f"horizon must be >= 1, got {horizon}")
            pts = pts[: horizon + 1]
    else:
        if horizon is None:
            pts = list(points)
        else:
            if horizon < 1:
                raise BadParamError(f"horizon must be >= 1, got {horizon}")
            pts = list(islice(iter(points), horizon + 1))
    if len(pts) < 2:
        raise BadParamError("need at least two access points to form a gap")
    gaps = np.diff(np.asarray(pts, dtype=float))
    if np.any(gaps <= 0):
        raise NonMonotoneError("access points must be strictly increasing")
    max_gap = float(gaps.max())
    ok = True if bound is None else bool(max_gap <= bound)
    return GapReport(
        max_gap=max_gap,
        horizon=len(pts) - 1,
        stabilizable=ok,
        l0=max_gap if ok else None,
        bound=bound,
    )


def interval_criterion(
    layout: ChainLayout, interval: tuple[float, float]
) -> tuple[bool, float]:
    """Check whether an open interval avoids every access point.

    Returns (disjoint, length).  The chain is stabilizable with bound L0
    exactly when every access-point-free interval has length <= L0.
    """
    lo, hi = float(interval[0]), float(interval[1])
    surveyed = max(layout.L, layout.access_points[-1])
    if not (0.0 <= lo < hi <= surveyed):
        raise BadIntervalError(
            f"interval ({lo}, {hi}) must satisfy 0 <= lo < hi <= {surveyed} "
            "(the surveyed region)"
        )
    disjoint = not any(lo < a < hi for a in layout.access_points)
    return disjoint, hi - lo


@dataclass(frozen=True)
class DecayConstants:
    """Envelope constants: the norm stays below m * exp(-k t) * norm(x0)."""

    m: float
    k: float
    variant: str
    l0: float
    dt: float | None = None
    c0: float | None = None
    k1: float | None = None
    k2: float | None = None
    m1: float | None = None
    m2: float | None = None

    def __post_init__(self):
        if self.m < 1.0:
            raise BadParamError(f"envelope amplitude must be >= 1, got {self.m}")
        if self.k <= 0:
            raise BadParamError(f"decay rate must be positive, got {self.k}")
        if self.variant not in ("dirichlet", "neumann"):
            raise BadParamError(f"unknown variant {self.variant!r}")

    def envelope(self, t, norm0: float = 1.0) -> np.ndarray:
        return self.m * np.exp(-self.k * np.asarray(t, dtype=float)) * norm0


def dirichlet_constants(l0: float, k: float, c: float) -> DecayConstants:
    """Constants m = exp(2 k l0 / c) realized by the value-feedback ramp.

    Works for any requested rate k because the closed loop is extinct in
    finite time 2 l0 / c.
    """
    if l0 <= 0 or k <= 0 or c <= 0:
        raise BadParamError("dirichlet constants need l0, k, c > 0")
    return DecayConstants(
        m=math.exp(2.0 * k * l0 / c), k=k, variant="dirichlet", l0=l0
    )


def default_trace_constant(delta: float) -> float:
    """Constant c0 with sup|y|^2 <= c0 * (H1 norm)^2 on gap intervals.

    The embedding constant of an interval of length d can be taken as
    2 * max(1/d, 1); the smallest active gap delta gives a bound valid
    on every subdomain.
    """
    if delta <= 0:
        raise BadParamError(f"gap length must be positive, got {delta}")
    return 2.0 * max(1.0 / delta, 1.0)


def neumann_constants(
    l0: float, delta: float, c: float, c0: float | None = None
) -> DecayConstants:
    """Envelope constants for the derivative-feedback ramp, rate k = c.

    l0 bounds the gaps from above, delta is the smallest gap (the ramp
    lasts dt/2 = delta/(2c)), and c0 is the trace embedding constant,
    computed from delta when not supplied.
    """
    if l0 <= 0 or delta <= 0 or c <= 0:
        raise BadParamError("neumann constants need l0, delta, c > 0")
    if delta > l0:
        raise BadParamError(f"smallest gap {delta} exceeds gap bound {l0}")
    if c0 is None:
        c0 = default_trace_constant(delta)
    elif c0 <= 0:
        raise BadParamError(f"trace constant must be positive, got {c0}")
    dt = delta / c
    cdt = c * dt
    k1 = 2.0 * c0 * l0 * math.exp(cdt) + 2.0 * (l0 / c) * math.exp(2.0 * cdt) \
        + 1.0 + 1.0 / c
    k2 = l0 * (c0 + 1.0 / c) * math.exp(2.0 * (l0 + cdt))
    m1 = math.sqrt(k1) * math.exp(l0)
    m2 = math.sqrt(2.0 * k2 + math.exp(2.0 * (l0 + cdt)))
    return DecayConstants(
        m=max(m1, m2), k=c, variant="neumann", l0=l0,
        dt=dt, c0=c0, k1=k1, k2=k2, m1=m1, m2=m2,
    )


def first_interval_amplitude(constants: DecayConstants, a1: float) -> float:
    """Sharp first-subdomain amplitude sqrt(k1) * exp(a1) for a1 <= l0.

    The uniform ``m1`` stored on the constants uses a1 = l0.
    """
    if constants.k1 is None:
        raise BadParamError("first-interval amplitude requires neumann constants")
    if not 0 < a1 <= constants.l0:
        raise BadParamError(f"a1 must lie in (0, {constants.l0}], got {a1}")
    return math.sqrt(constants.k1) * math.exp(a1)


def l0_for_constants(m: float, k: float, c: float) -> float:
    """Gap length 3 c |ln m| / k past which (m, k) decay is impossible."""
    if m < 1.0 or k <= 0 or c <= 0:
        raise BadParamError("need m >= 1, k > 0, c > 0")
    return 3.0 * c * abs(math.log(m)) / k


@dataclass(frozen=True)
class Certificate:
    """Counterexample data defeating a claimed (m, k) decay envelope.

    Transport moves the initial value, supported on ``support`` just
    right of an access point, freely across the gap: no control reaches
    it before ``t_star``, so the norm is still the initial norm while
    the claimed envelope has dropped below it.
    """

    l0: float
    m: float
    k: float
    c: float
    gap: tuple[float, float]
    t_star: float
    support: tuple[float, float]
    eps: float
    decay_factor: float

    @property
    def translated_support(self) -> tuple[float, float]:
        lo, hi = self.support
        shift = self.c * self.t_star
        return (lo + shift, hi + shift)

    def to_dict(self) -> dict:
        return {
            "l0": self.l0,
            "m": self.m,
            "k": self.k,
            "c": self.c,
            "gap": list(self.gap),
            "t_star": self.t_star,
            "support": list(self.support),
            "eps": self.eps,
            "decay_factor": self.decay_factor,
        }


def worst_case_certificate(
    l0: float, eps: float, layout: ChainLayout, m: float, k: float
) -> Certificate:
    """Locate a gap longer than l0 + eps and build the counterexample.

    The returned data places initial mass on (a_j, a_j + eps); at
    t_star = l0 / (2c) the mass, translated by c * t_star, still sits
    inside the gap and outside the region any control can have reached.
    """
    if eps <= 0:
        raise BadParamError(f"support width must be positive, got {eps}")
    if m < 1.0 or k <= 0:
        raise BadParamError("certificate needs m >= 1 and k > 0")
    if l0 <= 0:
        raise BadParamError(f"gap bound must be positive, got {l0}")
    t_star = l0 / (2.0 * layout.c)
    decay_factor = m * math.exp(-k * t_star)
    if decay_factor >= 1.0:
        raise BadParamError(
            f"m exp(-k t_star) = {decay_factor:.6g} >= 1 certifies nothing; "
            "increase l0 (l0_for_constants gives a sufficient value)"
        )
    pts = layout.access_points
    for j in range(layout.n_l):
        lo, hi = pts[j], min(pts[j + 1], layout.L)
        if hi - lo > l0 + eps:
            return Certificate(
                l0=l0, m=m, k=k, c=layout.c,
                gap=(lo, hi), t_star=t_star,
                support=(lo, lo + eps), eps=eps,
                decay_factor=decay_factor,
            )
    raise NoSufficientGapError(
        f"layout has no access-point-free interval longer than {l0 + eps}"
    )


def reversed_chain(layout: ChainLayout) -> ChainLayout:
    """Mirror the active chain: access points L - a_i, sorted increasing.

    Observation at the mirrored points is the flow reversal of control
    at the original ones; the gap structure is preserved, so the gap
    criterion evaluates identically whenever a_{N_L} = L.
    """
    pts = layout.access_points[: layout.n_l + 1]
    mirrored = sorted(layout.L - a for a in pts)
    if mirrored[0] < 0.0:
        mirrored[0] = 0.0
    return ChainLayout(tuple(mirrored), layout.L, layout.c)
