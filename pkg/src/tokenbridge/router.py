"""Post-execution confidence routing: accept locally or escalate to the edge."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .core import CalibratedDistribution


class Route(enum.Enum):
    ACCEPT_LOCAL = "AcceptLocal"
    ESCALATE = "Escalate"


@dataclass(frozen=True)
class RoutingDecision:
    route: Route
    option_index: int | None  # argmax option when accepted locally
    confidence: float
    threshold: float

    @property
    def accepted(self) -> bool:
        return self.route is Route.ACCEPT_LOCAL


def route(dist: CalibratedDistribution, tau_route: float) -> RoutingDecision:
    """Accept the local argmax iff calibrated confidence reaches the threshold.

    Confidence exactly at the threshold accepts; only falling below it
    marks the local response unreliable.
    """
    if not 0.0 < tau_route < 1.0:
        raise ValueError("tau_route must be in (0,1)")
    if dist.confidence >= tau_route:
        return RoutingDecision(Route.ACCEPT_LOCAL, dist.argmax(), dist.confidence, tau_route)
    return RoutingDecision(Route.ESCALATE, None, dist.confidence, tau_route)
