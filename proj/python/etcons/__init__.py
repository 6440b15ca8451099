"""Event-triggered consensus of linear agents over directed graphs."""

import json

from . import _etcons
from ._etcons import (
    BoundDegeneracy,
    InfeasibleError,
    ParseError,
    Run,
    Scenario,
    SimulationError,
    expm,
    has_spanning_tree,
    lambda2,
    laplacian,
    simulate,
)

__all__ = [
    "BoundDegeneracy",
    "InfeasibleError",
    "ParseError",
    "Run",
    "Scenario",
    "SimulationError",
    "bounds",
    "design",
    "expm",
    "has_spanning_tree",
    "lambda2",
    "laplacian",
    "load",
    "simulate",
    "verify",
]


def load(path):
    return Scenario.from_file(str(path))


def design(scenario):
    """Controller design artifact as a dict."""
    return json.loads(_etcons.design_json(scenario))


def bounds(scenario):
    """Inter-event and delay bounds as a dict."""
    return json.loads(_etcons.bounds_json(scenario))


def verify(run):
    """Verification report for a finished run as a dict."""
    return json.loads(run.verify_json())
