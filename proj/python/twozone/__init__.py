"""Two-zone coupled electricity price model.

Power is in MW, prices in EUR/MWh, time in years. Ranks and technology
indices are 0-based. A state vector is (log fuel costs..., demand A, demand B).
"""

import json as _json
import os as _os

from ._core import (
    NumericsError,
    ParseError,
    Price,
    Pricer,
    Scenario,
    ValidationError,
    brute_force_flow,
    margrabe,
    monte_carlo,
    rectangle_probability,
    run_cli,
    sample_terminal,
    spot,
)

__all__ = [
    "NumericsError",
    "ParseError",
    "Price",
    "Pricer",
    "Scenario",
    "ValidationError",
    "brute_force_flow",
    "load",
    "margrabe",
    "monte_carlo",
    "rectangle_probability",
    "run_cli",
    "sample_terminal",
    "spot",
]


def load(source):
    """Scenario from a file path or a dict in the JSON scenario schema."""
    if isinstance(source, dict):
        return Scenario.from_json(_json.dumps(source))
    return Scenario.from_file(_os.fspath(source))
