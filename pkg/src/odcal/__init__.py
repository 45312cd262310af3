"""Origin-destination demand calibration from segment speed data.

A physics-informed metamodel (urban fundamental diagram plus a linear
correction) drives a simulation-optimization loop; SPSA is provided as the
benchmark, and a stochastic synthetic simulator stands in for the traffic
microsimulator.
"""

from importlib import resources

__version__ = "0.1.0"


def data_path(name: str = "demo_network.json"):
    """Path of a file shipped in ``odcal/data``."""
    return resources.files(__package__) / "data" / name
