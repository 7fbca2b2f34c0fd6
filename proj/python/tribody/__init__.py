"""Random three-body Ising model on triangular-plaquette lattices."""

from ._core import (
    Disorder,
    Lattice,
    analyze,
    build_lattice,
    csv_header,
    disorder_from_json,
    exact_disorder_average,
    exact_thermal,
    find_crossing,
    nishimori_temperature,
    run_simulation,
    run_sweep,
    sample_disorder,
    scaling_collapse,
    validate_config,
)

__all__ = [
    "Disorder",
    "Lattice",
    "analyze",
    "build_lattice",
    "csv_header",
    "disorder_from_json",
    "exact_disorder_average",
    "exact_thermal",
    "find_crossing",
    "nishimori_temperature",
    "run_simulation",
    "run_sweep",
    "sample_disorder",
    "scaling_collapse",
    "validate_config",
]
