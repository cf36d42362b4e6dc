"""Spatial microsimulation: IPF reweighting, integerisation and fit metrics."""

from ._core import (
    MicrosimError,
    __version__,
    err_gt,
    fit,
    generate,
    integerise,
    pearson_r,
    sae,
    tae,
    zm,
)

METHODS = ("rounding", "threshold", "counterweight", "pp", "trs")

__all__ = [
    "METHODS",
    "MicrosimError",
    "__version__",
    "err_gt",
    "fit",
    "generate",
    "integerise",
    "pearson_r",
    "sae",
    "tae",
    "zm",
]
