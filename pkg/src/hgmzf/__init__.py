"""Stream-1 SNR statistics of MIMO zero-forcing under Rician-Rayleigh fading.

The SNR density is evaluated with the holonomic gradient method (HGM), which
integrates the linear ODE system satisfied by the density from an anchor
where its power series is still exact.  Outage probability and ergodic
capacity follow by quadrature; a Monte Carlo simulator serves as an
independent reference.
"""

__version__ = "0.1.0"

from .hgm_engine import PdfGrid, hgm_state, pdf_hgm
from .measures import (
    CapacityResult,
    DensityModel,
    OutageSpec,
    cdf_from_pdf,
    ergodic_capacity,
    outage_probability,
    rayleigh_capacity,
    rayleigh_outage,
    rayleigh_pdf,
)
from .montecarlo import simulate
from .scenario import (
    ConfigError,
    CorrelationMatrix,
    CorrelationSpec,
    DerivedParams,
    ScenarioConfig,
    build_correlation,
    derive_params,
)
from .series_model import pdf_series
from .special_fn import hyp1f1, hyp1f1_hgm, hyp1f1_series

__all__ = [
    "__version__",
    "ScenarioConfig",
    "CorrelationSpec",
    "CorrelationMatrix",
    "DerivedParams",
    "ConfigError",
    "build_correlation",
    "derive_params",
    "hyp1f1",
    "hyp1f1_series",
    "hyp1f1_hgm",
    "pdf_series",
    "pdf_hgm",
    "hgm_state",
    "PdfGrid",
    "DensityModel",
    "OutageSpec",
    "CapacityResult",
    "cdf_from_pdf",
    "outage_probability",
    "ergodic_capacity",
    "rayleigh_pdf",
    "rayleigh_outage",
    "rayleigh_capacity",
    "simulate",
]
