"""Dissipative state/output estimator synthesis for linear time-delay systems
with pointwise and general distributed delays.

Pipeline: decompose distributed-delay kernels against a per-interval function
basis (build_eda), assemble the synthesis matrix inequalities, solve them
(convex initialization plus an iterative inner-approximation refinement),
then validate the result by simulation, spectral analysis, and a numerical
functional certificate.
"""

from .basis import (
    BasisFn,
    BasisSpec,
    EDAData,
    build_eda,
    derive_M,
    eval_basis,
    quad_gram,
)
from .model import (
    DelaySystem,
    EstimatorGains,
    InjectionHooks,
    SupplyRate,
    example_A,
    example_B_hooks,
    preset_supply,
    validate,
)
from .spectral import (
    LinearDelayModel,
    SpectralConfig,
    SpectrumResult,
    closed_loop_sa,
    error_dynamics_model,
    spectral_abscissa,
)
from .simulate import (
    DisturbanceSpec,
    SimConfig,
    Trajectory,
    augmented_signals,
    energy_ratio,
    simulate,
)
from .driver import (
    CertificateReport,
    KFCertificate,
    SynthesisError,
    SynthesisResult,
    analyze_gains,
    certify_numeric,
    refine_algorithm1,
    synth_theorem2,
)

__version__ = "0.1.0"
