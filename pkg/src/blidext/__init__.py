"""Bounded local identity (blid) maps: construction, germ extension,
differentiability checks and blid-globalized linearization."""
from .blid import (
    BlidKind,
    BlidMap,
    CertificationReport,
    blid_metric_scale,
    blid_scale,
    blid_windowed_family,
    bump_to_blid,
    certify_blid,
    jet_cq_blid,
    pointwise_c0_blid,
)
from .bump import BumpFunction, bump_deriv, bump_eval, bump_linear_bound
from .diffcheck import check_bounded, check_chain_rule, check_compact, check_frechet
from .funcspace import (
    GridFunction,
    JetGridFunction,
    NormFamilyDescriptor,
    NormKind,
    frechet_metric,
    iterated_integral,
    norm_q,
    norm_sup,
    norm_windowed,
)
from .germ import GlobalMap, LocalMap, extend
from .linearize import (
    HyperbolicLinear,
    PerturbationSpec,
    conjugacy_iterate,
    fit_beta,
    globalize_perturbation,
    verify_condition_7_6,
)

__version__ = "0.1.0"
