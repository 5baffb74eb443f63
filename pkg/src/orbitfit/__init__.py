"""orbitfit: manifold fitting with flow decoders and covering-number certificates.

Points are encoded into tuples of flow durations; a decoder integrates a
sequence of learned vector fields from a learned base point for those
durations.  The package trains such models by first-order ERM, computes
entropy-integral bounds on their Rademacher complexity, turns those into
excess-risk certificates, and stress-tests the underlying perturbation
envelopes by simulation.
"""

__version__ = "0.1.0"

from .fields import (BumpSpec, ComparisonFn, FieldFamily, Nonlinearity,
                     VectorField, check_exponential_stability, spectral_norm)
from .flows import (DEFAULT_FLOW_CONFIG, FlowConfig, FlowDivergenceError,
                    compose_flows, flow, flow_batch, flow_with_sensitivity)
from .encoders import Encoder, ProductEncoder, encoder_c0_distance
from .model import (Dataset, ReconstructionMap, TrainableReconstruction,
                    empirical_risk, expected_risk_mc, load_model, save_model)
from .train import EncoderSpec, FitReport, TrainConfig, derive_seed, evaluate, fit
from .estimator import FlowAutoencoder
from .bounds import (BoundReport, ClassSpec, FamilyCoveringSpec, InnerOptConfig,
                     ambient_radius_for, class_spec_for, covering_log_ball,
                     default_comparison, dudley_bound, encoder_covering_spec,
                     excess_risk_certificate, field_covering_spec,
                     rademacher_estimate, solve_component_radius,
                     stable_closed_form)
from .verify import (CheckReport, c0_distance_fields, check_initial_condition,
                     check_net_radius, check_single_flow_perturbation,
                     check_tuple_perturbation, max_affine_on_ball,
                     run_all_checks)
from .datasets import SHAPES, GeneratorSpec, generate, split

__all__ = [
    "__version__",
    # fields
    "BumpSpec", "ComparisonFn", "FieldFamily", "Nonlinearity", "VectorField",
    "check_exponential_stability", "spectral_norm",
    # flows
    "DEFAULT_FLOW_CONFIG", "FlowConfig", "FlowDivergenceError",
    "compose_flows", "flow", "flow_batch", "flow_with_sensitivity",
    # encoders
    "Encoder", "ProductEncoder", "encoder_c0_distance",
    # model
    "Dataset", "ReconstructionMap", "TrainableReconstruction",
    "empirical_risk", "expected_risk_mc", "load_model", "save_model",
    # training
    "EncoderSpec", "FitReport", "TrainConfig", "derive_seed", "evaluate",
    "fit", "FlowAutoencoder",
    # bounds
    "BoundReport", "ClassSpec", "FamilyCoveringSpec", "InnerOptConfig",
    "ambient_radius_for", "class_spec_for", "covering_log_ball",
    "default_comparison", "dudley_bound", "encoder_covering_spec",
    "excess_risk_certificate", "field_covering_spec", "rademacher_estimate",
    "solve_component_radius", "stable_closed_form",
    # verification
    "CheckReport", "c0_distance_fields", "check_initial_condition",
    "check_net_radius", "check_single_flow_perturbation",
    "check_tuple_perturbation", "max_affine_on_ball", "run_all_checks",
    # datasets
    "SHAPES", "GeneratorSpec", "generate", "split",
]
