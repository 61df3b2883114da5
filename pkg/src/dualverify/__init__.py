"""Sound output bounds for feedforward networks via Lagrangian duality."""
from .bounds import ActivationBounds, interval_propagate, tighten_bounds
from .conjugates import ConjugateResult, conjugate
from .dual import DualConfig, DualResult, DualVariables, convexity_probe, dual_objective, minimize_dual
from .errors import (FormatError, InvalidIntervalError, PreconditionError, ShapeError,
                     UnsupportedActivationError, VerificationError)
from .input_sets import Box, CardinalityBall, InputSet, NormBall
from .network import (ELU, IDENTITY, RELU, SIGMOID, TANH, ActivationKind, Layer, Network, forward,
                      load_network, maxpool, random_network, save_network)
from .oracles import AttackConfig, grid_oracle, pgd_attack
from .single_layer import SingleLayerProblem, fixed_point_verify, trust_region_bound
from .verifier import (OutputConstraint, Status, VerdictReport, VerificationSpec, VerifyConfig,
                       certified_error_rate, max_label_switches, spec_cardinality, spec_monotone,
                       spec_targeted_attack, verify)

__version__ = "0.1.0"
