"""Jet-based horizontal derivatives on Carnot groups with quadrature-backed
checks of weighted Hardy-type inequalities."""

from .calculus import (
    DELTA_REG,
    SingularPointError,
    apply_field,
    horizontal_divergence,
    horizontal_gradient,
    horizontal_gradient_of_norm,
    identity_residuals,
    p_sub_laplacian,
    sub_laplacian,
    weighted_p_sub_laplacian,
)
from .fields import EvaluationError, HorizontalVectorField, ScalarField, SupportDescriptor
from .groups import GroupError, StratifiedGroup, abelian, group_from_spec, heisenberg, make_group, step2
from .quadrature import (
    ConfigurationError,
    DomainSpec,
    IntegralValue,
    IntegrationError,
    QuadratureSpec,
    integrate,
    oracle_integrate,
    weighted_lp_norm,
)

__version__ = "0.1.0"
