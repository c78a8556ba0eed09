"""Numerical integrability checks for VB-algebroids.

Lie algebroids in a global frame, split VB-algebroid data, A-spheres and
their periods, integrability verdicts, and representations up to homotopy
of pair groupoids.
"""

from .algebroid import (AlgebroidMorphism, FrameAlgebroid, StructuralError, abelian_algebroid, check_axioms,
                        morphism_residual, tangent_algebroid)
from .chart import ChartDomain, DomainError
from .fields import DerivativeField, Field
from .holonomy import (ASphereFrame, ASpherePullback, NumericError, holonomy_curvature_residual,
                       pullback_sphere, sphere_morphism_residual, tangent_lift, transport)
from .modelfile import Model, ModelError, load_file, load_text
from .models import builtin_names, load_builtin, load_model
from .obstruction import (Assertion, Generator, MonodromyEvidence, UsageError, kernel_intersection_check, period,
                          period_batch, verdict)
from .poisson import PoissonBivector, cotangent_algebroid, leaf_symplectic_area, mon_variation
from .ruth import (RepUTHGroupoid, differentiate_ruth, integrate_flat_split, ruth_axiom_residuals,
                   vb_groupoid_from_ruth)
from .split import (SplitVBA, build_total_algebroid, compat_residuals, curvature, decompose_regular,
                    shift_splitting)

__version__ = "0.1.0"
