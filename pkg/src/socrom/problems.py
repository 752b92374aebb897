"""Concrete distributed control problems on the unit square.

Both problems share the desired state

    uhat(x, mu) = x1 x2 (1 - x1)(1 - x2) + mu x1^2 x2^2 (1 - x1)(1 - x2)

and homogeneous Dirichlet data. The diffusion problem uses
``kappa = kappa1 + mu (1 - x1)``; the advection-diffusion problem uses
``kappa = kappa1 + mu (1 + x1)`` plus the transport field
``delta = (1 + x1 + x1^2, 1 + x2 + x2^2)``.
"""

import numpy as np

from . import affine
from .fem import (
    AffineSaddleSystem,
    CoefficientField,
    assemble_advection,
    assemble_desired_state_loads,
    assemble_mass_matrices,
    assemble_stiffness,
    l2_gram,
    make_high_contrast_field,
    restrict_to_interior,
)

PROBLEMS = ("diffusion", "advection_diffusion")
OUTPUTS = ("full", "state", "control")


def desired_state_terms():
    bump = CoefficientField(
        "desired_state",
        lambda p: p[:, 0] * p[:, 1] * (1 - p[:, 0]) * (1 - p[:, 1]),
        "x1 x2 (1-x1)(1-x2)")
    bump2 = CoefficientField(
        "desired_state",
        lambda p: p[:, 0] ** 2 * p[:, 1] ** 2 * (1 - p[:, 0]) * (1 - p[:, 1]),
        "x1^2 x2^2 (1-x1)(1-x2)")
    return [bump, bump2], [affine.constant(1.0), affine.linear(1.0)]


def transport_field():
    return (
        CoefficientField("advection", lambda p: 1 + p[:, 0] + p[:, 0] ** 2, "1+x1+x1^2"),
        CoefficientField("advection", lambda p: 1 + p[:, 1] + p[:, 1] ** 2, "1+x2+x2^2"),
    )


def diffusion_terms(problem, kappa1):
    """Spatial diffusion fields and their scalar functions for ``problem``."""
    if problem == "diffusion":
        varying = CoefficientField("affine_in_mu", lambda p: 1 - p[:, 0], "1-x1")
    elif problem == "advection_diffusion":
        varying = CoefficientField("affine_in_mu", lambda p: 1 + p[:, 0], "1+x1")
    else:
        raise ValueError(f"unknown problem {problem!r}; expected one of {PROBLEMS}")
    return [kappa1, varying], [affine.constant(1.0), affine.linear(1.0)]


def output_terms(sys, variant="full"):
    """Scalar output rows for the three experiment variants.

    ``full``: ``<[0; 0; d], x> + mu <[0; Uhat_1; 0], x>``.
    ``state`` / ``control``: arithmetic mean of the U / F block, with a zero
    ``mu`` term kept so every variant has the same two-term structure.
    """
    ne, nh = sys.n_control, sys.n_state
    zero = np.zeros(sys.size)
    if variant == "full":
        c1 = np.concatenate([np.zeros(ne + nh), sys.d])
        c2 = np.concatenate([np.zeros(ne), sys.U_hat_terms[0], np.zeros(nh)])
    elif variant == "state":
        c1 = np.concatenate([np.zeros(ne), np.full(nh, 1.0 / nh), np.zeros(nh)])
        c2 = zero
    elif variant == "control":
        c1 = np.concatenate([np.full(ne, 1.0 / ne), np.zeros(2 * nh)])
        c2 = zero
    else:
        raise ValueError(f"unknown output variant {variant!r}; expected one of {OUTPUTS}")
    return [c1, c2.copy()], [affine.constant(1.0), affine.linear(1.0)]


def build_control_problem(mesh, problem="diffusion", beta=1e-3, kappa1=None, output="full"):
    """Assemble the Dirichlet-eliminated affine KKT system for ``problem``."""
    if kappa1 is None:
        kappa1 = make_high_contrast_field()
    M1, M2, M3 = assemble_mass_matrices(mesh)
    fields, theta_a = diffusion_terms(problem, kappa1)
    K_terms = [assemble_stiffness(mesh, f) for f in fields]
    nonsym = [False] * len(K_terms)
    if problem == "advection_diffusion":
        K_terms.append(assemble_advection(mesh, transport_field()))
        theta_a = theta_a + [affine.constant(1.0)]
        nonsym.append(True)

    uhat_fields, theta_u = desired_state_terms()
    loads = assemble_desired_state_loads(mesh, uhat_fields)

    nh = mesh.interior_vertices.size
    sys = AffineSaddleSystem(
        M1=M1,
        M2=restrict_to_interior(mesh, M2, axes=(0,)),
        M3=restrict_to_interior(mesh, M3),
        K_terms=[restrict_to_interior(mesh, K) for K in K_terms],
        theta_a=theta_a,
        U_hat_terms=[restrict_to_interior(mesh, b) for b in loads],
        theta_u=theta_u,
        d=np.zeros(nh),
        beta=float(beta),
        nonsymmetric=nonsym,
        uhat_gram=l2_gram(mesh, uhat_fields),
        mesh=mesh,
    )
    return sys.with_outputs(*output_terms(sys, output))


def lift_state(mesh, values):
    """Extend interior nodal values by the zero Dirichlet data."""
    full = np.zeros(mesh.n_vertices)
    full[mesh.interior_vertices] = values
    return full


def interpolate(mesh, f):
    """Nodal interpolant of a :class:`CoefficientField` on interior vertices."""
    return f(mesh.vertices)[mesh.interior_vertices]

