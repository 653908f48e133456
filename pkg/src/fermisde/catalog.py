"""Built-in control problems used by the tests, demos and CLI.

Each entry builds a ControlProblem on a fresh grid. Coefficients that
are affine in state and control also declare that structure, which
routes their solves through the sort-free path; the full rules stay the
source of truth and the declarations are cross-checked in the tests.

All running costs are of the form q||x||^2 + r||u||^2 with terminal
s||x||^2, so gradients are scalings and Hessians carry graded-scalar
operator forms. The one deliberately nonlinear entry (quadratic_drift)
exists to exercise the refusal paths: no affine declaration, a nonzero
second derivative, and a state-dependent drift derivative.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .algebra import CliffordElement
from .control import ControlProblem
from .forward import Coefficients, ControlSpace, LinearStructure
from .ito import TimeGrid
from .operators import (
    BilinearMap,
    GradedScalarOp,
    LeftMulOp,
    RightMulOp,
    ScalarOp,
    SumOp,
)

__all__ = ["CatalogEntry", "catalog", "build", "DEFAULT_VALUE_GRID"]

DEFAULT_VALUE_GRID = [-0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9]


@dataclass
class CatalogEntry:
    """Factory plus the defaults the CLI and tests pull from."""

    id: str
    summary: str
    make: Callable
    default_steps: int = 64
    default_T: float = 1.0
    ubar_weight: float = 0.0
    alt_weight: float = -0.9
    ladder_x0: float = 1.0
    ladder_ubar: float = 0.3
    p_term_active: bool = False
    second_adjoint_ok: bool = True


def _quad_cost(q, r, s):
    """Cost rules for q||x||^2 + r||u||^2 running, s||x||^2 terminal."""
    return {
        "L": lambda k, x, u: q * x.norm2_sq() + r * u.norm2_sq(),
        "Lx": lambda k, x, u: x.scale(2.0 * q),
        "Lxx": lambda k, x, u: BilinearMap(
            operator=GradedScalarOp(2.0 * q, 0.0)
        ),
        "h": lambda x: s * x.norm2_sq(),
        "hx": lambda x: x.scale(2.0 * s),
        "hxx": lambda x: BilinearMap(operator=GradedScalarOp(2.0 * s, 0.0)),
    }


def _space(n):
    return ControlSpace(
        [CliffordElement.identity(n)], list(DEFAULT_VALUE_GRID)
    )


def _start(n, scale):
    if scale == 0.0:
        return CliffordElement.zero(n)
    return CliffordElement.identity(n).scale(scale)


def _affine_coeffs(a=0.0, b=0.0, c=0.0, g=0.0, sigma_f=0.0, sigma_g=0.0,
                   lipschitz=0.0):
    """dx = (a x + b u) dt + (c x + sigma_f u) dW + dW (g x + sigma_g u)."""
    lin = LinearStructure(
        A=lambda k: GradedScalarOp(a, 0.0),
        B=lambda k: GradedScalarOp(c, 0.0),
        C=lambda k: GradedScalarOp(g, 0.0),
        uD=lambda k, u: u.scale(b),
        uF=lambda k, u: u.scale(sigma_f),
        uG=lambda k, u: u.scale(sigma_g),
    )
    return Coefficients(
        D=lambda k, x, u: x.scale(a) + u.scale(b),
        F=lambda k, x, u: x.scale(c) + u.scale(sigma_f),
        G=lambda k, x, u: x.scale(g) + u.scale(sigma_g),
        Dx=lambda k, x, u: GradedScalarOp(a, 0.0),
        Fx=lambda k, x, u: GradedScalarOp(c, 0.0),
        Gx=lambda k, x, u: GradedScalarOp(g, 0.0),
        lipschitz_bound=lipschitz,
        linear=lin,
    )


def _make_lq_scalar(n_steps=64, T=1.0, x0_scale=0.0):
    grid = TimeGrid(T=T, n_steps=n_steps)
    n = grid.n
    coeffs = _affine_coeffs(a=0.25, b=1.0, c=0.1, lipschitz=0.35)
    problem = ControlProblem(
        coeffs=coeffs,
        control_space=_space(n),
        x0=_start(n, x0_scale),
        p=2.0,
        prune=1e-5,
        **_quad_cost(q=0.5, r=1.0, s=0.5),
    )
    return problem, grid


def _make_control_in_noise(n_steps=64, T=1.0, x0_scale=0.0):
    grid = TimeGrid(T=T, n_steps=n_steps)
    n = grid.n
    coeffs = _affine_coeffs(a=0.25, b=0.5, c=0.1, sigma_f=1.0,
                            lipschitz=0.35)
    problem = ControlProblem(
        coeffs=coeffs,
        control_space=_space(n),
        x0=_start(n, x0_scale),
        p=2.0,
        prune=1e-5,
        **_quad_cost(q=0.5, r=0.05, s=0.5),
    )
    return problem, grid


def _make_odd_drift(n_steps=64, T=1.0, x0_scale=0.0):
    grid = TimeGrid(T=T, n_steps=n_steps)
    n = grid.n
    coeffs = _affine_coeffs(a=0.25, b=1.0, g=0.4, lipschitz=0.65)
    problem = ControlProblem(
        coeffs=coeffs,
        control_space=_space(n),
        x0=_start(n, x0_scale),
        p=2.0,
        prune=1e-5,
        **_quad_cost(q=0.5, r=1.0, s=0.5),
    )
    return problem, grid


def _make_driverless(n_steps=64, T=1.0, x0_scale=1.0):
    grid = TimeGrid(T=T, n_steps=n_steps)
    n = grid.n
    coeffs = _affine_coeffs(sigma_f=0.7, sigma_g=0.4)
    cost = _quad_cost(q=0.0, r=0.0, s=0.5)
    # Only the terminal cost survives; drop the zero running rules so the
    # adjoint driver is literally source-free.
    problem = ControlProblem(
        coeffs=coeffs,
        control_space=_space(n),
        x0=_start(n, x0_scale),
        p=2.0,
        prune=1e-5,
        h=cost["h"],
        hx=cost["hx"],
        hxx=cost["hxx"],
    )
    return problem, grid


def _make_quadratic_drift(n_steps=10, T=1.0, x0_scale=0.5):
    grid = TimeGrid(T=T, n_steps=n_steps)
    n = grid.n
    a, b, qd, c = 0.25, 1.0, 0.3, 0.1

    def drift(k, x, u):
        return x.scale(a) + u.scale(b) + (x * x).scale(qd)

    def drift_x(k, x, u):
        return SumOp(
            [
                ScalarOp(a),
                LeftMulOp(x.scale(qd)),
                RightMulOp(x.scale(qd)),
            ]
        )

    coeffs = Coefficients(
        D=drift,
        F=lambda k, x, u: x.scale(c),
        Dx=drift_x,
        Fx=lambda k, x, u: GradedScalarOp(c, 0.0),
        Dxx=lambda k, x, u: BilinearMap(
            fn=lambda v, w: (v * w + w * v).scale(qd)
        ),
        lipschitz_bound=1.0,
    )
    problem = ControlProblem(
        coeffs=coeffs,
        control_space=_space(n),
        x0=_start(n, x0_scale),
        p=2.0,
        prune=None,
        **_quad_cost(q=0.5, r=1.0, s=0.5),
    )
    return problem, grid


def catalog():
    """All built-in problems, keyed by id, in a stable order."""
    entries = [
        CatalogEntry(
            id="lq_scalar",
            summary="linear state, control in the drift, quadratic cost",
            make=_make_lq_scalar,
        ),
        CatalogEntry(
            id="control_in_noise",
            summary="control enters the noise coefficient; quadratic "
            "term of the optimality test is active",
            make=_make_control_in_noise,
            p_term_active=True,
        ),
        CatalogEntry(
            id="odd_drift",
            summary="noise multiplies from the left, exercising the "
            "parity signs",
            make=_make_odd_drift,
        ),
        CatalogEntry(
            id="driverless",
            summary="no drift and no running cost; adjoint identities "
            "hold exactly",
            make=_make_driverless,
            ubar_weight=0.0,
            alt_weight=0.6,
            ladder_x0=1.0,
            p_term_active=True,
        ),
        CatalogEntry(
            id="quadratic_drift",
            summary="small quadratic drift term; exercises the refusal "
            "paths of the operator-valued machinery",
            make=_make_quadratic_drift,
            default_steps=10,
            second_adjoint_ok=False,
        ),
    ]
    return {e.id: e for e in entries}


def build(problem_id, n_steps=None, T=None, x0_scale=None):
    """Instantiate a catalog problem by id with optional overrides."""
    entries = catalog()
    if problem_id not in entries:
        known = ", ".join(sorted(entries))
        raise KeyError(
            f"unknown problem id {problem_id!r}; available: {known}"
        )
    entry = entries[problem_id]
    kwargs = {}
    kwargs["n_steps"] = entry.default_steps if n_steps is None else n_steps
    kwargs["T"] = entry.default_T if T is None else T
    if x0_scale is not None:
        kwargs["x0_scale"] = x0_scale
    return entry.make(**kwargs)
