"""Picard group of the holomorphic model in the (g, τ) description.

Elements are pairs of a grid-valued gauge transformation g and a complex
two-form τ subject to dτ = CS(g⁻¹θ) − CS(θ) − d⟨g⁻¹θ∧θ⟩.  The Lie algebra
consists of pairs (s, B) with d(B − 2⟨s,F_θ⟩) = 0.

Notation: g⁻¹θ = g⁻¹θg + g⁻¹dg, a^g = g⁻¹θ − θ, and g acts on ad P by
conjugation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cohomology import CohomClass, reduce_class, solve_exact
from .courant import CourantSection
from .forms import GridForm, as_grid, contract, wedge
from .gauge import (
    Connection,
    bracket,
    covariant_derivative,
    cs_difference,
    curvature,
    pair,
)

__all__ = [
    "ConstraintError",
    "PicardElement",
    "PicLieElement",
    "a_of",
    "constraint_residual",
    "pic_identity",
    "pic_compose",
    "pic_inverse",
    "pic_act",
    "pic_adjoint",
    "lie_bracket",
    "aeppli_hom",
    "dr_hom",
    "exp_path",
    "hamiltonian_member",
    "random_lie_element",
]

GRID_TOL = 1e-8
QUAD_TOL = 1e-6


class ConstraintError(ValueError):
    """A Picard or Lie-algebra element violates its defining constraint."""


def _ad(g: GridForm, x, gi: GridForm | None = None):
    """g x g⁻¹."""
    gi = g.inv() if gi is None else gi
    return wedge(wedge(g, x), gi)


def a_of(g: GridForm, theta) -> GridForm:
    """a^g = g⁻¹θg + g⁻¹dg − θ."""
    gi = g.inv()
    th = as_grid(theta, g.shape)
    return wedge(wedge(gi, th), g) + wedge(gi, g.d()) - th


@dataclass(frozen=True)
class PicardElement:
    g: GridForm
    tau: GridForm
    connection: Connection

    @property
    def shape(self) -> tuple:
        return self.g.shape

    @property
    def a(self) -> GridForm:
        return a_of(self.g, self.connection.theta)

    def residual(self) -> float:
        return constraint_residual(self)


@dataclass(frozen=True)
class PicLieElement:
    s: object
    B: object

    def __add__(self, other: "PicLieElement") -> "PicLieElement":
        return PicLieElement(self.s + other.s, self.B + other.B)

    def __sub__(self, other: "PicLieElement") -> "PicLieElement":
        return PicLieElement(self.s - other.s, self.B - other.B)

    def __mul__(self, c) -> "PicLieElement":
        return PicLieElement(self.s * c, self.B * c)

    __rmul__ = __mul__

    def closed_part(self, connection: Connection):
        """B − 2⟨s, F_θ⟩, closed for elements of the Lie algebra."""
        F = curvature(connection.theta)
        return self.B - pair(self.s, F, connection.pairing) * 2

    def residual(self, connection: Connection) -> float:
        return float(self.closed_part(connection).d().norm())

    def norm(self) -> float:
        return max(self.s.norm(), self.B.norm())


def constraint_residual(p: PicardElement) -> float:
    """‖dτ − (CS(g⁻¹θ) − CS(θ) − d⟨g⁻¹θ∧θ⟩)‖ on the grid."""
    th = as_grid(p.connection.theta, p.shape)
    rhs = cs_difference(th + p.a, th, p.connection.pairing)
    return float((as_grid(p.tau, p.shape).d() - rhs).norm())


def _checked(p: PicardElement, tol: float | None) -> PicardElement:
    if tol is not None:
        res = constraint_residual(p)
        if res > tol:
            raise ConstraintError(f"Picard constraint residual {res:.3e}")
    return p


def pic_identity(connection: Connection, shape) -> PicardElement:
    frame = connection.frame
    m = connection.pairing.m
    g = GridForm.matrix_field(frame, np.broadcast_to(np.eye(m), tuple(shape) + (m, m)))
    return PicardElement(g, GridForm.zero(frame, shape), connection)


def pic_compose(p1: PicardElement, p2: PicardElement, tol: float | None = QUAD_TOL) -> PicardElement:
    """(g,τ)(g′,τ′) = (gg′, τ + τ′ + ⟨g′⁻¹a^g ∧ a^{g′}⟩)."""
    P = p1.connection.pairing
    g2i = p2.g.inv()
    term = pair(_ad(g2i, p1.a, p2.g), p2.a, P)
    tau = as_grid(p1.tau, p1.shape) + as_grid(p2.tau, p1.shape) + term
    return _checked(PicardElement(wedge(p1.g, p2.g), tau, p1.connection), tol)


def pic_inverse(p: PicardElement) -> PicardElement:
    """(g,τ)⁻¹ = (g⁻¹, −τ); the correction ⟨Ad_g a^g ∧ a^{g⁻¹}⟩ vanishes since a^{g⁻¹} = −Ad_g a^g."""
    return PicardElement(p.g.inv(), -as_grid(p.tau, p.shape), p.connection)


def pic_act(p: PicardElement, s: CourantSection) -> CourantSection:
    """V + g(r + i_V a^g) + ξ + i_Vτ − ⟨i_V a^g, a^g⟩ − 2⟨a^g, r⟩."""
    P = p.connection.pairing
    a = p.a
    V = as_grid(s.V, p.shape)
    r = as_grid(s.r, p.shape)
    xi = as_grid(s.xi, p.shape)
    iva = contract(V, a)
    new_r = _ad(p.g, r + iva)
    new_xi = xi + contract(V, as_grid(p.tau, p.shape)) - pair(iva, a, P) - pair(a, r, P) * 2
    return CourantSection(V, new_r, new_xi)


def pic_adjoint(p: PicardElement, z: PicLieElement, tol: float | None = GRID_TOL) -> PicLieElement:
    """(gs, B − ⟨a^g∧[s,a^g]⟩ − 2⟨d^θs ∧ a^g⟩)."""
    P = p.connection.pairing
    a = p.a
    s = as_grid(z.s, p.shape)
    th = as_grid(p.connection.theta, p.shape)
    B = as_grid(z.B, p.shape) - pair(a, bracket(s, a), P) - pair(covariant_derivative(th, s), a, P) * 2
    out = PicLieElement(_ad(p.g, s), B)
    if tol is not None:
        res = out.residual(Connection(th, P))
        if res > tol * max(1.0, z.norm()):
            raise ConstraintError(f"adjoint output violates closedness: {res:.3e}")
    return out


def lie_bracket(z0: PicLieElement, z1: PicLieElement, connection: Connection) -> PicLieElement:
    """([s₀,s₁], 2⟨d^θs₀ ∧ d^θs₁⟩)."""
    th = connection.theta
    ds0 = covariant_derivative(th, z0.s)
    ds1 = covariant_derivative(th, z1.s)
    return PicLieElement(bracket(z0.s, z1.s), pair(ds0, ds1, connection.pairing) * 2)


def _to_trig(x, tol: float = 1e-12):
    return x.to_trig(tol=tol) if isinstance(x, GridForm) else x


def aeppli_hom(z: PicLieElement, connection: Connection, tol: float = 1e-8) -> CohomClass:
    """[B^{1,1} − 2⟨s, F^{1,1}⟩] in Aeppli cohomology."""
    x = _to_trig(z.closed_part(connection)).types((1, 1))
    return reduce_class(x, "Aeppli", (1, 1), tol=tol)


def dr_hom(z: PicLieElement, connection: Connection, tol: float = 1e-8) -> CohomClass:
    """[B − 2⟨s, F⟩] in de Rham cohomology."""
    x = _to_trig(z.closed_part(connection)).part(2)
    return reduce_class(x, "deRham", (2,), tol=tol)


def hamiltonian_member(z: PicLieElement, connection: Connection, tol: float = 1e-8):
    """Whether the Aeppli image vanishes, with witness (φ, ψ): ∂φ + ∂̄ψ = B^{1,1} − 2⟨s,F^{1,1}⟩."""
    x = _to_trig(z.closed_part(connection)).types((1, 1))
    (phi, psi), residual = solve_exact(x, "Aeppli", (1, 1))
    return residual.norm() <= tol, (phi, psi)


def exp_path(
    z: PicLieElement,
    connection: Connection,
    t_grid: Sequence[float],
    shape,
    quadrature_order: int = 8,
    tol: float | None = QUAD_TOL,
) -> list:
    """g_t = e^{ts}, τ_t = t(B − 2⟨s,F_θ⟩) + ∫₀ᵗ (2⟨s,F_{θ_u}⟩ + ⟨d^{θ_u}s∧a_u⟩) du."""
    P = connection.pairing
    th = as_grid(connection.theta, shape)
    s = as_grid(z.s, shape)
    closed = as_grid(z.closed_part(connection), shape)
    x, w = np.polynomial.legendre.leggauss(quadrature_order)
    out = []
    for t in t_grid:
        mu = GridForm.zero(connection.frame, shape)
        if t != 0:
            for xi, wi in zip(x, w):
                u = 0.5 * t * (xi + 1.0)
                gu = (s * u).exp()
                au = a_of(gu, th)
                thu = th + au
                integrand = pair(s, curvature(thu), P) * 2 + pair(covariant_derivative(thu, s), au, P)
                mu = mu + integrand * (0.5 * t * wi)
        g = (s * t).exp()
        tau = closed * t + mu
        out.append(_checked(PicardElement(g, tau, connection), tol))
    return out


def random_lie_element(connection: Connection, rng: np.random.Generator, *, axes=(0, 1), max_mode: int = 1, amplitude: float = 0.3, closed_terms: int = 2) -> PicLieElement:
    """(s, 2⟨s,F⟩ + dξ + c) with a small random s and constant two-form c."""
    from .forms import random_form
    from .gauge import random_algebra_element

    frame = connection.frame
    P = connection.pairing
    s = random_algebra_element(frame, rng, P, n_terms=2, max_mode=max_mode, axes=list(axes), amplitude=amplitude)
    F = curvature(connection.theta)
    xi = random_form(frame, rng, 1, n_terms=closed_terms, max_mode=max_mode, axes=list(axes), amplitude=amplitude)
    c = random_form(frame, rng, 2, n_terms=1, max_mode=0, amplitude=amplitude)
    return PicLieElement(s, pair(s, F, P) * 2 + xi.d() + c)


