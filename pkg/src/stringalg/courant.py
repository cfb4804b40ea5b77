"""The split complex string algebroid E₀ = T ⊕ ad P ⊕ T* and its reductions.

Sections are triples ``V + r + ξ``.  Vector fields are stored as scalar
one-forms in the complex coframe slots (slot c holds the component along
the dual frame vector), so i_V is blade arithmetic and the Lie bracket of
two fields is V(W) − W(V) componentwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import (
    TorusFrame,
    TrigForm,
    contract,
    lie_bracket_vectors,
    lie_derivative,
    vector_apply,
    wedge,
)
from .gauge import (
    Connection,
    PairingSpec,
    bracket,
    cartan_star,
    covariant_derivative,
    curvature,
    pair,
)

__all__ = [
    "CourantData",
    "CourantSection",
    "Lifting",
    "HoloData",
    "LiftingError",
    "chern_simons",
    "coordinate_vector",
    "e0_pairing",
    "e0_bracket",
    "q0_bracket",
    "axioms_residual",
    "gb_action",
    "gb_compose",
    "twisted_data",
    "lifting_check",
    "reduce_lifting",
    "chern_correspondence",
    "lifting_from_configuration",
    "anomaly_residual",
]


class LiftingError(ValueError):
    """The pair (γ, β) fails the lifting equations."""


def chern_simons(theta, pairing: PairingSpec):
    """CS(θ) = ⟨θ∧dθ⟩ + ⅓⟨θ∧[θ∧θ]⟩, so that dCS(θ) = ⟨F_θ∧F_θ⟩."""
    return pair(theta, theta.d(), pairing) + pair(theta, bracket(theta, theta), pairing) * (1.0 / 3.0)


def coordinate_vector(frame: TorusFrame, a: int, coeff=1.0) -> TrigForm:
    """The real coordinate field ∂/∂x^a (1-based) in dual-frame storage."""
    e2d = frame.tables.e_to_dx
    out = TrigForm.zero(frame)
    for c in range(frame.dim):
        if e2d[c, a - 1] != 0:
            out = out + TrigForm.term(frame, [c], None, coeff * e2d[c, a - 1])
    return out


@dataclass(frozen=True)
class CourantData:
    """(H_c, θ_c) with its invariant pairing; the bracket needs dH_c + ⟨F∧F⟩ = 0."""

    H: object
    connection: Connection

    @property
    def theta(self):
        return self.connection.theta

    @property
    def pairing(self) -> PairingSpec:
        return self.connection.pairing

    @property
    def frame(self) -> TorusFrame:
        return self.H.frame

    @classmethod
    def from_connection(cls, connection: Connection, closed=None) -> "CourantData":
        """H_c = −CS(θ_c) + closed, which satisfies the anomaly constraint exactly."""
        H = -chern_simons(connection.theta, connection.pairing)
        if closed is not None:
            H = H + closed
        return cls(H, connection)

    def anomaly(self):
        F = curvature(self.theta)
        return self.H.d() + pair(F, F, self.pairing)


def anomaly_residual(data) -> float:
    return float(data.anomaly().norm())


@dataclass(frozen=True)
class CourantSection:
    """V + r + ξ; V is a scalar one-form in dual-frame storage."""

    V: object
    r: object
    xi: object

    @classmethod
    def zero(cls, frame: TorusFrame, m: int) -> "CourantSection":
        return cls(TrigForm.zero(frame), TrigForm.zero(frame, m), TrigForm.zero(frame))

    def __add__(self, other: "CourantSection") -> "CourantSection":
        return CourantSection(self.V + other.V, self.r + other.r, self.xi + other.xi)

    def __sub__(self, other: "CourantSection") -> "CourantSection":
        return CourantSection(self.V - other.V, self.r - other.r, self.xi - other.xi)

    def __neg__(self) -> "CourantSection":
        return CourantSection(-self.V, -self.r, -self.xi)

    def __mul__(self, c) -> "CourantSection":
        return CourantSection(self.V * c, self.r * c, self.xi * c)

    __rmul__ = __mul__

    def times(self, f) -> "CourantSection":
        """Multiplication by a scalar function."""
        return CourantSection(wedge(f, self.V), wedge(f, self.r), wedge(f, self.xi))

    def norm(self) -> float:
        return max(self.V.norm(), self.r.norm(), self.xi.norm())

    def components(self):
        return self.V, self.r, self.xi

    def project_10(self) -> "CourantSection":
        """Keep the T^{1,0} and (T^{1,0})* components."""
        return CourantSection(self.V.types((1, 0)), self.r, self.xi.types((1, 0)))


def e0_pairing(s1: CourantSection, s2: CourantSection, pairing: PairingSpec):
    """½(ξ₁(V₂) + ξ₂(V₁)) + ⟨r₁, r₂⟩."""
    return (contract(s2.V, s1.xi) + contract(s1.V, s2.xi)) * 0.5 + pair(s1.r, s2.r, pairing)


def _eval2(F, V, W):
    """F(V, W) for a two-form F."""
    return contract(W, contract(V, F))


def e0_bracket(s1: CourantSection, s2: CourantSection, data: CourantData) -> CourantSection:
    """Dorfman bracket of E₀ twisted by (H_c, θ_c)."""
    P = data.pairing
    theta = data.theta
    F = curvature(theta)
    V, r, xi = s1.components()
    W, t, eta = s2.components()
    dr = covariant_derivative(theta, r)
    dt = covariant_derivative(theta, t)
    vec = lie_bracket_vectors(V, W)
    alg = -_eval2(F, V, W) + contract(V, dt) - contract(W, dr) - bracket(r, t)
    form = (
        lie_derivative(V, eta)
        - contract(W, xi.d())
        + contract(V, contract(W, data.H))
        + pair(dr, t, P) * 2
        + pair(contract(V, F), t, P) * 2
        - pair(contract(W, F), r, P) * 2
    )
    return CourantSection(vec, alg, form)


def q0_bracket(s1: CourantSection, s2: CourantSection, holo: "HoloData") -> CourantSection:
    """Bracket of the holomorphic model Q₀ on sections of T^{1,0} ⊕ ad P ⊕ (T^{1,0})*.

    Realized by the E₀ bracket of the canonical lift followed by projection.
    """
    data = CourantData(holo.H, holo.connection)
    return e0_bracket(s1.project_10(), s2.project_10(), data).project_10()


def axioms_residual(data: CourantData, u: CourantSection, v: CourantSection, w: CourantSection, f) -> dict:
    """Residuals of the Courant axioms on sample sections and a sample function f."""
    P = data.pairing
    br = lambda a, b: e0_bracket(a, b, data)  # noqa: E731
    d1 = br(u, br(v, w)) - br(br(u, v), w) - br(v, br(u, w))
    d2 = br(u, v).V - lie_bracket_vectors(u.V, v.V)
    d3 = br(u, v.times(f)) - br(u, v).times(f) - v.times(vector_apply(u.V, f))
    d4 = (
        vector_apply(u.V, e0_pairing(v, w, P))
        - e0_pairing(br(u, v), w, P)
        - e0_pairing(v, br(u, w), P)
    )
    sym = br(u, v) + br(v, u)
    d5 = CourantSection(sym.V, sym.r, sym.xi - e0_pairing(u, v, P).d() * 2)
    return {
        "D1": d1.norm(),
        "D2": d2.norm(),
        "D3": d3.norm(),
        "D4": d4.norm(),
        "D5": d5.norm(),
    }


# ---------------------------------------------------------------------------
# (γ, β) transformations and liftings


def gb_action(gamma, beta, s: CourantSection, pairing: PairingSpec) -> CourantSection:
    """(γ,β)(V + r + ξ) = V + i_Vβ + r + i_Vγ − ⟨i_Vβ,β⟩ − 2⟨β,r⟩ + ξ."""
    ivb = contract(s.V, beta)
    r = s.r + ivb
    xi = s.xi + contract(s.V, gamma) - pair(ivb, beta, pairing) - pair(beta, s.r, pairing) * 2
    return CourantSection(s.V, r, xi)


def gb_compose(g1, b1, g2, b2, pairing: PairingSpec):
    """(γ₁,β₁)∘(γ₂,β₂) = (γ₁ + γ₂ + ⟨β₁∧β₂⟩, β₁ + β₂)."""
    return g1 + g2 + pair(b1, b2, pairing), b1 + b2


def twisted_data(gamma, beta, data: CourantData) -> CourantData:
    """(θ_c + β, H′_c) with H′_c = H_c + dγ − 2⟨β,F⟩ − ⟨β,d^θβ⟩ − ⅓⟨β,[β,β]⟩."""
    P = data.pairing
    theta = data.theta
    F = curvature(theta)
    Hp = (
        data.H
        + gamma.d()
        - pair(beta, F, P) * 2
        - pair(beta, covariant_derivative(theta, beta), P)
        - pair(beta, bracket(beta, beta), P) * (1.0 / 3.0)
    )
    return CourantData(Hp, Connection(theta + beta, P))


@dataclass(frozen=True)
class Lifting:
    """(γ, β) ∈ Ω^{1,1+0,2} ⊕ Ω^{0,1}(ad P); the lift is (−γ,−β)(T^{0,1})."""

    gamma: object
    beta: object

    def __post_init__(self) -> None:
        bad = [t for t in self.gamma.bidegrees() if t not in ((1, 1), (0, 2))]
        if bad:
            raise ValueError(f"γ has components of type {bad}")
        if self.beta.bidegrees() not in ([], [(0, 1)]):
            raise ValueError("β must be of type (0,1)")


@dataclass(frozen=True)
class HoloData:
    """(H, θ): H ∈ Ω^{3,0+2,1}, θ with F^{0,2} = 0 and dH + ⟨F∧F⟩ = 0."""

    H: object
    connection: Connection

    @property
    def theta(self):
        return self.connection.theta

    @property
    def pairing(self) -> PairingSpec:
        return self.connection.pairing

    def anomaly(self):
        F = curvature(self.theta)
        return self.H.d() + pair(F, F, self.pairing)

    def residuals(self) -> dict:
        F = curvature(self.theta)
        return {
            "anomaly": float(self.anomaly().norm()),
            "F02": float(F.pq(0, 2).norm()),
            "H_type": float(self.H.types((1, 2), (0, 3)).norm()),
        }


def lifting_check(gamma, beta, data: CourantData) -> tuple:
    """Norms of ((H′_c)^{1,2+0,3}, F^{0,2} + ∂̄^θβ + ½[β,β])."""
    tw = twisted_data(gamma, beta, data)
    r1 = tw.H.types((1, 2), (0, 3)).norm()
    theta = data.theta
    r2 = (curvature(theta).pq(0, 2) + covariant_derivative(theta, beta).pq(0, 2) + bracket(beta, beta).pq(0, 2) * 0.5).norm()
    return float(r1), float(r2)


def reduce_lifting(L: Lifting, data: CourantData, tol: float = 1e-9) -> HoloData:
    """Holomorphic datum (H_c^{3,0+2,1} + ∂γ^{1,1} − 2⟨β,F^{2,0}⟩, θ_c + β)."""
    r1, r2 = lifting_check(L.gamma, L.beta, data)
    if max(r1, r2) > tol:
        raise LiftingError(f"lifting residuals {r1:.3e}, {r2:.3e}")
    P = data.pairing
    F = curvature(data.theta)
    H = data.H.types((3, 0), (2, 1)) + L.gamma.types((1, 1)).del_() - pair(L.beta, F.pq(2, 0), P) * 2
    return HoloData(H, Connection(data.theta + L.beta, P))


def chern_correspondence(gamma, beta, pairing: PairingSpec):
    """(γ, β) ↦ (ω, b, a) with a = β + β*, X = γ^{1,1} − ⟨a^{0,1}∧a^{1,0}⟩,
    ω = −Im X and b = Re X + γ^{0,2} + conj(γ^{0,2})."""
    a = beta + cartan_star(beta)
    X = gamma.types((1, 1)) - pair(a.types((0, 1)), a.types((1, 0)), pairing)
    omega = -X.imag_part()
    g02 = gamma.types((0, 2))
    b = X.real_part() + g02 + g02.conj()
    return omega, b, a


def lifting_from_configuration(omega, b, a, pairing: PairingSpec):
    """Inverse map: γ = −iω + b^{1,1+0,2} + ⟨a^{0,1}∧a^{1,0}⟩, β = a^{0,1}."""
    gamma = omega * (-1j) + b.types((1, 1), (0, 2)) + pair(a.types((0, 1)), a.types((1, 0)), pairing)
    return gamma, a.types((0, 1))


def random_section(frame: TorusFrame, rng: np.random.Generator, pairing: PairingSpec, *, max_mode: int = 1, n_terms: int = 2, axes=None) -> CourantSection:
    """Sparse random section with trig-poly components, modes restricted to `axes` if given."""
    from .forms import random_form
    from .gauge import random_algebra_element

    kw = {} if axes is None else {"axes": list(axes)}
    V = random_form(frame, rng, 1, n_terms=n_terms, max_mode=max_mode, **kw)
    r = random_algebra_element(frame, rng, pairing, n_terms=n_terms, max_mode=max_mode, **kw)
    xi = random_form(frame, rng, 1, n_terms=n_terms, max_mode=max_mode, **kw)
    return CourantSection(V, r, xi)


def random_data(
    frame: TorusFrame,
    rng: np.random.Generator,
    pairing: PairingSpec,
    *,
    max_mode: int = 1,
    n_terms: int = 2,
) -> CourantData:
    """Random connection with H_c = −CS(θ) + dB + constant, so the constraint holds."""
    from .forms import random_form
    from .gauge import random_algebra_element

    theta = random_algebra_element(frame, rng, pairing, degree=1, n_terms=n_terms, max_mode=max_mode)
    closed = random_form(frame, rng, 2, n_terms=n_terms, max_mode=max_mode).d()
    closed = closed + random_form(frame, rng, 3, n_terms=1, max_mode=0)
    return CourantData.from_connection(Connection(theta, pairing), closed)


__all__ += ["random_section", "random_data"]
