"""Dilaton functional, its Kähler data and the Calabi system on horizontal lifts.

A configuration W is a triple (ω, b, a): a positive real (1,1)-form, a real
two-form and a 𝔨-valued one-form relative to a base connection θ₀, so the
connection of W is θ_ℝ = θ₀ + a.  Tangent vectors are triples (ω̇, ḃ, ȧ) in the
same chart.  Formulas for λ_ℓ, Ω_ℓ and g_ℓ are written in the splitting
induced by W; tangents are moved there by ḃ ↦ ḃ − ⟨ȧ∧a⟩ first.

With f_ω defined by ωⁿ/n! = e^{2f_ω} μ:
    M_ℓ = ∫ e^{−ℓ f_ω} ωⁿ/n!,
    λ_ℓ(v) = (ℓ−2)/(2M_ℓ) ∫ ḃ ∧ e^{−ℓf_ω} ω^{n−1}/(n−1)!,
and Ω_ℓ = dλ_ℓ, g_ℓ = Ω_ℓ(·, 𝐉·).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import factorial
from typing import Callable

import numpy as np

from .forms import (
    DegreeError,
    GridForm,
    PositivityError,
    TorusFrame,
    TrigForm,
    as_grid,
    check_positive,
    dilaton_function,
    grid_shape_for,
    integrate,
    lambda_contraction,
    omega_power,
    wedge,
)
from .gauge import (
    Connection,
    HermitianReduction,
    PairingSpec,
    chern_connection,
    covariant_derivative,
    cs_difference,
    curvature,
    pair,
)

__all__ = [
    "LevelError",
    "MU_CHOICES",
    "Configuration",
    "TangentW",
    "holomorphic_volume",
    "volume_top",
    "to_w_splitting",
    "complex_structure_J",
    "m_ell",
    "dm_ell",
    "lambda_ell",
    "omega_ell",
    "g_ell",
    "moment",
    "infinitesimal_action",
    "calabi_terms",
    "calabi_residual",
    "hs_residual",
    "CompactFormData",
    "compact_form_data",
    "certify",
]

MU_CHOICES = ("standard", "holomorphic")


class LevelError(ValueError):
    """The level ℓ = 2 is excluded."""


def holomorphic_volume(frame: TorusFrame) -> TrigForm:
    """(−1)^{n(n−1)/2} iⁿ Ω∧Ω̄ for Ω = dz¹∧…∧dzⁿ."""
    n = frame.n
    Om = TrigForm.constant(frame)
    for j in range(1, n + 1):
        Om = wedge(Om, TrigForm.dz(frame, j))
    sign = (-1) ** (n * (n - 1) // 2)
    return wedge(Om, Om.conj()) * (sign * 1j**n)


def volume_top(frame: TorusFrame, mu: str):
    if mu == "standard":
        return None
    if mu == "holomorphic":
        return holomorphic_volume(frame)
    raise ValueError(f"volume choice must be one of {MU_CHOICES}")


def _is_real(x, tol=1e-12) -> bool:
    return (x - x.conj()).norm() <= tol * max(1.0, x.norm())


@dataclass(frozen=True)
class TangentW:
    """Tangent vector (ω̇, ḃ, ȧ)."""

    omega_dot: object
    b_dot: object
    a_dot: object

    @classmethod
    def zero(cls, frame: TorusFrame, m: int = 1) -> "TangentW":
        return cls(TrigForm.zero(frame), TrigForm.zero(frame), TrigForm.zero(frame, m))

    def __add__(self, other: "TangentW") -> "TangentW":
        return TangentW(self.omega_dot + other.omega_dot, self.b_dot + other.b_dot, self.a_dot + other.a_dot)

    def __sub__(self, other: "TangentW") -> "TangentW":
        return TangentW(self.omega_dot - other.omega_dot, self.b_dot - other.b_dot, self.a_dot - other.a_dot)

    def __neg__(self) -> "TangentW":
        return self * -1.0

    def __mul__(self, c) -> "TangentW":
        return TangentW(self.omega_dot * c, self.b_dot * c, self.a_dot * c)

    __rmul__ = __mul__

    def norm(self) -> float:
        return max(self.omega_dot.norm(), self.b_dot.norm(), self.a_dot.norm())


@dataclass(frozen=True)
class Configuration:
    """Horizontal lift W = (ω, b, a) at level ℓ over the base connection θ₀."""

    omega: object
    b: object
    a: object
    ell: float
    pairing: PairingSpec = field(default_factory=lambda: PairingSpec.single(1))
    theta0: object = None
    mu: str = "standard"
    shape: tuple | None = None

    def __post_init__(self) -> None:
        ell = float(self.ell)
        if not np.isfinite(ell) or ell == 2.0:
            raise LevelError("the dilaton functional is defined for ℓ ≠ 2")
        object.__setattr__(self, "ell", ell)
        if self.mu not in MU_CHOICES:
            raise ValueError(f"volume choice must be one of {MU_CHOICES}")
        frame = self.omega.frame
        m = self.pairing.m
        if self.theta0 is None:
            object.__setattr__(self, "theta0", TrigForm.zero(frame, m))
        bad = [t for t in self.omega.bidegrees() if t != (1, 1)]
        if bad or not _is_real(self.omega):
            raise DegreeError("ω must be a real (1,1)-form")
        if self.b.degrees() not in ([], [2]) or not _is_real(self.b):
            raise DegreeError("b must be a real two-form")
        if self.a.degrees() not in ([], [1]):
            raise DegreeError("a must be a one-form")
        if (self.a + self.a.dagger()).norm() > 1e-12 * max(1.0, self.a.norm()):
            raise ValueError("a must take values in the compact form (a† = −a)")
        if self.shape is None:
            object.__setattr__(self, "shape", grid_shape_for(self.omega, self.a, self.theta0, factor=2 * frame.n))
        else:
            object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        check_positive(as_grid(self.omega, self.shape))

    @property
    def frame(self) -> TorusFrame:
        return self.omega.frame

    @property
    def n(self) -> int:
        return self.frame.n

    @property
    def theta(self):
        """θ_ℝ = θ₀ + a."""
        return self.theta0 + self.a

    @property
    def connection(self) -> Connection:
        return Connection(self.theta, self.pairing)

    @property
    def omega_constant(self) -> bool:
        return isinstance(self.omega, TrigForm) and self.omega.is_constant()

    def moved(self, v: TangentW, eps: float = 1.0) -> "Configuration":
        """W + εv in the affine chart; the grid grows if v adds new modes."""
        omega = self.omega + v.omega_dot * eps
        a = self.a + v.a_dot * eps
        need = grid_shape_for(omega, a, self.theta0, factor=2 * self.n)
        shape = tuple(max(s, t) for s, t in zip(self.shape, need))
        return replace(self, omega=omega, b=self.b + v.b_dot * eps, a=a, shape=shape)

    def refined(self, factor: int = 2) -> "Configuration":
        return replace(self, shape=tuple(s * factor if s > 1 else 1 for s in self.shape))

    # -- grid helpers -----------------------------------------------------
    def grid_for(self, *forms) -> tuple:
        extra = grid_shape_for(self.omega, *forms, factor=self.n + 1)
        return tuple(max(a, b) for a, b in zip(self.shape, extra))

    def weight(self, shape) -> GridForm:
        """e^{−ℓ f_ω} on the grid."""
        f = dilaton_function(self.omega, volume_top(self.frame, self.mu), shape)
        return f.apply_scalar(lambda x: np.exp(-self.ell * x))

    def weighted_integral(self, top, shape=None) -> float:
        """∫ e^{−ℓf_ω} · top for a scalar top form."""
        shape = self.grid_for(top) if shape is None else shape
        val = integrate(wedge(self.weight(shape), as_grid(top, shape)))
        return float(val.real)

    def lam(self, x, shape) -> np.ndarray:
        """Λ_ω x sampled on the grid (only the (1,1) part of x contributes)."""
        lam, _ = lambda_contraction(as_grid(self.omega, shape), as_grid(x, shape), shape)
        return lam.scalar_values()


def certify(func: Callable[[Configuration], float], W: Configuration, rtol: float = 1e-8) -> tuple[float, float, bool]:
    """Evaluate ``func`` at the configuration's grid and on the doubled grid.

    Returns (value on the fine grid, relative change, converged flag).
    """
    coarse = func(W)
    fine = func(W.refined())
    change = abs(fine - coarse) / max(abs(fine), 1e-300)
    return fine, change, change < rtol


# ---------------------------------------------------------------------------
# complex structure and splittings


def to_w_splitting(W: Configuration, v: TangentW) -> TangentW:
    """Tangent coordinates in the splitting induced by W: ḃ ↦ ḃ − ⟨ȧ∧a⟩."""
    if W.a.is_zero() if isinstance(W.a, TrigForm) else False:
        return v
    return TangentW(v.omega_dot, v.b_dot - pair(v.a_dot, W.a, W.pairing), v.a_dot)


def _from_w_splitting(W: Configuration, v: TangentW) -> TangentW:
    if W.a.is_zero() if isinstance(W.a, TrigForm) else False:
        return v
    return TangentW(v.omega_dot, v.b_dot + pair(v.a_dot, W.a, W.pairing), v.a_dot)


def _J0(v: TangentW) -> TangentW:
    b = v.b_dot
    b02 = b.types((0, 2))
    return TangentW(
        -b.types((1, 1)),
        v.omega_dot + b02 * 1j - b02.conj() * 1j,
        v.a_dot.complex_J(),
    )


def complex_structure_J(W: Configuration, v: TangentW) -> TangentW:
    """𝐉(ω̇, ḃ, ȧ) = (−ḃ^{1,1}, ω̇ + iḃ^{0,2} − i conj(ḃ^{0,2}), Jȧ) in the W-splitting."""
    return _from_w_splitting(W, _J0(to_w_splitting(W, v)))


# ---------------------------------------------------------------------------
# functional and its derivatives


def m_ell(W: Configuration, shape=None) -> float:
    """M_ℓ = ∫ e^{−ℓ f_ω} ωⁿ/n!."""
    shape = W.shape if shape is None else shape
    return W.weighted_integral(omega_power(as_grid(W.omega, shape), W.n), shape)


def dm_ell(W: Configuration, v: TangentW) -> float:
    """dM_ℓ(v) = (2−ℓ)/2 ∫ Λ_ω ω̇ e^{−ℓf} ωⁿ/n!."""
    shape = W.grid_for(v.omega_dot)
    lam = W.lam(v.omega_dot, shape)
    vol = omega_power(as_grid(W.omega, shape), W.n)
    top = wedge(GridForm.scalar_field(W.frame, lam), vol)
    return 0.5 * (2.0 - W.ell) * W.weighted_integral(top, shape)


def _wedge_pow(W: Configuration, x, k: int, shape):
    """x ∧ ω^k/k! on the grid."""
    return wedge(as_grid(x, shape), omega_power(as_grid(W.omega, shape), k))


def lambda_ell(W: Configuration, v: TangentW) -> float:
    """λ_ℓ(v) = (ℓ−2)/(2M_ℓ) ∫ ḃ ∧ e^{−ℓf} ω^{n−1}/(n−1)!."""
    vb = to_w_splitting(W, v).b_dot
    shape = W.grid_for(vb)
    M = m_ell(W, shape)
    return (W.ell - 2.0) / (2.0 * M) * W.weighted_integral(_wedge_pow(W, vb.types((1, 1)), W.n - 1, shape), shape)


class _Terms:
    """Shared integrals for Ω_ℓ and g_ℓ at one configuration."""

    def __init__(self, W: Configuration, *tangents: TangentW):
        self.W = W
        forms = []
        for t in tangents:
            forms += [t.omega_dot, t.b_dot, t.a_dot]
        self.shape = W.grid_for(*forms)
        self.M = m_ell(W, self.shape)
        self.c = (W.ell - 2.0) / (2.0 * self.M)
        self.vol = omega_power(as_grid(W.omega, self.shape), W.n)

    def top_int(self, top) -> float:
        return self.W.weighted_integral(top, self.shape)

    def scalar_int(self, values) -> float:
        return self.top_int(wedge(GridForm.scalar_field(self.W.frame, values), self.vol))

    def lam(self, x) -> np.ndarray:
        return self.W.lam(x, self.shape)

    def aa(self, a1, a2) -> float:
        """∫⟨a1∧a2⟩ ∧ e^{−ℓf} ω^{n−1}/(n−1)!."""
        return self.top_int(_wedge_pow(self.W, pair(a1, a2, self.W.pairing), self.W.n - 1, self.shape))

    def wedge2(self, x, y) -> float:
        """∫ x∧y ∧ e^{−ℓf} ω^{n−2}/(n−2)! (zero when n = 1)."""
        if self.W.n < 2:
            return 0.0
        return self.top_int(_wedge_pow(self.W, wedge(x, y), self.W.n - 2, self.shape))


def omega_ell(W: Configuration, v1: TangentW, v2: TangentW) -> float:
    """Ω_ℓ(v₁, v₂) from the closed-form expression (tangents moved to the W-splitting)."""
    v1 = to_w_splitting(W, v1)
    v2 = to_w_splitting(W, v2)
    T = _Terms(W, v1, v2)
    n, ell, c = W.n, W.ell, T.c
    w1, w2 = as_grid(v1.omega_dot, T.shape), as_grid(v2.omega_dot, T.shape)
    b1, b2 = as_grid(v1.b_dot.types((1, 1)), T.shape), as_grid(v2.b_dot.types((1, 1)), T.shape)
    out = 2.0 * c * T.aa(as_grid(v1.a_dot, T.shape), as_grid(v2.a_dot, T.shape))
    out += c * (T.wedge2(w1, b2) - T.wedge2(w2, b1))
    Lw1, Lw2, Lb1, Lb2 = T.lam(w1), T.lam(w2), T.lam(b1), T.lam(b2)
    out += 0.5 * ell * c * T.scalar_int(Lb1 * Lw2 - Lb2 * Lw1)
    out += c**2 * (T.scalar_int(Lw1) * T.scalar_int(Lb2) - T.scalar_int(Lw2) * T.scalar_int(Lb1))
    return float(out)


def g_ell(W: Configuration, v1: TangentW, v2: TangentW | None = None) -> float:
    """g_ℓ(v₁, v₂) from the closed-form expression; g_ℓ(v) when ``v2`` is omitted."""
    v2 = v1 if v2 is None else v2
    v1 = to_w_splitting(W, v1)
    v2 = to_w_splitting(W, v2)
    T = _Terms(W, v1, v2)
    n, ell, c = W.n, W.ell, T.c
    out = 2.0 * c * T.aa(as_grid(v1.a_dot, T.shape), as_grid(v2.a_dot.complex_J(), T.shape))
    pairs = [
        (as_grid(v1.omega_dot, T.shape), as_grid(v2.omega_dot, T.shape)),
        (as_grid(v1.b_dot.types((1, 1)), T.shape), as_grid(v2.b_dot.types((1, 1)), T.shape)),
    ]
    for x, y in pairs:
        Lx, Ly = T.lam(x), T.lam(y)
        # ⟨x₀, y₀⟩ ωⁿ/n! = −x₀∧y₀∧ω^{n−2}/(n−2)!
        _, x0 = lambda_contraction(as_grid(W.omega, T.shape), x, T.shape)
        _, y0 = lambda_contraction(as_grid(W.omega, T.shape), y, T.shape)
        out += -c * (-T.wedge2(x0, y0))
        out += -c * (0.5 * ell - (n - 1) / n) * T.scalar_int(Lx * Ly)
        out += c**2 * T.scalar_int(Lx) * T.scalar_int(Ly)
    return float(out)


# ---------------------------------------------------------------------------
# moment map


def _b_in_w(W: Configuration, z):
    """B of a Lie element fixed relative to θ₀, rewritten for θ_ℝ = θ₀ + a."""
    a = W.a
    return z.B - pair(covariant_derivative(W.theta0, z.s), a, W.pairing) * 2 + pair(z.s, wedge(a, a), W.pairing) * 2


def _check_lie(W: Configuration, z, tol: float) -> None:
    F0 = curvature(W.theta0)
    res = (z.B - pair(z.s, F0, W.pairing) * 2).d().norm()
    if res > tol * max(1.0, z.B.norm()):
        raise ValueError(f"(s, B) is not in the Lie algebra: residual {res:.3e}")


def infinitesimal_action(W: Configuration, z) -> TangentW:
    """z·W, in chart coordinates; in the W-splitting it is (0, B_W, d^{θ_ℝ}s)."""
    frame = W.frame
    v = TangentW(TrigForm.zero(frame), _b_in_w(W, z), covariant_derivative(W.theta, z.s))
    return _from_w_splitting(W, v)


def moment(W: Configuration, z, *, check: bool = True, tol: float = 1e-8) -> float:
    """⟨μ_ℓ(W), z⟩ = −λ_ℓ(z·W) = (2−ℓ)/(2M_ℓ) ∫ B_W ∧ e^{−ℓf} ω^{n−1}/(n−1)!.

    ``z`` = (s, B) is taken relative to θ₀, so d(B − 2⟨s, F_{θ₀}⟩) = 0
    (checked unless ``check`` is false); B_W = B − 2⟨d^{θ₀}s∧a⟩ + 2⟨s, a∧a⟩.
    """
    if check:
        _check_lie(W, z, tol)
    B = _b_in_w(W, z)
    shape = W.grid_for(B)
    M = m_ell(W, shape)
    return (2.0 - W.ell) / (2.0 * M) * W.weighted_integral(_wedge_pow(W, B.types((1, 1)), W.n - 1, shape), shape)


# ---------------------------------------------------------------------------
# Calabi system


def calabi_terms(W: Configuration, shape=None) -> dict:
    """The four Calabi expressions as forms.

    ``hym`` F∧ω^{n−1}, ``f02`` F^{0,2}, ``balanced`` d(e^{−ℓf}ω^{n−1}),
    ``anomaly`` dd^cω + ⟨F∧F⟩.
    """
    n = W.n
    P = W.pairing
    F = curvature(W.theta)
    if shape is None:
        shape = W.grid_for(F, W.omega)
    if W.omega_constant and isinstance(F, TrigForm):
        wt = float(W.weight((1,) * W.frame.dim).scalar_values().real.ravel()[0])
        om1 = omega_power(W.omega, n - 1) * factorial(n - 1)
        return {
            "hym": wedge(F, om1),
            "f02": F.pq(0, 2),
            "balanced": (om1 * wt).d(),
            "anomaly": W.omega.dc().d() + pair(F, F, P),
        }
    om = as_grid(W.omega, shape)
    om1 = omega_power(om, n - 1) * factorial(n - 1)
    return {
        "hym": wedge(as_grid(F, shape), om1),
        "f02": as_grid(F, shape).pq(0, 2),
        "balanced": wedge(W.weight(shape), om1).d(),
        "anomaly": om.dc().d() + pair(as_grid(F, shape), as_grid(F, shape), P),
    }


def calabi_residual(W: Configuration, shape=None) -> dict:
    """Norms of the four Calabi expressions."""
    return {k: float(v.norm()) for k, v in calabi_terms(W, shape).items()}


def hs_residual(W: Configuration, shape=None) -> dict:
    """Calabi residuals at ℓ = 1 with μ = (−1)^{n(n−1)/2} iⁿ Ω∧Ω̄."""
    return calabi_residual(replace(W, ell=1.0, mu="holomorphic"), shape)


# ---------------------------------------------------------------------------
# compact forms


class CompactFormError(ValueError):
    """The constraint on (ω + υ, h) fails."""


@dataclass(frozen=True)
class CompactFormData:
    """Data attached to a compact form (ω + υ, h) of the holomorphic model (H, θ).

    ``real_data`` is (H_ℝ = d^cω, θ^h), ``lifting`` is (γ, β) = (−iω, 0)
    relative to it, ``configuration`` is W = (ω, 0, 0) over θ^h and
    ``isomorphism`` is (υ, θ − θ^h).
    """

    real_data: object
    lifting: object
    configuration: Configuration
    isomorphism: tuple
    residual: float


def compact_form_data(
    omega,
    upsilon,
    h: HermitianReduction,
    base,
    *,
    ell: float = 1.0,
    tol: float = 1e-8,
) -> CompactFormData:
    """Realize (ω + υ, h) by a real Courant datum, a lifting and a configuration.

    ``base`` is a holomorphic datum with ``H`` and ``connection``.  The
    constraint dυ = H + 2i∂ω + CS(θ) − CS(θ^h) − d⟨θ∧θ^h⟩ is checked on the
    grid of ``h``.
    """
    from .courant import CourantData, Lifting

    P = base.pairing
    theta = base.theta
    shape = h.shape
    if upsilon.bidegrees() not in ([], [(2, 0)]):
        raise DegreeError("υ must be of type (2,0)")
    t01 = theta.types((0, 1))
    if not isinstance(t01, TrigForm):
        t01 = t01.to_trig(tol=1e-13)
    theta_h = chern_connection(h, t01).theta
    th = as_grid(theta, shape)
    rhs = as_grid(base.H, shape) + as_grid(omega, shape).del_() * 2j + cs_difference(th, theta_h, P)
    res = float((as_grid(upsilon, shape).d() - rhs).norm())
    if res > tol:
        raise CompactFormError(f"dυ constraint violated: residual {res:.3e}")
    real = CourantData(as_grid(omega, shape).dc(), Connection(theta_h, P))
    gamma = omega * (-1j)
    frame = omega.frame
    lifting = Lifting(gamma, TrigForm.zero(frame, P.m))
    W = Configuration(omega, TrigForm.zero(frame), TrigForm.zero(frame, P.m), ell, P, theta0=theta_h.to_trig(tol=1e-12))
    return CompactFormData(real, lifting, W, (upsilon, th - theta_h), res)
