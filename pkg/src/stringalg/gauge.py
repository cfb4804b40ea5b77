"""Connections, curvature and secondary classes on trivial bundles over tori.

Structure groups are block-diagonal subgroups of GL(m, ℂ); the invariant
pairing is ⟨a, b⟩ = Σ_i c_i tr(a_i b_i) over the diagonal blocks.  The
compact form is the anti-Hermitian part, with Cartan involution
s ↦ −s^†.

Gauge transformations act on connections on the left,
g·θ = g θ g⁻¹ − dg g⁻¹, so that g⁻¹·θ = g⁻¹θg + g⁻¹dg.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cohomology import solve_exact
from .forms import (
    FrameMismatchError,
    GridForm,
    PositivityError,
    TorusFrame,
    TrigForm,
    as_grid,
    wedge,
)

__all__ = [
    "PairingSpec",
    "Connection",
    "HermitianReduction",
    "IntegrabilityError",
    "BranchCutError",
    "pair",
    "bracket",
    "covariant_derivative",
    "curvature",
    "cs_difference",
    "gauge_action",
    "chern_connection",
    "exponential_path",
    "bott_chern_secondary",
    "transgression_identity_residual",
    "cartan_star",
    "random_algebra_element",
]

GL_NODES = 8


class IntegrabilityError(ValueError):
    """The (0,1)-part does not define a holomorphic structure."""


class BranchCutError(ValueError):
    """Matrix logarithm is ill-defined along the requested path."""


@dataclass(frozen=True)
class PairingSpec:
    """Block sizes and weights of the invariant form ⟨a,b⟩ = Σ c_i tr(a_i b_i)."""

    blocks: tuple = (1, 1)
    weights: tuple = (-1.0, 1.0)

    def __post_init__(self) -> None:
        if len(self.blocks) != len(self.weights):
            raise ValueError("one weight per block is required")
        if any(b < 1 for b in self.blocks):
            raise ValueError("block sizes must be positive")

    @classmethod
    def signed(cls, m0: int = 1, m1: int = 1, eps: float = 1.0) -> "PairingSpec":
        """−ε tr₀ + ε tr₁ on a two-block group."""
        return cls((m0, m1), (-eps, eps))

    @classmethod
    def single(cls, m: int, weight: float = 1.0) -> "PairingSpec":
        return cls((m,), (weight,))

    @property
    def m(self) -> int:
        return int(sum(self.blocks))

    def weights_vector(self) -> np.ndarray:
        return np.repeat(np.asarray(self.weights, dtype=float), self.blocks)

    def block_mask(self) -> np.ndarray:
        mask = np.zeros((self.m, self.m), dtype=bool)
        off = 0
        for b in self.blocks:
            mask[off : off + b, off : off + b] = True
            off += b
        return mask

    def pair_matrices(self, a: np.ndarray, b: np.ndarray) -> complex:
        return complex(np.einsum("ij,ji,i->", a, b, self.weights_vector()))

    def to_json(self) -> dict:
        return {"blocks": list(self.blocks), "weights": list(self.weights)}

    @classmethod
    def from_json(cls, doc: dict) -> "PairingSpec":
        return cls(tuple(doc["blocks"]), tuple(float(w) for w in doc["weights"]))


def pair(a, b, pairing: PairingSpec):
    """⟨a∧b⟩, a scalar form."""
    return wedge(a, b, "pairing", pairing)


def bracket(a, b):
    """Graded commutator [a∧b]."""
    return wedge(a, b, "commutator")


def covariant_derivative(theta, s):
    """d^θ s = ds + [θ∧s]."""
    return s.d() + bracket(theta, s)


def curvature(theta):
    """F_θ = dθ + ½[θ∧θ] = dθ + θ∧θ."""
    return theta.d() + wedge(theta, theta)


def cartan_star(s):
    """Cartan involution combined with conjugation of forms: s* = −s^†."""
    return -s.dagger()


def _zero_like(x):
    return x * 0


def cs_difference(theta_new, theta, pairing: PairingSpec):
    """CS(θ′) − CS(θ) − d⟨θ′∧θ⟩ = 2⟨a,F_θ⟩ + ⟨a,d^θa⟩ + ⅓⟨a,[a,a]⟩ with a = θ′ − θ."""
    a = theta_new - theta
    F = curvature(theta)
    da = covariant_derivative(theta, a)
    return pair(a, F, pairing) * 2 + pair(a, da, pairing) + pair(a, bracket(a, a), pairing) * (1.0 / 3.0)


@dataclass(frozen=True)
class Connection:
    """A 𝔤-valued one-form on the trivial bundle, with its invariant pairing."""

    theta: object
    pairing: PairingSpec = field(default_factory=PairingSpec)

    def __post_init__(self) -> None:
        if self.theta.m != self.pairing.m:
            raise FrameMismatchError("connection size does not match the pairing blocks")
        deg = self.theta.degrees()
        if deg and deg != [1]:
            raise ValueError("a connection is a one-form")

    @property
    def frame(self) -> TorusFrame:
        return self.theta.frame

    @classmethod
    def trivial(cls, frame: TorusFrame, pairing: PairingSpec | None = None) -> "Connection":
        pairing = pairing or PairingSpec()
        return cls(TrigForm.zero(frame, pairing.m), pairing)

    def curvature(self):
        return curvature(self.theta)

    def d(self, s):
        return covariant_derivative(self.theta, s)

    def pair(self, a, b):
        return pair(a, b, self.pairing)

    def shifted(self, a) -> "Connection":
        return Connection(self.theta + a, self.pairing)

    @property
    def approximate(self) -> bool:
        return bool(getattr(self.theta, "approximate", False))


def gauge_action(g: GridForm, theta, shape=None):
    """g·θ = gθg⁻¹ − dg g⁻¹ for a matrix-valued 0-form g on the grid."""
    shape = g.shape if shape is None else shape
    g = as_grid(g, shape)
    gi = g.inv()
    th = as_grid(theta, shape)
    return wedge(wedge(g, th), gi) - wedge(g.d(), gi)


@dataclass(frozen=True)
class HermitianReduction:
    """Positive Hermitian matrix field H (the metric s ↦ s^†Hs), block-diagonal."""

    H: GridForm
    pairing: PairingSpec = field(default_factory=PairingSpec)

    def __post_init__(self) -> None:
        v = self.H.blade(0)
        if self.H.degrees() not in ([], [0]):
            raise ValueError("a reduction is a 0-form")
        if np.abs(v - np.conj(np.swapaxes(v, -1, -2))).max() > 1e-10 * max(1.0, np.abs(v).max()):
            raise PositivityError("reduction is not Hermitian")
        if np.linalg.eigvalsh(v).min() <= 0:
            raise PositivityError("reduction is not positive definite")
        off = ~self.pairing.block_mask()
        if np.abs(v[..., off]).max(initial=0.0) > 1e-12:
            raise ValueError("reduction must be block-diagonal")

    @property
    def frame(self) -> TorusFrame:
        return self.H.frame

    @property
    def shape(self) -> tuple:
        return self.H.shape

    @classmethod
    def identity(cls, frame: TorusFrame, shape, pairing: PairingSpec | None = None) -> "HermitianReduction":
        pairing = pairing or PairingSpec()
        vals = np.broadcast_to(np.eye(pairing.m), tuple(shape) + (pairing.m, pairing.m))
        return cls(GridForm.matrix_field(frame, vals), pairing)

    @classmethod
    def from_log(cls, u, shape, pairing: PairingSpec | None = None) -> "HermitianReduction":
        """H = exp(u) for a Hermitian-valued 0-form u (TrigForm or GridForm)."""
        pairing = pairing or PairingSpec()
        g = as_grid(u, shape)
        return cls(g.exp(), pairing)

    def act(self, g: GridForm) -> "HermitianReduction":
        """Pushforward of the metric by a gauge transformation: H ↦ g^{-†} H g⁻¹."""
        gi = as_grid(g, self.shape).inv()
        return HermitianReduction(wedge(wedge(gi.dagger(), self.H), gi), self.pairing)


def _integrability(theta01, shape) -> float:
    g = as_grid(theta01, shape)
    return (g.delbar() + wedge(g, g)).norm()


def chern_connection(h: HermitianReduction, theta01=None) -> Connection:
    """Chern connection: (0,1)-part θ01 and (1,0)-part H⁻¹∂H − H⁻¹(θ01)^†H."""
    frame = h.frame
    m = h.pairing.m
    if theta01 is None:
        theta01 = TrigForm.zero(frame, m)
    if theta01.bidegrees() not in ([], [(0, 1)]):
        raise ValueError("θ01 must be of type (0,1)")
    if _integrability(theta01, h.shape) > 1e-9:
        raise IntegrabilityError("F^{0,2} of the holomorphic structure does not vanish")
    H = h.H
    Hi = H.inv()
    t01 = as_grid(theta01, h.shape)
    t10 = wedge(Hi, H.del_()) - wedge(wedge(Hi, t01.dagger()), H)
    theta = t10 + t01
    return Connection(theta, h.pairing)


def exponential_path(h1: HermitianReduction, h0: HermitianReduction):
    """X with H_t = H₀ exp(tX) joining H₀ to H₁ (H_t⁻¹ dH_t/dt = X for all t)."""
    if h0.shape != h1.shape:
        raise FrameMismatchError("reductions sampled on different grids")
    H0 = h0.H.blade(0)
    H1 = h1.H.blade(0)
    w, U = np.linalg.eigh(H0)
    s = (U * np.sqrt(w)[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2))
    si = (U / np.sqrt(w)[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2))
    M = si @ H1 @ si
    M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
    ev, V = np.linalg.eigh(M)
    if np.any(ev <= 0):
        raise BranchCutError("H₀^{-1/2} H₁ H₀^{-1/2} has non-positive eigenvalues")
    L = (V * np.log(ev)[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))
    X = si @ L @ s
    return GridForm.matrix_field(h0.frame, X, approximate=True)


def _path_point(h0: HermitianReduction, X: GridForm, t: float) -> HermitianReduction:
    H = wedge(h0.H, (X * t).exp())
    v = H.blade(0)
    v = 0.5 * (v + np.conj(np.swapaxes(v, -1, -2)))
    return HermitianReduction(GridForm.matrix_field(h0.frame, v, approximate=True), h0.pairing)


def bott_chern_secondary(
    h1: HermitianReduction,
    h0: HermitianReduction,
    theta01=None,
    quadrature_order: int = GL_NODES,
) -> GridForm:
    """R̃(h₁,h₀) = i ∫₀¹ ⟨H_t⁻¹Ḣ_t, F_{H_t}⟩ dt along the exponential path.

    In terms of the map h of the reduction (H = h^†h up to the Cartan
    convention) this is the familiar −2i∫⟨ḣh⁻¹, F⟩ dt.  The integral uses
    Gauss–Legendre quadrature with ``quadrature_order`` nodes.
    """
    X = exponential_path(h1, h0)
    nodes, weights = np.polynomial.legendre.leggauss(quadrature_order)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    total = None
    for t, w in zip(nodes, weights):
        ht = _path_point(h0, X, t)
        F = chern_connection(ht, theta01).curvature()
        term = pair(X, F, h0.pairing) * (1j * w)
        total = term if total is None else total + term
    out = total.types((1, 1))
    return GridForm(out.frame, out.shape, out.masks, out.values, approximate=True)


def _b20(h1, h0, theta01, quadrature_order):
    """B^{2,0} = −∫⟨a_t∧ȧ_t⟩dt with a_t = θ^{h₀} − θ^{h_t}, ȧ_t by spectral differentiation in t."""
    X = exponential_path(h1, h0)
    th0 = chern_connection(h0, theta01).theta
    nodes, weights = np.polynomial.legendre.leggauss(quadrature_order)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    total = None
    for t, w in zip(nodes, weights):
        ht = _path_point(h0, X, t)
        tht = chern_connection(ht, theta01).theta
        a = th0 - tht
        # d/dt θ^{h_t} = ∂^{θ_t}(X_t) with X_t = H_t⁻¹Ḣ_t = X in the frame of H₀exp(tX)
        adot = -(wedge(tht, X, "commutator").types((1, 0)) + X.del_())
        term = pair(a, adot, h0.pairing) * (-w)
        total = term if total is None else total + term
    return total


def transgression_identity_residual(
    h1: HermitianReduction,
    h0: HermitianReduction,
    theta01=None,
    quadrature_order: int = GL_NODES,
    *,
    explicit: bool = False,
) -> float:
    """Residual of 2i∂R̃ + CS(θ^{h₁}) − CS(θ^{h₀}) − d⟨θ^{h₁}∧θ^{h₀}⟩ = dB^{2,0}.

    By default B^{2,0} is the best mode-wise least-squares fit; with
    ``explicit=True`` it is the path integral −∫⟨a_t∧ȧ_t⟩dt.
    """
    R = bott_chern_secondary(h1, h0, theta01, quadrature_order)
    t1 = chern_connection(h1, theta01).theta
    t0 = chern_connection(h0, theta01).theta
    lhs = R.del_() * 2j + cs_difference(t1, t0, h0.pairing)
    if explicit:
        B = _b20(h1, h0, theta01, quadrature_order)
        return float((lhs - B.d()).norm())
    target = lhs.to_trig(tol=1e-14)
    if not len(target):
        return 0.0
    _, residual = solve_exact(target, "H1Omega2cl", (3,))
    return float(residual.norm())


def random_algebra_element(
    frame: TorusFrame,
    rng: np.random.Generator,
    pairing: PairingSpec,
    *,
    degree: int = 0,
    bidegree: tuple | None = None,
    n_terms: int = 2,
    max_mode: int = 1,
    compact: bool = False,
    axes: Sequence[int] | None = None,
    amplitude: float = 1.0,
) -> TrigForm:
    """Random block-diagonal 𝔤-valued form; ``compact`` keeps it in the compact real form."""
    from .forms import random_form

    f = random_form(
        frame,
        rng,
        degree if bidegree is None else None,
        bidegree,
        n_terms=n_terms,
        max_mode=max_mode,
        m=pairing.m,
        axes=axes,
        amplitude=amplitude,
    )
    mask = pairing.block_mask().astype(float)
    f = TrigForm(frame, f.masks, f.modes, f.coeffs * mask, m=pairing.m)
    if compact:
        f = (f + cartan_star(f)) * 0.5
    return f
