"""Linearized Calabi operators, gauge fixing and finite-dimensional moduli metrics.

Operator assembly works on flat backgrounds: ω constant, θ_ℝ constant with
vanishing curvature.  Then e^{−ℓf_ω} is a number and every operator preserves
the Fourier mode, so each mode k carries small dense matrices.

Tangent vectors are (ω̇, ḃ, ȧ) in the splitting of the background; gauge
parameters are y = (u, ξ) with u a 𝔤-valued function and ξ a one-form, and

    𝐏̂(u, ξ) = (0, dξ + 2⟨u, F⟩, d^h u),
    𝓛 = 𝐏̂*𝐏̂  on  Ω⁰(ad P) × Im d*.

The ring half of the module evaluates the cone potential, the cone metric,
the fibre metric and the conjectured inequality from intersection numbers of
a threefold.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import permutations, product
from math import factorial
from pathlib import Path
from typing import Sequence

import numpy as np

from .cohomology import CohomClass, duality_pairing, reduce_class
from .dilaton import Configuration, TangentW, _from_w_splitting, calabi_residual, m_ell, to_w_splitting
from .forms import (
    DegreeError,
    TorusFrame,
    TrigForm,
    basis_masks,
    lambda_contraction,
    omega_power,
    top_coefficient,
    wedge,
)
from .gauge import Connection, covariant_derivative, curvature, pair

__all__ = [
    "BackgroundError",
    "SingularModeError",
    "ConeError",
    "NonHolomorphicError",
    "SVD_RTOL",
    "linearized_L",
    "p_hat",
    "p_hat_adjoint",
    "pairing_ell",
    "hodge_star",
    "ModeOperator",
    "mode_operator",
    "KernelReport",
    "condition_a",
    "GaugeFixResult",
    "gauge_fix",
    "gauge_residuals",
    "fibre_residuals",
    "VariationClasses",
    "variation_classes",
    "fibre_metric",
    "IntersectionRing",
    "ComplexifiedClass",
    "lefschetz_primitive",
    "potential_K",
    "cone_metric",
    "cone_metric_matrix",
    "potential_hessian_fd",
    "ring_fibre_inputs",
    "conjecture_margin",
    "futaki",
    "deformation_dimension",
    "ell_window",
    "check_ell_window",
]

SVD_RTOL = 1e-9


class BackgroundError(ValueError):
    """The background is not flat with constant Kähler form, or not a solution."""


class SingularModeError(np.linalg.LinAlgError):
    """𝓛 has a kernel at a nonconstant mode."""

    def __init__(self, mode):
        super().__init__(f"gauge-fixing operator is singular at mode {tuple(int(x) for x in mode)}")
        self.mode = tuple(int(x) for x in mode)


class ConeError(ValueError):
    """A class is outside the region where the cubic form is positive."""


class NonHolomorphicError(ValueError):
    """∂̄^h s does not vanish."""


# ---------------------------------------------------------------------------
# flat backgrounds


class _Flat:
    """Constant data of a flat background used by every operator."""

    def __init__(self, W: Configuration, *, require_flat: bool = True, tol: float = 1e-12):
        if not W.omega_constant:
            raise BackgroundError("operator assembly needs a constant Kähler form")
        theta = W.theta
        if not isinstance(theta, TrigForm):
            raise BackgroundError("operator assembly needs a Fourier-polynomial connection")
        F = curvature(theta)
        if require_flat and (not theta.is_constant() or F.norm() > tol):
            raise BackgroundError("operator assembly needs a constant flat connection")
        self.W = W
        self.frame = W.frame
        self.n = W.n
        self.ell = W.ell
        self.P = W.pairing
        self.m = W.pairing.m
        self.omega = W.omega
        self.theta = theta
        self.F = F
        self.e = float(W.weight((1,) * self.frame.dim).scalar_values().real.ravel()[0])
        self.M = m_ell(W, (1,) * self.frame.dim)
        vol = omega_power(self.omega, self.n)
        self.volc = complex(top_coefficient(vol).coeffs[0, 0, 0])
        self._odd = None

    def pw(self, k: int):
        """ω^k (no factorial); zero form for k < 0."""
        if k < 0:
            return None
        return omega_power(self.omega, k) * factorial(k)

    def lam(self, x):
        if x.m != 1:
            raise DegreeError("Λ is applied to scalar forms here")
        lam, _ = lambda_contraction(self.omega, x)
        return lam

    def star_top(self, x):
        """Ratio of a top form to ωⁿ/n!."""
        return top_coefficient(x) * (1.0 / self.volc)

    def star_odd(self, psi):
        """Hodge star on (2n−1)-forms: *Ψ = −η where Jη∧ω^{n−1}/(n−1)! = Ψ."""
        if self._odd is None:
            src = basis_masks(self.frame, 1)
            dst = basis_masks(self.frame, 2 * self.n - 1)
            om = omega_power(self.omega, self.n - 1)
            A = np.zeros((len(dst), len(src)), dtype=complex)
            for j, mk in enumerate(src):
                img = wedge(TrigForm(self.frame, [mk], np.zeros((1, self.frame.dim)), [[[1.0]]]).complex_J(), om)
                A[:, j] = _coords(img, np.zeros(self.frame.dim, dtype=np.int64), dst)[:, 0, 0]
            self._odd = (src, dst, np.linalg.inv(A))
        src, dst, Ainv = self._odd
        return -_blade_map(psi, dst, src, Ainv)


def _coords(x: TrigForm, k, masks) -> np.ndarray:
    """Coefficients of x at mode k on the given blades, shape (len(masks), m, m)."""
    k = np.asarray(k, dtype=np.int64)
    out = np.zeros((len(masks), x.m, x.m), dtype=complex)
    if not len(x):
        return out
    at = np.all(x.modes == k, axis=1)
    index = {int(mk): i for i, mk in enumerate(masks)}
    for mk, c in zip(x.masks[at], x.coeffs[at]):
        i = index.get(int(mk))
        if i is None:
            raise DegreeError(f"blade {int(mk)} outside the expected set")
        out[i] += c
    return out


def _modes_of(*forms) -> list:
    seen = {}
    for f in forms:
        for k in f.modes:
            seen[tuple(int(x) for x in k)] = None
    return [np.array(k, dtype=np.int64) for k in sorted(seen)]


def _blade_map(x: TrigForm, src, dst, A: np.ndarray) -> TrigForm:
    """Apply a constant linear map on blade coefficients, mode by mode."""
    frame = x.frame
    masks, modes, coeffs = [], [], []
    for k in _modes_of(x):
        c = _coords(x, k, src)
        y = np.einsum("ij,jab->iab", A, c)
        for i, mk in enumerate(dst):
            if np.any(y[i]):
                masks.append(int(mk))
                modes.append(k)
                coeffs.append(y[i])
    if not masks:
        return TrigForm.zero(frame, x.m)
    return TrigForm(frame, masks, np.array(modes), np.array(coeffs), m=x.m)


def _zero(frame, m=1):
    return TrigForm.zero(frame, m)


# ---------------------------------------------------------------------------
# operators


def linearized_L(W: Configuration, v: TangentW, *, check: bool = True, tol: float = 1e-8) -> dict:
    """The four linear expressions on a tangent vector at a Calabi solution.

    ``hym``       d^h ȧ∧ω^{n−1} + (n−1) F∧ω̇∧ω^{n−2}
    ``balanced``  d(e^{−ℓf}((n−1) ω̇∧ω^{n−2} − (ℓ/2)(Λω̇) ω^{n−1}))
    ``f02``       ∂̄^h ȧ^{0,1}
    ``anomaly``   d^c ω̇ + 2⟨ȧ, F⟩ − dḃ
    """
    if check:
        res = calabi_residual(W)
        if max(res.values()) > tol:
            raise BackgroundError(f"background does not solve the Calabi system: {res}")
    B = _Flat(W, require_flat=False)
    v = to_w_splitting(W, v)
    return _L(B, v)


def _L(B: _Flat, v: TangentW) -> dict:
    n, P = B.n, B.P
    wd, bd, ad = v.omega_dot, v.b_dot, v.a_dot
    hym = wedge(covariant_derivative(B.theta, ad), B.pw(n - 1))
    if n >= 2:
        hym = hym + wedge(B.F, wedge(wd, B.pw(n - 2))) * (n - 1)
    inner = wedge(B.lam(wd), B.pw(n - 1)) * (-0.5 * B.ell)
    if n >= 2:
        inner = inner + wedge(wd, B.pw(n - 2)) * (n - 1)
    balanced = (inner * B.e).d()
    f02 = covariant_derivative(B.theta, ad.types((0, 1))).pq(0, 2)
    anomaly = wd.dc() + pair(ad, B.F, P) * 2 - bd.d()
    return {"hym": hym, "balanced": balanced, "f02": f02, "anomaly": anomaly}


def p_hat(W: Configuration, u, xi) -> TangentW:
    """𝐏̂(u, ξ) = (0, dξ + 2⟨u, F⟩, d^h u)."""
    F = curvature(W.theta)
    return TangentW(_zero(W.frame), xi.d() + pair(u, F, W.pairing) * 2, covariant_derivative(W.theta, u))


def p_hat_adjoint(W: Configuration, v: TangentW) -> tuple:
    """(𝐏̂*₀ v, 𝐏̂*₁ v) on a constant-ω background.

    𝐏̂*₀ = *(e^{−ℓf}(d^h Jȧ∧ω^{n−1} − (n−1)F∧ḃ∧ω^{n−2}))/(n−1)!
    𝐏̂*₁ = *d(e^{−ℓf}((n−1)ḃ^{1,1}∧ω^{n−2} − (ℓ/2)(Λḃ)ω^{n−1}))/(n−1)!
    """
    B = _Flat(W, require_flat=False)
    return _Padj(B, to_w_splitting(W, v))


def _Padj(B: _Flat, v: TangentW) -> tuple:
    n = B.n
    bd, ad = v.b_dot, v.a_dot
    c = B.e / factorial(n - 1)
    top0 = wedge(covariant_derivative(B.theta, ad.complex_J()), B.pw(n - 1))
    if n >= 2:
        top0 = top0 - wedge(B.F, wedge(bd, B.pw(n - 2))) * (n - 1)
    u = B.star_top(top0) * c if len(top0) else _zero(B.frame, B.m)
    phi = wedge(B.lam(bd), B.pw(n - 1)) * (-0.5 * B.ell)
    if n >= 2:
        phi = phi + wedge(bd.types((1, 1)), B.pw(n - 2)) * (n - 1)
    dphi = phi.d()
    xi = B.star_odd(dphi) * c if len(dphi) else _zero(B.frame)
    return u, xi


def pairing_ell(W: Configuration, y1: tuple, y2: tuple) -> float:
    """(2−ℓ)/M_ℓ (∫⟨u₁,u₂⟩ωⁿ/n! + ½∫ξ₁∧Jξ₂∧ω^{n−1}/(n−1)!), real part."""
    B = _Flat(W, require_flat=False)
    (u1, x1), (u2, x2) = y1, y2
    n = B.n
    uu = wedge(pair(u1, u2, B.P), omega_power(B.omega, n))
    t1 = complex(uu.integrate()) if len(uu) else 0.0
    xx = wedge(wedge(x1, x2.complex_J()), omega_power(B.omega, n - 1))
    t2 = complex(xx.integrate()) if len(xx) else 0.0
    return float(((2.0 - B.ell) / B.M * (t1 + 0.5 * t2)).real)


def hodge_star(W: Configuration, x):
    """Hodge star of ω on top forms and (2n−1)-forms."""
    B = _Flat(W, require_flat=False)
    if x.degrees() == [2 * B.n]:
        return B.star_top(x)
    if x.degrees() == [2 * B.n - 1]:
        return B.star_odd(x)
    raise DegreeError("hodge_star is implemented for degrees 2n and 2n−1")


# ---------------------------------------------------------------------------
# per-mode matrices


def _algebra_basis(P, su: bool) -> list:
    """Basis of 𝔤 = ⊕ gl(b_i) (traceless blocks when ``su``)."""
    m = P.m
    out = []
    off = 0
    for b in P.blocks:
        for i in range(b):
            for j in range(b):
                if su and i == j:
                    continue
                E = np.zeros((m, m), dtype=complex)
                E[off + i, off + j] = 1.0
                out.append(E)
        if su:
            for i in range(b - 1):
                E = np.zeros((m, m), dtype=complex)
                E[off + i, off + i] = 1.0
                E[off + i + 1, off + i + 1] = -1.0
                out.append(E)
        off += b
    return out


def _coexact_basis(B: _Flat, k) -> np.ndarray:
    """Columns span the one-forms at mode k with d*ξ = 0, i.e. d(Jξ∧ω^{n−1}) = 0."""
    src = basis_masks(B.frame, 1)
    if not np.any(k):
        return np.zeros((len(src), 0), dtype=complex)
    top = B.frame.tables.top
    om = omega_power(B.omega, B.n - 1)
    row = np.zeros((1, len(src)), dtype=complex)
    for j, mk in enumerate(src):
        xi = TrigForm(B.frame, [mk], k[None], [[[1.0]]])
        row[0, j] = _coords(wedge(xi.complex_J(), om).d(), k, [top])[0, 0, 0]
    _, s, vh = np.linalg.svd(row)
    return vh[1:].conj().T


@dataclass
class ModeOperator:
    """Dense per-mode matrices on a flat background.

    Coordinates: tangent = (ω̇ on (1,1) blades, ḃ on 2-blades, ȧ on 1-blades × m²);
    domain = (u in the 𝔤 basis, ξ in the coexact basis); 𝐋 codomain =
    (hym, balanced, f02, anomaly) blade coefficients.
    """

    mode: tuple
    L: np.ndarray
    P: np.ndarray
    P_adj: np.ndarray
    calL: np.ndarray
    n_u: int
    n_xi: int
    projection_residual: float

    @property
    def square(self) -> bool:
        return self.calL.shape[0] == self.calL.shape[1]

    def singular_values(self) -> np.ndarray:
        if not self.calL.size:
            return np.zeros(0)
        return np.linalg.svd(self.calL, compute_uv=False)

    def kernel_dimension(self, rtol: float = SVD_RTOL) -> int:
        s = self.singular_values()
        if not len(s):
            return 0
        if s[0] == 0:
            return len(s)
        return int(np.sum(s <= rtol * s[0]))


class _ModeSpace:
    def __init__(self, B: _Flat, k, su: bool):
        self.B = B
        self.k = np.asarray(k, dtype=np.int64)
        frame = B.frame
        self.g_basis = _algebra_basis(B.P, su)
        self.xi_basis = _coexact_basis(B, self.k)
        self.m11 = basis_masks(frame, bidegree=(1, 1))
        self.m2 = basis_masks(frame, 2)
        self.m1 = basis_masks(frame, 1)
        n = B.n
        self.out_masks = [
            [frame.tables.top],
            basis_masks(frame, 2 * n - 1),
            basis_masks(frame, bidegree=(0, 2)),
            basis_masks(frame, 3),
        ]
        G = np.array([E.ravel() for E in self.g_basis]).T
        self.G = G

    # domain
    @property
    def n_u(self) -> int:
        return len(self.g_basis)

    @property
    def n_xi(self) -> int:
        return self.xi_basis.shape[1]

    def domain_element(self, y: np.ndarray) -> tuple:
        B, k = self.B, self.k
        u = TrigForm(B.frame, [0], k[None], [sum(c * E for c, E in zip(y[: self.n_u], self.g_basis))], m=B.m)
        xc = self.xi_basis @ y[self.n_u :] if self.n_xi else np.zeros(len(self.m1))
        xi = TrigForm(B.frame, self.m1, np.repeat(k[None], len(self.m1), 0), xc.reshape(-1, 1, 1))
        return u, xi

    def domain_coords(self, u, xi) -> tuple:
        cu = _coords(u, self.k, [0])[0].ravel()
        yu, *_ = np.linalg.lstsq(self.G, cu, rcond=None)
        res = np.linalg.norm(self.G @ yu - cu)
        cx = _coords(xi, self.k, self.m1)[:, 0, 0]
        if self.n_xi:
            yx, *_ = np.linalg.lstsq(self.xi_basis, cx, rcond=None)
            res = max(res, np.linalg.norm(self.xi_basis @ yx - cx))
        else:
            yx = np.zeros(0, dtype=complex)
            res = max(res, np.linalg.norm(cx))
        return np.concatenate([yu, yx]), float(res)

    # tangent
    def tangent_size(self) -> int:
        return len(self.m11) + len(self.m2) + len(self.m1) * self.B.m**2

    def tangent_element(self, x: np.ndarray) -> TangentW:
        B, k = self.B, self.k
        a, b = len(self.m11), len(self.m2)
        rep = lambda ms: np.repeat(k[None], len(ms), 0)
        w = TrigForm(B.frame, self.m11, rep(self.m11), x[:a].reshape(-1, 1, 1))
        bb = TrigForm(B.frame, self.m2, rep(self.m2), x[a : a + b].reshape(-1, 1, 1))
        ad = TrigForm(B.frame, self.m1, rep(self.m1), x[a + b :].reshape(-1, B.m, B.m), m=B.m)
        return TangentW(w, bb, ad)

    def tangent_coords(self, v: TangentW) -> np.ndarray:
        return np.concatenate(
            [
                _coords(v.omega_dot, self.k, self.m11)[:, 0, 0],
                _coords(v.b_dot, self.k, self.m2)[:, 0, 0],
                _coords(v.a_dot, self.k, self.m1).ravel(),
            ]
        )

    def L_coords(self, out: dict) -> np.ndarray:
        parts = []
        for key, masks in zip(("hym", "balanced", "f02", "anomaly"), self.out_masks):
            parts.append(_coords(out[key], self.k, masks).ravel())
        return np.concatenate(parts)


def mode_operator(W: Configuration, k, *, su: bool = False) -> ModeOperator:
    """Matrices of 𝐋, 𝐏̂, 𝐏̂* and 𝓛 at the Fourier mode k."""
    B = _Flat(W)
    return _mode_operator(B, k, su)


def _mode_operator(B: _Flat, k, su: bool) -> ModeOperator:
    S = _ModeSpace(B, k, su)
    nd = S.n_u + S.n_xi
    nt = S.tangent_size()
    Pm = np.zeros((nt, nd), dtype=complex)
    Cm = np.zeros((nd, nd), dtype=complex)
    worst = 0.0
    W = B.W
    for j in range(nd):
        y = np.zeros(nd, dtype=complex)
        y[j] = 1.0
        u, xi = S.domain_element(y)
        v = p_hat(W, u, xi)
        Pm[:, j] = S.tangent_coords(v)
        cu, cx = _Padj(B, v)
        col, res = S.domain_coords(cu, cx)
        Cm[:, j] = col
        worst = max(worst, res)
    Lm = np.zeros((sum(len(ms) * (B.m**2 if i in (0, 2) else 1) for i, ms in enumerate(S.out_masks)), nt), dtype=complex)
    Am = np.zeros((nd, nt), dtype=complex)
    for j in range(nt):
        x = np.zeros(nt, dtype=complex)
        x[j] = 1.0
        v = S.tangent_element(x)
        Lm[:, j] = S.L_coords(_L(B, v))
        cu, cx = _Padj(B, v)
        col, res = S.domain_coords(cu, cx)
        Am[:, j] = col
        worst = max(worst, res)
    return ModeOperator(tuple(int(x) for x in S.k), Lm, Pm, Am, Cm, S.n_u, S.n_xi, worst)


def _mode_range(frame: TorusFrame, K: int, axes=None):
    axes = range(frame.dim) if axes is None else list(axes)
    for ks in product(range(-K, K + 1), repeat=len(axes)):
        k = np.zeros(frame.dim, dtype=np.int64)
        k[list(axes)] = ks
        yield k


@dataclass
class KernelReport:
    per_mode: dict
    constant_kernel: int
    nonconstant_kernel: int
    all_square: bool
    max_projection_residual: float

    @property
    def total(self) -> int:
        return self.constant_kernel + self.nonconstant_kernel

    def to_json(self) -> dict:
        return {
            "constant_kernel": self.constant_kernel,
            "nonconstant_kernel": self.nonconstant_kernel,
            "total": self.total,
            "all_square": self.all_square,
            "max_projection_residual": self.max_projection_residual,
            "per_mode": {",".join(map(str, k)): d for k, d in self.per_mode.items()},
        }


def condition_a(W: Configuration, K: int = 1, *, su: bool = False, axes=None, rtol: float = SVD_RTOL) -> KernelReport:
    """Kernel dimensions of 𝓛 = 𝐏̂*𝐏̂ over the modes |k|_∞ ≤ K."""
    B = _Flat(W)
    per = {}
    square = True
    worst = 0.0
    for k in _mode_range(B.frame, K, axes):
        op = _mode_operator(B, k, su)
        per[op.mode] = op.kernel_dimension(rtol)
        square = square and op.square
        worst = max(worst, op.projection_residual)
    zero = tuple([0] * B.frame.dim)
    const = per.get(zero, 0)
    return KernelReport(per, const, sum(d for k, d in per.items() if k != zero), square, worst)


@dataclass
class GaugeFixResult:
    tangent: TangentW
    y: tuple
    constant_kernel: int
    residuals: dict


def gauge_residuals(W: Configuration, v: TangentW) -> dict:
    """Norms of the two gauge conditions: 𝐏̂*₁v and 𝐏̂*₀v, as forms before the star."""
    u, xi = p_hat_adjoint(W, v)
    return {"u_slot": float(u.norm()), "xi_slot": float(xi.norm())}


def gauge_fix(W: Configuration, v: TangentW, *, su: bool = False, rtol: float = SVD_RTOL) -> GaugeFixResult:
    """v − 𝐏̂y with 𝐏̂*𝐏̂y = 𝐏̂*v solved mode by mode.

    The constant-mode kernel of 𝓛 is quotiented out by a minimum-norm solve
    and its dimension reported.
    """
    B = _Flat(W)
    v = to_w_splitting(W, v)
    ru, rx = _Padj(B, v)
    ys_u = _zero(B.frame, B.m)
    ys_x = _zero(B.frame)
    const_kernel = 0
    for k in _modes_of(ru, rx):
        S = _ModeSpace(B, k, su)
        rhs, _ = S.domain_coords(ru, rx)
        op = _mode_operator(B, k, su)
        kd = op.kernel_dimension(rtol)
        if np.any(k):
            if kd:
                raise SingularModeError(k)
            y = np.linalg.solve(op.calL, rhs)
        else:
            const_kernel = kd
            y, *_ = np.linalg.lstsq(op.calL, rhs, rcond=rtol)
        u, xi = S.domain_element(y)
        ys_u = ys_u + u
        ys_x = ys_x + xi
    out = v - p_hat(W, ys_u, ys_x)
    out = _from_w_splitting(W, out)
    return GaugeFixResult(out, (ys_u, ys_x), const_kernel, gauge_residuals(W, out))


# ---------------------------------------------------------------------------
# fibre variations


def fibre_residuals(W: Configuration, omega_dot, b_dot, s, s_prime) -> dict:
    """Norms of the gauge-fixed fibre system for (ω̇, ḃ, −Jd^hs + d^hs′)."""
    B = _Flat(W, require_flat=False)
    n = B.n
    ds = covariant_derivative(B.theta, s)
    dsp = covariant_derivative(B.theta, s_prime)
    ad = dsp - ds.complex_J()
    v = TangentW(omega_dot, b_dot, ad)
    L = _L(B, v)
    u, xi = _Padj(B, v)
    return {
        "hym": float(L["hym"].norm()),
        "balanced": float(L["balanced"].norm()),
        "anomaly": float(L["anomaly"].norm()),
        "gauge_xi": float(xi.norm()),
        "gauge_u": float(u.norm()),
    }


@dataclass(frozen=True)
class VariationClasses:
    """Complexified Aeppli and Bott–Chern variations with the balanced class."""

    a_re: CohomClass
    a_im: CohomClass
    b_re: CohomClass
    b_im: CohomClass
    b: CohomClass
    M: float

    @property
    def a_dot(self) -> tuple:
        return (self.a_re, self.a_im)

    @property
    def b_dot(self) -> tuple:
        return (self.b_re, self.b_im)


def variation_classes(
    W: Configuration,
    omega_dot,
    b_dot,
    s=None,
    s_prime=None,
    *,
    check: bool = True,
    tol: float = 1e-8,
) -> VariationClasses:
    """𝔞̇ = [ω̇ − 2⟨s,F⟩] + i[ḃ − 2⟨s′,F⟩] and 𝔟̇ = [Re ν̇] + i[Im ν̇].

    (n−1)! ν̇ = e^{−ℓf}((n−1)ẋ₀∧ω^{n−2} + (n(2−ℓ)−2)/(2n)(Λẋ) ω^{n−1}) for ẋ = ω̇, ḃ.
    """
    B = _Flat(W, require_flat=False)
    frame, n, ell, P = B.frame, B.n, B.ell, B.P
    s = _zero(frame, B.m) if s is None else s
    s_prime = _zero(frame, B.m) if s_prime is None else s_prime
    if check:
        res = fibre_residuals(W, omega_dot, b_dot, s, s_prime)
        bad = {k: r for k, r in res.items() if r > tol}
        if bad:
            raise BackgroundError(f"variation does not solve the gauge-fixed fibre system: {bad}")
    F = B.F
    nn = (n - 1, n - 1)

    def aeppli(x, sec):
        y = (x - pair(sec, F, P) * 2).types((1, 1)) if len(x) or len(F) else x
        return reduce_class(y if len(y) else _zero(frame), "Aeppli", (1, 1), tol=tol)

    def nu(x):
        lam, prim = lambda_contraction(B.omega, x.types((1, 1)))
        out = wedge(lam, B.pw(n - 1)) * ((n * (2 - ell) - 2) / (2 * n))
        if n >= 2:
            out = out + wedge(prim, B.pw(n - 2)) * (n - 1)
        return reduce_class(out * (B.e / factorial(n - 1)), "BottChern", nn, tol=tol)

    bal = reduce_class(B.pw(n - 1) * (B.e / factorial(n - 1)), "BottChern", nn, tol=tol)
    return VariationClasses(aeppli(omega_dot, s), aeppli(b_dot, s_prime), nu(omega_dot), nu(b_dot), bal, B.M)


def _dot(x, y) -> float:
    if isinstance(x, CohomClass):
        return float(np.real(duality_pairing(x, y)))
    return float(np.dot(np.asarray(x, dtype=float), np.asarray(y, dtype=float)))


def fibre_metric(a_dot, b_dot, b, M: float, ell: float) -> float:
    """(2−ℓ)/(2M)((2−ℓ)/(2M)(Re𝔞̇·𝔟)² − Re𝔞̇·Re𝔟̇ + (2−ℓ)/(2M)(Im𝔞̇·𝔟)² − Im𝔞̇·Im𝔟̇).

    ``a_dot`` and ``b_dot`` are (real, imaginary) pairs of classes or
    coefficient vectors; ``b`` is the balanced class or its dual vector.
    """
    if ell == 2:
        raise ValueError("ℓ = 2 is excluded")
    if M <= 0:
        raise ValueError("M_ℓ must be positive")
    c = (2.0 - ell) / (2.0 * M)
    out = 0.0
    for a, bd in zip(a_dot, b_dot):
        out += c * _dot(a, b) ** 2 - _dot(a, bd)
    return c * out


def conjecture_margin(a_dot_re, b_dot_re, b, M1: float) -> float:
    """(Re𝔞̇·𝔟)²/(2M₁) − Re𝔞̇·Re𝔟̇; positive when the inequality holds."""
    if M1 <= 0:
        raise ValueError("M₁ must be positive")
    return _dot(a_dot_re, b) ** 2 / (2.0 * M1) - _dot(a_dot_re, b_dot_re)


# ---------------------------------------------------------------------------
# intersection rings


@dataclass(frozen=True)
class IntersectionRing:
    """Triple intersection numbers κ_{ijk} of a threefold and ∫μ."""

    kappa: np.ndarray
    vol_mu: float = 1.0
    name: str = ""

    def __post_init__(self) -> None:
        k = np.asarray(self.kappa, dtype=float)
        if k.ndim != 3 or len(set(k.shape)) != 1:
            raise ValueError("κ must be a cubic array")
        for p in permutations(range(3)):
            if np.abs(k - k.transpose(p)).max() > 1e-12:
                raise ValueError("κ must be totally symmetric")
        if self.vol_mu <= 0:
            raise ValueError("∫μ must be positive")
        object.__setattr__(self, "kappa", k)

    @property
    def h11(self) -> int:
        return self.kappa.shape[0]

    @classmethod
    def from_entries(cls, h11: int, entries, vol_mu: float = 1.0, name: str = "") -> "IntersectionRing":
        """Entries (i, j, k, value) with 1-based indices; permutations are filled in."""
        k = np.zeros((h11, h11, h11))
        for i, j, l, val in entries:
            idx = (int(i) - 1, int(j) - 1, int(l) - 1)
            if min(idx) < 0 or max(idx) >= h11:
                raise ValueError(f"index {(i, j, l)} out of range")
            for p in set(permutations(idx)):
                k[p] = float(val)
        return cls(k, float(vol_mu), name)

    @classmethod
    def from_json(cls, doc) -> "IntersectionRing":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        return cls.from_entries(int(doc["h11"]), doc["kappa"], float(doc.get("vol_mu", 1.0)), doc.get("name", ""))

    @classmethod
    def from_csv(cls, path, h11: int | None = None, vol_mu: float = 1.0) -> "IntersectionRing":
        """Rows i,j,k,value (1-based); a non-numeric first row is treated as a header."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                try:
                    rows.append((int(row[0]), int(row[1]), int(row[2]), float(row[3])))
                except ValueError:
                    if rows:
                        raise
        if h11 is None:
            h11 = max(max(r[:3]) for r in rows)
        return cls.from_entries(h11, rows, vol_mu)

    def to_json(self) -> dict:
        h = self.h11
        entries = [
            [i + 1, j + 1, k + 1, float(self.kappa[i, j, k])]
            for i in range(h)
            for j in range(i, h)
            for k in range(j, h)
            if self.kappa[i, j, k] != 0
        ]
        return {"name": self.name, "h11": h, "kappa": entries, "vol_mu": self.vol_mu}

    def cubic(self, x, y, z) -> float:
        return float(np.einsum("ijk,i,j,k->", self.kappa, x, y, z))

    def quadric(self, x, y) -> np.ndarray:
        """κ(x, y, ·)."""
        return np.einsum("ijk,i,j->k", self.kappa, x, y)

    def linear(self, x) -> np.ndarray:
        """κ(x, ·, ·)."""
        return np.einsum("ijk,i->jk", self.kappa, x)


@dataclass(frozen=True)
class ComplexifiedClass:
    """𝔞 = Re 𝔞 + i Im 𝔞 with real coefficient vectors."""

    re: np.ndarray
    im: np.ndarray = None

    def __post_init__(self) -> None:
        re = np.atleast_1d(np.asarray(self.re, dtype=float))
        im = np.zeros_like(re) if self.im is None else np.atleast_1d(np.asarray(self.im, dtype=float))
        if re.shape != im.shape:
            raise ValueError("real and imaginary parts differ in length")
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)

    @classmethod
    def of(cls, x) -> "ComplexifiedClass":
        if isinstance(x, ComplexifiedClass):
            return x
        x = np.atleast_1d(np.asarray(x))
        return cls(x.real, x.imag)

    def in_cone(self, ring: IntersectionRing) -> bool:
        return ring.cubic(self.re, self.re, self.re) > 0


def _volume(ring: IntersectionRing, t) -> float:
    k3 = ring.cubic(t, t, t)
    if k3 <= 0:
        raise ConeError("κ(t,t,t) must be positive")
    return k3 / 6.0


def lefschetz_primitive(ring: IntersectionRing, t, x) -> np.ndarray:
    """x₀ = x − (κ(x,t,t)/κ(t,t,t)) t."""
    t = np.asarray(t, dtype=float)
    k3 = 6.0 * _volume(ring, t)
    return np.asarray(x, dtype=float) - ring.cubic(x, t, t) / k3 * t


def potential_K(ring: IntersectionRing, a, ell: float, vol_mu: float | None = None) -> float:
    """K = −(2−ℓ)/2 log(κ(t,t,t)/6) − (ℓ/2) log ∫μ with t = Re 𝔞."""
    t = ComplexifiedClass.of(a).re
    vol_mu = ring.vol_mu if vol_mu is None else vol_mu
    return -0.5 * (2.0 - ell) * np.log(_volume(ring, t)) - 0.5 * ell * np.log(vol_mu)


def cone_metric(ring: IntersectionRing, a, ell: float, a_dot) -> float:
    """Metric on the complexified cone at 𝔞, through the Lefschetz decomposition.

    −(2−ℓ)·3!/(2κ(t,t,t)) (κ(ṫ₀,ṫ₀,t) + κ(ẏ₀,ẏ₀,t)) + 3(2−ℓ)/(2κ(t,t,t)²)(κ(ṫ,t,t)² + κ(ẏ,t,t)²)
    for 𝔞̇ = ṫ + iẏ.
    """
    t = ComplexifiedClass.of(a).re
    ad = ComplexifiedClass.of(a_dot)
    k3 = 6.0 * _volume(ring, t)
    out = 0.0
    for x in (ad.re, ad.im):
        x0 = lefschetz_primitive(ring, t, x)
        out += -(2.0 - ell) * 6.0 / (2.0 * k3) * ring.cubic(x0, x0, t)
        out += 3.0 * (2.0 - ell) / (2.0 * k3**2) * ring.cubic(x, t, t) ** 2
    return float(out)


def cone_metric_matrix(ring: IntersectionRing, a, ell: float) -> np.ndarray:
    """Real matrix G with cone_metric(ṫ + iẏ) = ṫᵀGṫ + ẏᵀGẏ (the t-Hessian of K)."""
    t = ComplexifiedClass.of(a).re
    V = _volume(ring, t)
    q = ring.quadric(t, t)
    return (2.0 - ell) * (-ring.linear(t) / (2.0 * V) + np.outer(q, q) / (8.0 * V**2))


def potential_hessian_fd(ring: IntersectionRing, a, ell: float, h: float = 1e-4) -> np.ndarray:
    """4 ∂²K/∂zᵢ∂z̄ⱼ by central differences in z = t + iy (Hermitian matrix)."""
    base = ComplexifiedClass.of(a)
    z0 = base.re + 1j * base.im
    N = len(z0)

    def K(z):
        return potential_K(ring, z, ell)

    def d2(u, v):
        return (K(z0 + h * (u + v)) - K(z0 + h * (u - v)) - K(z0 - h * (u - v)) + K(z0 - h * (u + v))) / (4 * h * h)

    E = np.eye(N)
    H = np.zeros((N, N), dtype=complex)
    for i in range(N):
        for j in range(N):
            tt = d2(E[i], E[j])
            yy = d2(1j * E[i], 1j * E[j])
            ty = d2(E[i], 1j * E[j])
            yt = d2(1j * E[i], E[j])
            H[i, j] = 0.25 * (tt + yy + 1j * (ty - yt))
    return 4.0 * H


def ring_fibre_inputs(ring: IntersectionRing, a, a_dot, ell: float) -> dict:
    """Fibre-metric inputs for the trivial bundle, from intersection numbers.

    With V = κ(t,t,t)/6 and e^{2f} = V/∫μ: M = e^{−ℓf}V, 𝔟 = e^{−ℓf}κ(t,t,·)/2 and
    Re𝔟̇ = e^{−ℓf}(κ(ṫ₀,t,·) + (3(2−ℓ)−2)/2 · κ(ṫ,t,t)/κ(t,t,t) · κ(t,t,·)/2).
    """
    t = ComplexifiedClass.of(a).re
    ad = ComplexifiedClass.of(a_dot)
    V = _volume(ring, t)
    k3 = 6.0 * V
    f = 0.5 * np.log(V / ring.vol_mu)
    e = np.exp(-ell * f)
    q = ring.quadric(t, t)

    def bdot(x):
        x0 = lefschetz_primitive(ring, t, x)
        return e * (ring.quadric(x0, t) + (3.0 * (2.0 - ell) - 2.0) / 2.0 * ring.cubic(x, t, t) / k3 * q / 2.0)

    return {
        "a_dot": (ad.re, ad.im),
        "b_dot": (bdot(ad.re), bdot(ad.im)),
        "b": e * q / 2.0,
        "M": e * V,
    }


# ---------------------------------------------------------------------------
# Futaki map, dimension count, level window


def futaki(s, connection: Connection, tol: float = 1e-9) -> CohomClass:
    """Aeppli class of ⟨s, F_h⟩ for a holomorphic section s (∂̄^h s = 0)."""
    ds = covariant_derivative(connection.theta, s)
    res = ds.types((0, 1)).norm() if len(ds) else 0.0
    if res > tol * max(1.0, s.norm()):
        raise NonHolomorphicError(f"∂̄^h s has norm {res:.3e}")
    F = curvature(connection.theta)
    x = pair(s, F, connection.pairing)
    x = x.types((1, 1)) if len(x) else _zero(s.frame)
    return reduce_class(x if len(x) else _zero(s.frame), "Aeppli", (1, 1))


def deformation_dimension(h1_end: int) -> int:
    """2·h¹(End) + 2: two bundle deformations per class, plus ℓ and ε."""
    if isinstance(h1_end, bool) or int(h1_end) != h1_end or h1_end < 0:
        raise ValueError("h¹ must be a non-negative integer")
    return 2 * int(h1_end) + 2


def ell_window(n: int) -> tuple:
    """Open interval ]2 − 2/n, 2[ of levels where the cone metric is Kähler."""
    if n < 1:
        raise ValueError("n must be positive")
    return (2.0 - 2.0 / n, 2.0)


def check_ell_window(ell: float, n: int) -> None:
    lo, hi = ell_window(n)
    if not lo < ell < hi:
        raise ValueError(f"ℓ = {ell} lies outside ]{lo:.6g}, {hi:.6g}[")
