"""Exterior calculus for matrix-valued forms on flat complex tori.

Two representations share one interface:

* :class:`TrigForm` stores a finite Fourier expansion exactly.  Every linear
  operation (d, ∂, ∂̄, contraction, wedge) acts mode by mode without any
  approximation.
* :class:`GridForm` stores samples on a regular lattice.  It carries the
  nonlinear pointwise operations (log, exp, inverse, division) and is
  flagged ``approximate`` whenever such an operation produced it.

Coordinates are x¹..x^{2n} with period 2π and dz^j = dx^j + i dx^{n+j}.
Internally every blade is a bitmask over the complex coframe
(dz¹..dzⁿ, dz̄¹..dz̄ⁿ), so (p,q)-types are read off the mask directly.
Vector fields are stored as degree-one forms in the same index set (the
coefficient of slot c is the component along the dual frame vector), so
contraction is plain blade arithmetic.

The integral of a top form is the mean of its coefficient against the
standard volume ω₀ⁿ/n!, with ω₀ = (i/2) Σ dz^j∧dz̄^j, so the fundamental
domain has unit volume.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm

__all__ = [
    "DC_CONVENTION",
    "DEFAULT_MODE_CAP",
    "SupportOverflowError",
    "FrameMismatchError",
    "DegreeError",
    "PositivityError",
    "TorusFrame",
    "TrigForm",
    "GridForm",
    "wedge",
    "exterior_d",
    "delop",
    "delbar",
    "dc",
    "integrate",
    "as_grid",
    "grid_shape_for",
    "dilaton_function",
    "lambda_contraction",
    "volume_form",
    "standard_kahler_form",
    "hermitian_form",
    "random_form",
    "to_json",
    "from_json",
]

#: d^c = i(∂̄ − ∂); with this choice d d^c = 2i ∂∂̄.
DC_CONVENTION = "i*(delbar - del)"
DEFAULT_MODE_CAP = 100_000
# Raw pair count above which a product is refused before merging.
_PAIR_BUDGET = 20_000_000


class SupportOverflowError(RuntimeError):
    """Fourier support exceeded the configured cap."""


class FrameMismatchError(ValueError):
    """Operands live on different tori or have incompatible matrix sizes."""


class DegreeError(ValueError):
    """Operation applied to a form of the wrong degree or type."""


class PositivityError(ValueError):
    """A Hermitian form or matrix field failed to be positive definite."""


# ---------------------------------------------------------------------------
# frame tables


@dataclass(frozen=True)
class _Tables:
    n: int
    nb: int
    popcount: np.ndarray
    p: np.ndarray
    q: np.ndarray
    wedge_sign: np.ndarray
    conj_mask: np.ndarray
    conj_sign: np.ndarray
    # dx^a = Σ_c dx_to_e[a, c] e^c  and  e^c = Σ_a e_to_dx[c, a] dx^a
    dx_to_e: np.ndarray
    e_to_dx: np.ndarray
    # real blade coefficients r = c @ c2r, complex c = r @ r2c
    c2r: np.ndarray
    r2c: np.ndarray
    vol0_coef: complex
    top: int


def _bits(mask: int) -> list[int]:
    return [c for c in range(mask.bit_length()) if mask >> c & 1]


def _perm_sign(seq: Sequence[int]) -> int:
    s = 1
    seq = list(seq)
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                s = -s
    return s


@lru_cache(maxsize=None)
def _tables(n: int) -> _Tables:
    dim = 2 * n
    nb = 1 << dim
    pop = np.array([bin(b).count("1") for b in range(nb)], dtype=np.int64)
    low = (1 << n) - 1
    p = np.array([bin(b & low).count("1") for b in range(nb)], dtype=np.int64)
    q = pop - p
    ws = np.zeros((nb, nb), dtype=np.int64)
    for a in range(nb):
        ba = _bits(a)
        for b in range(nb):
            if a & b:
                continue
            inv = sum(1 for x in ba for y in _bits(b) if x > y)
            ws[a, b] = -1 if inv % 2 else 1
    swap = [c + n if c < n else c - n for c in range(dim)]
    cm = np.zeros(nb, dtype=np.int64)
    cs = np.zeros(nb, dtype=np.int64)
    for a in range(nb):
        image = [swap[c] for c in _bits(a)]
        cm[a] = sum(1 << c for c in image)
        cs[a] = _perm_sign(image)
    e_to_dx = np.zeros((dim, dim), dtype=complex)
    for j in range(n):
        e_to_dx[j, j] = 1.0
        e_to_dx[j, n + j] = 1j
        e_to_dx[n + j, j] = 1.0
        e_to_dx[n + j, n + j] = -1j
    dx_to_e = np.linalg.inv(e_to_dx)
    c2r = np.zeros((nb, nb), dtype=complex)
    for a in range(nb):
        ba = _bits(a)
        for r in range(nb):
            br = _bits(r)
            if len(br) != len(ba):
                continue
            c2r[a, r] = 1.0 if not ba else np.linalg.det(e_to_dx[np.ix_(ba, br)])
    r2c = np.linalg.inv(c2r)
    top = nb - 1
    # ω₀ⁿ/n! expanded on the complex top blade: product over j of (i/2) dz^j∧dz̄^j
    order = [c for j in range(n) for c in (j, n + j)]
    vol0 = (0.5j) ** n * _perm_sign(order)
    return _Tables(n, nb, pop, p, q, ws, cm, cs, dx_to_e, e_to_dx, c2r, r2c, complex(vol0), top)


@dataclass(frozen=True)
class TorusFrame:
    """Flat complex torus of complex dimension ``n`` with unit covolume."""

    n: int

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 1 or self.n > 4:
            raise ValueError("complex dimension must be an integer in 1..4")

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def tables(self) -> _Tables:
        return _tables(self.n)

    def delta(self, modes: np.ndarray) -> np.ndarray:
        """Derivative symbols: ∂_c e^{i⟨k,x⟩} = delta[c] e^{i⟨k,x⟩} for each slot c."""
        return 1j * np.asarray(modes, dtype=float) @ self.tables.dx_to_e

    def grid_points(self, shape: Sequence[int]) -> list[np.ndarray]:
        axes = [2 * np.pi * np.arange(N) / N for N in shape]
        return np.meshgrid(*axes, indexing="ij")

    def project_pq(self, p: int, q: int) -> np.ndarray:
        t = self.tables
        return (t.p == p) & (t.q == q)

    def slot(self, kind: str, j: int) -> int:
        """Slot index of dz^j (kind 'z') or dz̄^j (kind 'zbar'), 1-based j."""
        if not 1 <= j <= self.n:
            raise ValueError("coordinate index out of range")
        return j - 1 if kind == "z" else self.n + j - 1


def _check_frame(a, b) -> None:
    if a.frame != b.frame:
        raise FrameMismatchError("operands belong to different tori")


def _mat(value, m: int | None = None) -> np.ndarray:
    arr = np.asarray(value, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1) if m is None else arr * np.eye(m)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("coefficients must be square matrices")
    return arr


# ---------------------------------------------------------------------------
# TrigForm


class TrigForm:
    """Matrix-valued differential form with finite Fourier support.

    Terms are stored as parallel arrays: blade bitmasks ``masks`` (T,),
    integer modes ``modes`` (T, 2n) and coefficient matrices ``coeffs``
    (T, m, m).  Instances are immutable.
    """

    __slots__ = ("frame", "m", "masks", "modes", "coeffs", "mode_cap")

    def __init__(
        self,
        frame: TorusFrame,
        masks,
        modes,
        coeffs,
        *,
        m: int | None = None,
        mode_cap: int = DEFAULT_MODE_CAP,
        canonical: bool = False,
    ):
        masks = np.asarray(masks, dtype=np.int64).reshape(-1)
        modes = np.asarray(modes, dtype=np.int64).reshape(len(masks), frame.dim)
        coeffs = np.asarray(coeffs, dtype=complex)
        if m is None:
            m = coeffs.shape[-1] if coeffs.size else 1
        coeffs = coeffs.reshape(len(masks), m, m)
        if not canonical:
            masks, modes, coeffs = _canonical(masks, modes, coeffs, m)
        nmodes = len(np.unique(modes, axis=0)) if len(modes) else 0
        if nmodes > mode_cap:
            raise SupportOverflowError(
                f"Fourier support {nmodes} exceeds the cap {mode_cap}"
            )
        for arr in (masks, modes, coeffs):
            arr.setflags(write=False)
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "mode_cap", int(mode_cap))

    def __setattr__(self, key, value):
        raise AttributeError("TrigForm is immutable")

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls, frame: TorusFrame, m: int = 1) -> "TrigForm":
        return cls(frame, [], np.zeros((0, frame.dim)), np.zeros((0, m, m)), m=m, canonical=True)

    @classmethod
    def term(cls, frame: TorusFrame, slots: Iterable[int] = (), mode=None, coeff=1.0, m: int | None = None) -> "TrigForm":
        """coeff · e^{i⟨mode,x⟩} e^{slots}, slots being 0-based complex-coframe indices in any order."""
        slots = list(slots)
        if len(set(slots)) != len(slots):
            return cls.zero(frame, 1 if m is None else m)
        sign = _perm_sign(slots)
        mask = sum(1 << c for c in slots)
        k = np.zeros(frame.dim, dtype=np.int64) if mode is None else np.asarray(mode, dtype=np.int64)
        c = _mat(coeff, m) * sign
        return cls(frame, [mask], k[None, :], c[None], m=c.shape[0])

    @classmethod
    def constant(cls, frame: TorusFrame, value=1.0, m: int | None = None) -> "TrigForm":
        return cls.term(frame, (), None, value, m)

    @classmethod
    def fourier(cls, frame: TorusFrame, mode, coeff=1.0, m: int | None = None) -> "TrigForm":
        return cls.term(frame, (), mode, coeff, m)

    @classmethod
    def dz(cls, frame: TorusFrame, j: int) -> "TrigForm":
        return cls.term(frame, [frame.slot("z", j)])

    @classmethod
    def dzbar(cls, frame: TorusFrame, j: int) -> "TrigForm":
        return cls.term(frame, [frame.slot("zbar", j)])

    @classmethod
    def dx(cls, frame: TorusFrame, a: int) -> "TrigForm":
        """Real coordinate one-form dx^a (1-based a)."""
        return cls.from_real_terms(frame, [((a,), None, 1.0)])

    @classmethod
    def from_real_terms(cls, frame: TorusFrame, terms, m: int | None = None) -> "TrigForm":
        """Build from ``(real_blade (1-based), mode, coefficient)`` triples."""
        t = frame.tables
        masks, modes, coeffs = [], [], []
        for blade, mode, coeff in terms:
            blade = list(blade)
            if len(set(blade)) != len(blade):
                continue
            sign = _perm_sign(blade)
            rmask = sum(1 << (a - 1) for a in blade)
            c = _mat(coeff, m) * sign
            k = np.zeros(frame.dim, dtype=np.int64) if mode is None else np.asarray(mode, dtype=np.int64)
            for cmask in np.nonzero(t.r2c[rmask])[0]:
                masks.append(cmask)
                modes.append(k)
                coeffs.append(c * t.r2c[rmask, cmask])
        if not masks:
            return cls.zero(frame, 1 if m is None else m)
        return cls(frame, masks, np.array(modes), np.array(coeffs))

    # -- basic properties -------------------------------------------------
    @property
    def n(self) -> int:
        return self.frame.n

    def __len__(self) -> int:
        return len(self.masks)

    def __repr__(self) -> str:
        degs = sorted(set(self.frame.tables.popcount[self.masks].tolist()))
        return f"TrigForm(n={self.n}, m={self.m}, terms={len(self)}, degrees={degs})"

    def degrees(self) -> list[int]:
        return sorted(set(self.frame.tables.popcount[self.masks].tolist()))

    def bidegrees(self) -> list[tuple[int, int]]:
        t = self.frame.tables
        return sorted(set(zip(t.p[self.masks].tolist(), t.q[self.masks].tolist())))

    @property
    def degree(self) -> int:
        d = self.degrees()
        if len(d) > 1:
            raise DegreeError("form is not homogeneous")
        return d[0] if d else 0

    def mode_count(self) -> int:
        return len(np.unique(self.modes, axis=0)) if len(self) else 0

    def max_abs_mode(self) -> np.ndarray:
        if not len(self):
            return np.zeros(self.frame.dim, dtype=np.int64)
        return np.abs(self.modes).max(axis=0)

    def is_constant(self) -> bool:
        return not np.any(self.modes)

    def _new(self, masks, modes, coeffs, canonical=False) -> "TrigForm":
        coeffs = np.asarray(coeffs, dtype=complex)
        m = coeffs.shape[-1] if coeffs.ndim == 3 and coeffs.size else self.m
        return TrigForm(self.frame, masks, modes, coeffs, m=m, mode_cap=self.mode_cap, canonical=canonical)

    def _filter(self, keep) -> "TrigForm":
        return self._new(self.masks[keep], self.modes[keep], self.coeffs[keep], canonical=True)

    # -- linear structure -------------------------------------------------
    def __add__(self, other):
        if isinstance(other, GridForm):
            return as_grid(self, other.shape) + other
        if isinstance(other, (int, float, complex)) and other == 0:
            return self
        if not isinstance(other, TrigForm):
            return NotImplemented
        _check_frame(self, other)
        a, b = _broadcast_m(self, other)
        return a._new(
            np.concatenate([a.masks, b.masks]),
            np.concatenate([a.modes, b.modes]),
            np.concatenate([a.coeffs, b.coeffs]),
        )

    __radd__ = __add__

    def __neg__(self) -> "TrigForm":
        return self._new(self.masks, self.modes, -self.coeffs, canonical=True)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, complex, np.number)):
            if scalar == 0:
                return TrigForm.zero(self.frame, self.m)
            return self._new(self.masks, self.modes, self.coeffs * scalar, canonical=True)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    # -- projections ------------------------------------------------------
    def part(self, k: int) -> "TrigForm":
        return self._filter(self.frame.tables.popcount[self.masks] == k)

    def pq(self, p: int, q: int) -> "TrigForm":
        t = self.frame.tables
        return self._filter((t.p[self.masks] == p) & (t.q[self.masks] == q))

    def types(self, *pqs: tuple[int, int]) -> "TrigForm":
        t = self.frame.tables
        keep = np.zeros(len(self), dtype=bool)
        for p, q in pqs:
            keep |= (t.p[self.masks] == p) & (t.q[self.masks] == q)
        return self._filter(keep)

    def constant_part(self) -> "TrigForm":
        return self._filter(~np.any(self.modes, axis=1))

    def chop(self, tol: float = 1e-13) -> "TrigForm":
        scale = np.abs(self.coeffs).max(axis=(1, 2)) if len(self) else np.zeros(0)
        return self._filter(scale > tol)

    # -- conjugations and matrix operations -------------------------------
    def conj(self) -> "TrigForm":
        t = self.frame.tables
        return self._new(
            t.conj_mask[self.masks],
            -self.modes,
            np.conj(self.coeffs) * t.conj_sign[self.masks][:, None, None],
        )

    def transpose(self) -> "TrigForm":
        return self._new(self.masks, self.modes, np.swapaxes(self.coeffs, 1, 2), canonical=True)

    def dagger(self) -> "TrigForm":
        return self.conj().transpose()

    def real_part(self) -> "TrigForm":
        return (self + self.conj()) * 0.5

    def imag_part(self) -> "TrigForm":
        return (self - self.conj()) * (-0.5j)

    def lmul(self, mat) -> "TrigForm":
        mat = _mat(mat)
        return self._new(self.masks, self.modes, mat @ self.coeffs, canonical=True)

    def rmul(self, mat) -> "TrigForm":
        mat = _mat(mat)
        return self._new(self.masks, self.modes, self.coeffs @ mat, canonical=True)

    def trace(self, weights=None) -> "TrigForm":
        w = np.ones(self.m) if weights is None else np.asarray(weights)
        c = np.einsum("tii,i->t", self.coeffs, w)
        return self._new(self.masks, self.modes, c[:, None, None])

    def entry(self, i: int, j: int) -> "TrigForm":
        return self._new(self.masks, self.modes, self.coeffs[:, i : i + 1, j : j + 1])

    def as_matrix(self, m: int) -> "TrigForm":
        """Promote a scalar form to ``m×m`` by multiplying with the identity."""
        if self.m == m:
            return self
        if self.m != 1:
            raise FrameMismatchError("only scalar forms can be promoted")
        return self._new(self.masks, self.modes, self.coeffs * np.eye(m), canonical=True)

    # -- calculus ---------------------------------------------------------
    def _derive(self, slots: Iterable[int]) -> "TrigForm":
        t = self.frame.tables
        if not len(self):
            return self
        delta = self.frame.delta(self.modes)
        masks, modes, coeffs = [], [], []
        for c in slots:
            sel = ((self.masks >> c) & 1 == 0) & (delta[:, c] != 0)
            if not np.any(sel):
                continue
            mk = self.masks[sel]
            sign = np.where(t.popcount[mk & ((1 << c) - 1)] % 2, -1.0, 1.0)
            masks.append(mk | (1 << c))
            modes.append(self.modes[sel])
            coeffs.append(self.coeffs[sel] * (sign * delta[sel, c])[:, None, None])
        if not masks:
            return TrigForm.zero(self.frame, self.m)
        return self._new(np.concatenate(masks), np.concatenate(modes), np.concatenate(coeffs))

    def d(self) -> "TrigForm":
        return self._derive(range(self.frame.dim))

    def del_(self) -> "TrigForm":
        return self._derive(range(self.n))

    def delbar(self) -> "TrigForm":
        return self._derive(range(self.n, 2 * self.n))

    def dc(self) -> "TrigForm":
        return (self.delbar() - self.del_()) * 1j

    def partial(self, c: int) -> "TrigForm":
        """Coefficient-wise derivative along the dual frame vector of slot c."""
        delta = self.frame.delta(self.modes)[:, c]
        return self._new(self.masks, self.modes, self.coeffs * delta[:, None, None])

    def component(self, c: int) -> "TrigForm":
        """Scalar 0-form coefficient of e^c in a one-form (vector-field component)."""
        sel = self.masks == (1 << c)
        return self._new(np.zeros(int(sel.sum()), dtype=np.int64), self.modes[sel], self.coeffs[sel], canonical=True)

    def interior(self, c: int) -> "TrigForm":
        """Contraction with the dual frame vector of slot c."""
        t = self.frame.tables
        sel = (self.masks >> c) & 1 == 1
        mk = self.masks[sel]
        sign = np.where(t.popcount[mk & ((1 << c) - 1)] % 2, -1.0, 1.0)
        return self._new(mk & ~(1 << c), self.modes[sel], self.coeffs[sel] * sign[:, None, None])

    def contract(self, V) -> "TrigForm":
        """Interior product i_V with a vector field stored as a scalar one-form."""
        return contract(V, self)

    def complex_J(self) -> "TrigForm":
        """J on one-forms: Jξ = i ξ^{0,1} − i ξ^{1,0}."""
        if self.degrees() not in ([], [1]):
            raise DegreeError("J is applied to one-forms only")
        t = self.frame.tables
        factor = np.where(t.p[self.masks] == 1, -1j, 1j)
        return self._new(self.masks, self.modes, self.coeffs * factor[:, None, None], canonical=True)

    # -- evaluation -------------------------------------------------------
    def to_grid(self, shape: Sequence[int]) -> "GridForm":
        return GridForm.from_trig(self, shape)

    def integrate(self) -> complex:
        return integrate(self)

    def real_coefficients(self) -> "tuple[np.ndarray, np.ndarray, np.ndarray]":
        """Coefficients in the real basis dx^R (masks over real indices)."""
        t = self.frame.tables
        if not len(self):
            return self.masks, self.modes, self.coeffs
        rows = t.c2r[self.masks]  # (T, nb)
        ti, rj = np.nonzero(rows)
        coeffs = self.coeffs[ti] * rows[ti, rj][:, None, None]
        return _canonical(rj.astype(np.int64), self.modes[ti], coeffs, self.m)

    def norm(self) -> float:
        """Largest absolute real-basis Fourier coefficient."""
        if not len(self):
            return 0.0
        _, _, c = self.real_coefficients()
        return float(np.abs(c).max()) if len(c) else 0.0

    def l2norm(self) -> float:
        if not len(self):
            return 0.0
        _, _, c = self.real_coefficients()
        return float(np.sqrt((np.abs(c) ** 2).sum()))

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.norm() <= tol

    def is_real(self, tol: float = 1e-12) -> bool:
        return (self - self.conj()).norm() <= tol


def _broadcast_m(a, b):
    if a.m == b.m:
        return a, b
    if a.m == 1 and not len(a):
        return TrigForm.zero(a.frame, b.m), b
    if b.m == 1 and not len(b):
        return a, TrigForm.zero(b.frame, a.m)
    if a.m == 1:
        return a.as_matrix(b.m), b
    if b.m == 1:
        return a, b.as_matrix(a.m)
    raise FrameMismatchError(f"matrix sizes {a.m} and {b.m} differ")


def _canonical(masks, modes, coeffs, m):
    if len(masks) == 0:
        return (
            np.zeros(0, dtype=np.int64),
            np.zeros((0, modes.shape[1] if modes.ndim == 2 else 0), dtype=np.int64),
            np.zeros((0, m, m), dtype=complex),
        )
    keys = np.column_stack([masks, modes])
    order = np.lexsort(keys.T[::-1])
    keys = keys[order]
    coeffs = coeffs[order]
    change = np.any(keys[1:] != keys[:-1], axis=1)
    starts = np.concatenate([[0], np.nonzero(change)[0] + 1])
    summed = np.add.reduceat(coeffs, starts, axis=0)
    keys = keys[starts]
    keep = np.any(summed != 0, axis=(1, 2))
    keys = keys[keep]
    return (
        np.ascontiguousarray(keys[:, 0]),
        np.ascontiguousarray(keys[:, 1:]),
        np.ascontiguousarray(summed[keep]),
    )


# ---------------------------------------------------------------------------
# products


def _pairing_weights(pairing, m: int) -> np.ndarray:
    if pairing is None:
        return np.ones(m)
    w = pairing.weights_vector() if hasattr(pairing, "weights_vector") else np.asarray(pairing, dtype=float)
    if len(w) != m:
        raise FrameMismatchError("pairing weights do not match the matrix size")
    return np.asarray(w, dtype=float)


def _combine(ca, cb, rule, weights):
    """Coefficient product for one block of blade pairs."""
    if rule == "matmul":
        if ca.shape[-1] == 1 and cb.shape[-1] != 1:
            return ca[:, :1, :1] * cb
        if cb.shape[-1] == 1 and ca.shape[-1] != 1:
            return ca * cb[:, :1, :1]
        return ca @ cb
    if rule == "commutator":
        if ca.shape[-1] == 1 or cb.shape[-1] == 1:
            return np.zeros(np.broadcast_shapes(ca.shape, cb.shape), dtype=complex)
        # the blade reordering already supplies (−1)^{|a||b|}
        return ca @ cb - cb @ ca
    if rule == "pairing":
        val = np.einsum("pij,pji,i->p", ca, cb, weights)
        return val[:, None, None]
    raise ValueError(f"unknown multiplication rule {rule!r}")


def _wedge_trig(a: TrigForm, b: TrigForm, rule: str, pairing) -> TrigForm:
    _check_frame(a, b)
    t = a.frame.tables
    m_out = 1 if rule == "pairing" else max(a.m, b.m)
    if rule != "matmul" and a.m != b.m:
        raise FrameMismatchError("commutator and pairing need equal matrix sizes")
    if rule == "matmul" and a.m != b.m and 1 not in (a.m, b.m):
        raise FrameMismatchError(f"matrix sizes {a.m} and {b.m} differ")
    cap = max(a.mode_cap, b.mode_cap)
    if not len(a) or not len(b):
        return TrigForm(a.frame, [], np.zeros((0, a.frame.dim)), np.zeros((0, m_out, m_out)), m=m_out, mode_cap=cap)
    weights = _pairing_weights(pairing, a.m) if rule == "pairing" else None
    sign = t.wedge_sign[a.masks[:, None], b.masks[None, :]]
    ia, ib = np.nonzero(sign)
    if not len(ia):
        return TrigForm(a.frame, [], np.zeros((0, a.frame.dim)), np.zeros((0, m_out, m_out)), m=m_out, mode_cap=cap)
    if len(ia) > _PAIR_BUDGET:
        raise SupportOverflowError(f"product would create {len(ia)} raw terms")
    out_masks, out_modes, out_coeffs = [], [], []
    chunk = 200_000
    for s in range(0, len(ia), chunk):
        xa, xb = ia[s : s + chunk], ib[s : s + chunk]
        c = _combine(a.coeffs[xa], b.coeffs[xb], rule, weights)
        c = c * sign[xa, xb][:, None, None]
        mk, md, cf = _canonical(a.masks[xa] | b.masks[xb], a.modes[xa] + b.modes[xb], c, m_out)
        out_masks.append(mk)
        out_modes.append(md)
        out_coeffs.append(cf)
    return TrigForm(
        a.frame,
        np.concatenate(out_masks),
        np.concatenate(out_modes),
        np.concatenate(out_coeffs),
        m=m_out,
        mode_cap=cap,
    )


def wedge(a, b, rule: str = "matmul", pairing=None):
    """Graded product α∧β.

    ``rule`` selects the coefficient product: ``"matmul"`` (matrix product,
    scalars broadcast), ``"commutator"`` ([α∧β] = α∧β − (−1)^{|α||β|} β∧α)
    or ``"pairing"`` (⟨α∧β⟩ = Σ c_i tr over blocks, returns a scalar form).
    """
    if isinstance(a, GridForm) or isinstance(b, GridForm):
        shape = a.shape if isinstance(a, GridForm) else b.shape
        return _wedge_grid(as_grid(a, shape), as_grid(b, shape), rule, pairing)
    return _wedge_trig(a, b, rule, pairing)


def contract(V, alpha):
    """Interior product i_V α, with V a scalar one-form in dual-frame storage."""
    if isinstance(V, GridForm) or isinstance(alpha, GridForm):
        shape = V.shape if isinstance(V, GridForm) else alpha.shape
        V, alpha = as_grid(V, shape), as_grid(alpha, shape)
    if V.m != 1:
        raise DegreeError("vector fields are scalar")
    total = None
    for c in range(alpha.frame.dim):
        comp = V.component(c)
        inner = alpha.interior(c)
        if _empty(comp) or _empty(inner):
            continue
        term = wedge(comp, inner)
        total = term if total is None else total + term
    if total is None:
        return alpha.interior(0) * 0
    return total


def vector_apply(V, alpha):
    """Coefficient-wise directional derivative V(α) along a vector field."""
    if isinstance(V, GridForm) or isinstance(alpha, GridForm):
        shape = V.shape if isinstance(V, GridForm) else alpha.shape
        V, alpha = as_grid(V, shape), as_grid(alpha, shape)
    total = alpha * 0
    for c in range(alpha.frame.dim):
        comp = V.component(c)
        if _empty(comp):
            continue
        total = total + wedge(comp, alpha.partial(c))
    return total


def lie_bracket_vectors(V, W):
    """[V, W] for vector fields in dual-frame storage."""
    return vector_apply(V, W) - vector_apply(W, V)


def lie_derivative(V, alpha):
    """Cartan formula L_V α = i_V dα + d i_V α."""
    return contract(V, exterior_d(alpha)) + exterior_d(contract(V, alpha))


def _empty(x) -> bool:
    if isinstance(x, TrigForm):
        return len(x) == 0
    return len(x.masks) == 0


def exterior_d(alpha):
    return alpha.d()


def delop(alpha):
    """Holomorphic part ∂ of d."""
    return alpha.del_()


def delbar(alpha):
    return alpha.delbar()


def dc(alpha):
    """d^c = i(∂̄ − ∂)."""
    return alpha.dc()


# ---------------------------------------------------------------------------
# GridForm


class GridForm:
    """Blade-indexed matrix samples on a regular lattice of the torus.

    ``values`` has shape (B, *shape, m, m) aligned with ``masks`` (B,).
    Axes with resolution 1 carry no dependence.
    """

    __slots__ = ("frame", "shape", "m", "masks", "values", "approximate")

    def __init__(self, frame: TorusFrame, shape, masks, values, *, approximate: bool = False):
        shape = tuple(int(s) for s in shape)
        if len(shape) != frame.dim:
            raise FrameMismatchError("grid shape must have one entry per real axis")
        masks = np.asarray(masks, dtype=np.int64).reshape(-1)
        values = np.asarray(values, dtype=complex)
        m = values.shape[-1] if values.ndim >= 2 else 1
        values = values.reshape((len(masks),) + shape + (m, m))
        if len(np.unique(masks)) != len(masks):
            order = np.argsort(masks, kind="stable")
            masks, values = masks[order], values[order]
            starts = np.concatenate([[0], np.nonzero(np.diff(masks))[0] + 1])
            values = np.add.reduceat(values, starts, axis=0)
            masks = masks[starts]
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "approximate", bool(approximate))

    def __setattr__(self, key, value):
        raise AttributeError("GridForm is immutable")

    def __repr__(self) -> str:
        return f"GridForm(n={self.frame.n}, m={self.m}, shape={self.shape}, blades={len(self.masks)}, approximate={self.approximate})"

    @property
    def n(self) -> int:
        return self.frame.n

    @property
    def npoints(self) -> int:
        return int(np.prod(self.shape))

    @classmethod
    def zero(cls, frame: TorusFrame, shape, m: int = 1) -> "GridForm":
        return cls(frame, shape, [], np.zeros((0,) + tuple(shape) + (m, m)))

    @classmethod
    def scalar_field(cls, frame: TorusFrame, values, *, approximate: bool = False) -> "GridForm":
        values = np.asarray(values, dtype=complex)
        return cls(frame, values.shape, [0], values[None, ..., None, None], approximate=approximate)

    @classmethod
    def matrix_field(cls, frame: TorusFrame, values, *, approximate: bool = False) -> "GridForm":
        values = np.asarray(values, dtype=complex)
        return cls(frame, values.shape[:-2], [0], values[None], approximate=approximate)

    @classmethod
    def from_trig(cls, form: TrigForm, shape) -> "GridForm":
        shape = tuple(int(s) for s in shape)
        frame = form.frame
        masks = np.unique(form.masks)
        m = form.m
        out = np.zeros((len(masks),) + shape + (m, m), dtype=complex)
        if len(form):
            kmax = np.abs(form.modes).max(axis=0)
            bad = [a for a in range(frame.dim) if 2 * kmax[a] >= shape[a] and kmax[a] > 0]
            if bad:
                raise SupportOverflowError(f"grid {shape} does not resolve modes on axes {bad}")
            idx = tuple((form.modes[:, a] % shape[a]) for a in range(frame.dim))
            for bi, mk in enumerate(masks):
                sel = form.masks == mk
                spec = np.zeros(shape + (m, m), dtype=complex)
                np.add.at(spec, tuple(ix[sel] for ix in idx), form.coeffs[sel])
                out[bi] = np.fft.ifftn(spec, axes=tuple(range(frame.dim))) * np.prod(shape)
        return cls(frame, shape, masks, out)

    def _new(self, masks, values, approximate=None) -> "GridForm":
        return GridForm(
            self.frame,
            self.shape,
            masks,
            values,
            approximate=self.approximate if approximate is None else approximate,
        )

    def to_trig(self, tol: float = 1e-13, mode_cap: int = DEFAULT_MODE_CAP) -> TrigForm:
        """Fourier transform back to a TrigForm, dropping coefficients below ``tol`` (relative)."""
        axes = tuple(range(1, self.frame.dim + 1))
        spec = np.fft.fftn(self.values, axes=axes) / self.npoints
        scale = np.abs(spec).max() if spec.size else 0.0
        if scale == 0:
            return TrigForm.zero(self.frame, self.m)
        entry_max = np.abs(spec).max(axis=(-1, -2))
        hits = np.nonzero(entry_max > tol * max(scale, 1.0))
        b = hits[0]
        k = np.stack(
            [np.where(h > s // 2, h - s, h) for h, s in zip(hits[1:], self.shape)], axis=1
        )
        coeffs = spec[hits]
        return TrigForm(self.frame, self.masks[b], k, coeffs, m=self.m, mode_cap=mode_cap)

    # -- linear structure -------------------------------------------------
    def __add__(self, other):
        if isinstance(other, (int, float, complex)) and other == 0:
            return self
        if isinstance(other, TrigForm):
            other = as_grid(other, self.shape)
        if not isinstance(other, GridForm):
            return NotImplemented
        _check_frame(self, other)
        if other.shape != self.shape:
            raise FrameMismatchError("grid shapes differ")
        a, b = self, other
        if a.m != b.m:
            if a.m == 1:
                a = a.as_matrix(b.m)
            elif b.m == 1:
                b = b.as_matrix(a.m)
            else:
                raise FrameMismatchError("matrix sizes differ")
        return GridForm(
            self.frame,
            self.shape,
            np.concatenate([a.masks, b.masks]),
            np.concatenate([a.values, b.values]),
            approximate=a.approximate or b.approximate,
        )

    __radd__ = __add__

    def __neg__(self):
        return self._new(self.masks, -self.values)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, complex, np.number)):
            return self._new(self.masks, self.values * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def as_matrix(self, m: int) -> "GridForm":
        if self.m == m:
            return self
        if self.m != 1:
            raise FrameMismatchError("only scalar forms can be promoted")
        return self._new(self.masks, self.values * np.eye(m))

    # -- projections ------------------------------------------------------
    def _filter(self, keep) -> "GridForm":
        return self._new(self.masks[keep], self.values[keep])

    def part(self, k: int) -> "GridForm":
        return self._filter(self.frame.tables.popcount[self.masks] == k)

    def pq(self, p: int, q: int) -> "GridForm":
        t = self.frame.tables
        return self._filter((t.p[self.masks] == p) & (t.q[self.masks] == q))

    def types(self, *pqs) -> "GridForm":
        t = self.frame.tables
        keep = np.zeros(len(self.masks), dtype=bool)
        for p, q in pqs:
            keep |= (t.p[self.masks] == p) & (t.q[self.masks] == q)
        return self._filter(keep)

    def degrees(self) -> list[int]:
        return sorted(set(self.frame.tables.popcount[self.masks].tolist()))

    def blade(self, mask: int) -> np.ndarray:
        """Values of one blade component, shape (*shape, m, m)."""
        hit = np.nonzero(self.masks == mask)[0]
        if not len(hit):
            return np.zeros(self.shape + (self.m, self.m), dtype=complex)
        return self.values[hit[0]]

    def scalar_values(self, mask: int = 0) -> np.ndarray:
        if self.m != 1:
            raise DegreeError("scalar values requested from a matrix form")
        return self.blade(mask)[..., 0, 0]

    def conj(self) -> "GridForm":
        t = self.frame.tables
        return self._new(t.conj_mask[self.masks], np.conj(self.values) * t.conj_sign[self.masks].reshape((-1,) + (1,) * (self.frame.dim + 2)))

    def transpose(self) -> "GridForm":
        return self._new(self.masks, np.swapaxes(self.values, -1, -2))

    def dagger(self) -> "GridForm":
        return self.conj().transpose()

    def real_part(self) -> "GridForm":
        return (self + self.conj()) * 0.5

    def imag_part(self) -> "GridForm":
        return (self - self.conj()) * (-0.5j)

    def lmul(self, mat) -> "GridForm":
        return self._new(self.masks, _mat(mat) @ self.values)

    def rmul(self, mat) -> "GridForm":
        return self._new(self.masks, self.values @ _mat(mat))

    def trace(self, weights=None) -> "GridForm":
        w = np.ones(self.m) if weights is None else np.asarray(weights)
        v = np.einsum("...ii,i->...", self.values, w)
        return self._new(self.masks, v[..., None, None])

    def entry(self, i: int, j: int) -> "GridForm":
        return self._new(self.masks, self.values[..., i : i + 1, j : j + 1])

    # -- calculus ---------------------------------------------------------
    def _symbols(self) -> np.ndarray:
        """Derivative symbols delta[c] on the FFT lattice, shape (2n, *shape)."""
        ks = []
        for N in self.shape:
            k = np.fft.fftfreq(N, d=1.0 / N)
            if N % 2 == 0:
                k[N // 2] = 0.0
            ks.append(k)
        grids = np.meshgrid(*ks, indexing="ij")
        kvec = np.stack(grids, axis=-1)
        return np.moveaxis(self.frame.delta(kvec.reshape(-1, self.frame.dim)).reshape(self.shape + (self.frame.dim,)), -1, 0)

    def _derive(self, slots) -> "GridForm":
        t = self.frame.tables
        if not len(self.masks):
            return self
        axes = tuple(range(1, self.frame.dim + 1))
        spec = np.fft.fftn(self.values, axes=axes)
        sym = self._symbols()
        masks, vals = [], []
        for c in slots:
            if not np.any(sym[c]):
                continue
            for bi, mk in enumerate(self.masks):
                if mk >> c & 1:
                    continue
                sign = -1.0 if t.popcount[mk & ((1 << c) - 1)] % 2 else 1.0
                masks.append(mk | (1 << c))
                deriv = spec[bi] * sym[c][..., None, None]
                vals.append(sign * np.fft.ifftn(deriv, axes=tuple(range(self.frame.dim))))
        if not masks:
            return GridForm.zero(self.frame, self.shape, self.m)
        return self._new(np.array(masks), np.array(vals))

    def d(self) -> "GridForm":
        return self._derive(range(self.frame.dim))

    def del_(self) -> "GridForm":
        return self._derive(range(self.n))

    def delbar(self) -> "GridForm":
        return self._derive(range(self.n, 2 * self.n))

    def dc(self) -> "GridForm":
        return (self.delbar() - self.del_()) * 1j

    def partial(self, c: int) -> "GridForm":
        axes = tuple(range(1, self.frame.dim + 1))
        if not len(self.masks):
            return self
        spec = np.fft.fftn(self.values, axes=axes)
        sym = self._symbols()[c]
        return self._new(self.masks, np.fft.ifftn(spec * sym[None, ..., None, None], axes=axes))

    def component(self, c: int) -> "GridForm":
        hit = self.masks == (1 << c)
        return self._new(np.zeros(int(hit.sum()), dtype=np.int64), self.values[hit])

    def interior(self, c: int) -> "GridForm":
        t = self.frame.tables
        sel = (self.masks >> c) & 1 == 1
        mk = self.masks[sel]
        sign = np.where(t.popcount[mk & ((1 << c) - 1)] % 2, -1.0, 1.0)
        return self._new(mk & ~(1 << c), self.values[sel] * sign.reshape((-1,) + (1,) * (self.frame.dim + 2)))

    def contract(self, V):
        return contract(V, self)

    def complex_J(self) -> "GridForm":
        if self.degrees() not in ([], [1]):
            raise DegreeError("J is applied to one-forms only")
        t = self.frame.tables
        factor = np.where(t.p[self.masks] == 1, -1j, 1j)
        return self._new(self.masks, self.values * factor.reshape((-1,) + (1,) * (self.frame.dim + 2)))

    # -- pointwise nonlinear operations (0-forms) -------------------------
    def _zero_form_values(self) -> np.ndarray:
        if any(mk != 0 for mk in self.masks):
            raise DegreeError("pointwise functions act on 0-forms")
        return self.blade(0)

    def apply_scalar(self, func) -> "GridForm":
        v = self._zero_form_values()[..., 0, 0]
        return GridForm.scalar_field(self.frame, func(v), approximate=True)

    def exp(self) -> "GridForm":
        return GridForm.matrix_field(self.frame, expm(self._zero_form_values()), approximate=True)

    def inv(self) -> "GridForm":
        return GridForm.matrix_field(self.frame, np.linalg.inv(self._zero_form_values()), approximate=True)

    def logh(self) -> "GridForm":
        """Logarithm of a pointwise positive Hermitian matrix field."""
        v = self._zero_form_values()
        v = 0.5 * (v + np.conj(np.swapaxes(v, -1, -2)))
        w, U = np.linalg.eigh(v)
        if np.any(w <= 0):
            raise PositivityError("matrix field is not positive definite")
        L = (U * np.log(w)[..., None, :]) @ np.conj(np.swapaxes(U, -1, -2))
        return GridForm.matrix_field(self.frame, L, approximate=True)

    def to_grid(self, shape=None) -> "GridForm":
        if shape is None or tuple(shape) == self.shape:
            return self
        return GridForm.from_trig(self.to_trig(tol=0.0), shape)

    def integrate(self) -> complex:
        return integrate(self)

    def norm(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def l2norm(self) -> float:
        return float(np.sqrt((np.abs(self.values) ** 2).mean() * len(self.masks))) if self.values.size else 0.0

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.norm() <= tol


def _wedge_grid(a: GridForm, b: GridForm, rule: str, pairing) -> GridForm:
    _check_frame(a, b)
    if a.shape != b.shape:
        raise FrameMismatchError("grid shapes differ")
    t = a.frame.tables
    m_out = 1 if rule == "pairing" else max(a.m, b.m)
    weights = _pairing_weights(pairing, a.m) if rule == "pairing" else None
    acc: dict[int, np.ndarray] = {}
    for i, ma in enumerate(a.masks):
        for j, mb in enumerate(b.masks):
            s = t.wedge_sign[ma, mb]
            if s == 0:
                continue
            va, vb = a.values[i], b.values[j]
            if rule == "matmul":
                if a.m == 1 and b.m != 1:
                    prod = va[..., :1, :1] * vb
                elif b.m == 1 and a.m != 1:
                    prod = va * vb[..., :1, :1]
                else:
                    if a.m != b.m:
                        raise FrameMismatchError("matrix sizes differ")
                    prod = va @ vb
            elif rule == "commutator":
                prod = va @ vb - vb @ va
            elif rule == "pairing":
                prod = np.einsum("...ij,...ji,i->...", va, vb, weights)[..., None, None]
            else:
                raise ValueError(f"unknown multiplication rule {rule!r}")
            key = int(ma | mb)
            acc[key] = acc.get(key, 0) + s * prod
    if not acc:
        return GridForm(a.frame, a.shape, [], np.zeros((0,) + a.shape + (m_out, m_out)), approximate=a.approximate or b.approximate)
    keys = sorted(acc)
    return GridForm(a.frame, a.shape, keys, np.array([acc[k] for k in keys]), approximate=a.approximate or b.approximate)


def as_grid(x, shape) -> GridForm:
    if isinstance(x, GridForm):
        if x.shape != tuple(shape):
            return x.to_grid(shape)
        return x
    if isinstance(x, TrigForm):
        return GridForm.from_trig(x, shape)
    raise TypeError(f"cannot sample {type(x).__name__} on a grid")


def grid_shape_for(*forms, factor: int = 2, minimum: int = 1, extra: int = 1) -> tuple[int, ...]:
    """Smallest per-axis lattice that resolves products of the given forms.

    Axis a gets ``max(minimum, factor·Σ max|k_a| + extra)`` points, or 1 when
    none of the forms depends on that coordinate.
    """
    frame = forms[0].frame
    total = np.zeros(frame.dim, dtype=np.int64)
    for f in forms:
        if isinstance(f, TrigForm):
            total = total + f.max_abs_mode()
        elif isinstance(f, GridForm):
            total = total + np.array([(s - 1) // 2 for s in f.shape])
    return tuple(int(max(minimum, factor * k + extra)) if k > 0 else 1 for k in total)


# ---------------------------------------------------------------------------
# integration and Hermitian geometry


def integrate(alpha, orientation: str = "complex") -> complex:
    """∫_X α for a scalar top-degree form.

    With ``orientation="complex"`` (default) the result is the mean of the
    coefficient against ω₀ⁿ/n!, the canonical volume of the complex torus.
    ``orientation="coordinate"`` returns the mean coefficient of
    dx¹∧…∧dx^{2n} instead; the two differ by (−1)^{n(n−1)/2}.
    """
    frame = alpha.frame
    t = frame.tables
    if alpha.m != 1:
        raise DegreeError("integrand must be scalar valued")
    degs = alpha.degrees()
    if degs and degs != [frame.dim]:
        raise DegreeError(f"integrand must have degree {frame.dim}, found {degs}")
    if isinstance(alpha, TrigForm):
        sel = (alpha.masks == t.top) & ~np.any(alpha.modes, axis=1)
        c = complex(alpha.coeffs[sel, 0, 0].sum())
    else:
        c = complex(alpha.scalar_values(t.top).mean())
    if orientation == "complex":
        return c / t.vol0_coef
    if orientation == "coordinate":
        return c * t.c2r[t.top, t.top]
    raise ValueError("orientation must be 'complex' or 'coordinate'")


def top_coefficient(alpha):
    """Pointwise coefficient of a top form against ω₀ⁿ/n! (0-form of the same kind)."""
    t = alpha.frame.tables
    if isinstance(alpha, TrigForm):
        sel = alpha.masks == t.top
        return alpha._new(np.zeros(int(sel.sum()), dtype=np.int64), alpha.modes[sel], alpha.coeffs[sel] / t.vol0_coef)
    v = alpha.blade(t.top) / t.vol0_coef
    return GridForm(alpha.frame, alpha.shape, [0], v[None], approximate=alpha.approximate)


def volume_form(frame: TorusFrame, scale: complex = 1.0) -> TrigForm:
    """scale · ω₀ⁿ/n!."""
    t = frame.tables
    return TrigForm(frame, [t.top], np.zeros((1, frame.dim)), np.array([[[scale * t.vol0_coef]]]))


def hermitian_form(frame: TorusFrame, h) -> TrigForm:
    """(i/2) Σ h_{jk} dz^j∧dz̄^k for a constant Hermitian matrix h."""
    h = np.asarray(h, dtype=complex)
    out = TrigForm.zero(frame)
    for j in range(frame.n):
        for k in range(frame.n):
            if h[j, k] != 0:
                out = out + TrigForm.term(frame, [j, frame.n + k], None, 0.5j * h[j, k])
    return out


def standard_kahler_form(frame: TorusFrame) -> TrigForm:
    """ω₀ = (i/2) Σ dz^j∧dz̄^j = Σ dx^j∧dx^{n+j}."""
    return hermitian_form(frame, np.eye(frame.n))


def _power(omega, k: int):
    """ω^k / k!."""
    if k == 0:
        if isinstance(omega, TrigForm):
            return TrigForm.constant(omega.frame)
        return GridForm.scalar_field(omega.frame, np.ones(omega.shape))
    out = omega
    for j in range(2, k + 1):
        out = wedge(out, omega) / j
    return out


def omega_power(omega, k: int):
    """Public alias for ω^k/k!."""
    return _power(omega, k)


def hermitian_matrix(omega) -> np.ndarray:
    """Pointwise matrix h with ω = (i/2) Σ h_{jk} dz^j∧dz̄^k, shape (*shape, n, n)."""
    frame = omega.frame
    n = frame.n
    g = omega if isinstance(omega, GridForm) else omega.to_grid(grid_shape_for(omega))
    h = np.zeros(g.shape + (n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            mask = (1 << j) | (1 << (n + k))
            h[..., j, k] = g.blade(mask)[..., 0, 0] / 0.5j
    return h


def check_positive(omega, tol: float = 0.0) -> None:
    h = hermitian_matrix(omega)
    herm = 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))
    if np.abs(h - herm).max(initial=0.0) > 1e-9 * max(1.0, np.abs(h).max(initial=0.0)):
        raise PositivityError("form is not a real (1,1)-form")
    if np.linalg.eigvalsh(herm).min() <= tol:
        raise PositivityError("form is not positive on the evaluation grid")


def _mu_top(mu, frame, shape):
    if mu is None or (isinstance(mu, str) and mu == "standard"):
        return np.ones(shape)
    if isinstance(mu, (int, float, complex)):
        return np.full(shape, complex(mu))
    return as_grid(top_coefficient(mu), shape).scalar_values()


def dilaton_function(omega, mu=None, shape=None) -> GridForm:
    """f_ω = ½ log((ωⁿ/n!)/μ) sampled on a grid (flagged approximate).

    ``mu`` is a top form, a constant multiple of ω₀ⁿ/n!, or ``None`` for
    ω₀ⁿ/n! itself.
    """
    frame = omega.frame
    if shape is None:
        shape = omega.shape if isinstance(omega, GridForm) else grid_shape_for(omega, factor=2 * frame.n)
    g = as_grid(omega, shape)
    check_positive(g)
    vol = as_grid(top_coefficient(_power(g, frame.n)), shape).scalar_values()
    ratio = vol / _mu_top(mu, frame, shape)
    if np.any(ratio.real <= 0) or np.abs(ratio.imag).max() > 1e-9 * np.abs(ratio).max():
        raise PositivityError("ωⁿ/n! is not a positive multiple of μ")
    return GridForm.scalar_field(frame, 0.5 * np.log(ratio.real), approximate=True)


def lambda_contraction(omega, alpha, shape=None):
    """Trace Λ_ω α of a (1,1)-form and its primitive part α − (Λ_ω α) ω / n.

    For constant ω and a TrigForm α the result is exact (TrigForm); otherwise
    it is evaluated on a grid.
    """
    frame = omega.frame
    n = frame.n
    if isinstance(omega, TrigForm) and isinstance(alpha, TrigForm) and omega.is_constant():
        check_positive(omega)
        volc = top_coefficient(_power(omega, n)).coeffs[0, 0, 0]
        num = top_coefficient(wedge(alpha.types((1, 1)), _power(omega, n - 1)))
        lam = num * (1.0 / volc)
        prim = alpha - wedge(lam, omega) * (1.0 / n)
        return lam, prim
    if shape is None:
        shape = grid_shape_for(omega, alpha, factor=2 * n)
    g = as_grid(omega, shape)
    a = as_grid(alpha, shape)
    check_positive(g)
    vol = as_grid(top_coefficient(_power(g, n)), shape).scalar_values()
    num = as_grid(top_coefficient(wedge(a.types((1, 1)), _power(g, n - 1))), shape).scalar_values()
    lam = GridForm.scalar_field(frame, num / vol, approximate=True)
    prim = a - wedge(lam, g) * (1.0 / n)
    return lam, prim


# ---------------------------------------------------------------------------
# random sampling (used by tests and verification suites)


def random_form(
    frame: TorusFrame,
    rng: np.random.Generator,
    degree: int | None = None,
    bidegree: tuple[int, int] | None = None,
    *,
    n_terms: int = 3,
    max_mode: int = 2,
    m: int = 1,
    real: bool = False,
    axes: Sequence[int] | None = None,
    matrix_kind: str = "general",
    amplitude: float = 1.0,
) -> TrigForm:
    """Sparse random form with modes bounded by ``max_mode`` in sup norm.

    ``axes`` restricts the coordinates on which the coefficients depend.
    ``matrix_kind`` is ``general``, ``antihermitian`` or ``hermitian``.
    """
    t = frame.tables
    if bidegree is not None:
        masks = np.nonzero(frame.project_pq(*bidegree))[0]
    elif degree is not None:
        masks = np.nonzero(t.popcount == degree)[0]
    else:
        masks = np.arange(t.nb)
    axes = list(range(frame.dim)) if axes is None else list(axes)
    out = TrigForm.zero(frame, m)
    for _ in range(n_terms):
        k = np.zeros(frame.dim, dtype=np.int64)
        k[axes] = rng.integers(-max_mode, max_mode + 1, size=len(axes))
        mk = int(rng.choice(masks))
        c = amplitude * (rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))) / np.sqrt(2)
        if matrix_kind == "antihermitian":
            c = 0.5 * (c - c.conj().T)
        elif matrix_kind == "hermitian":
            c = 0.5 * (c + c.conj().T)
        out = out + TrigForm(frame, [mk], k[None], c[None])
    if real:
        out = out.real_part()
    return out


# ---------------------------------------------------------------------------
# serialization


def to_json(form: TrigForm) -> dict:
    """Serialize to ``{frame:{n}, entries:[{blade, mode, re, im}]}`` with real 1-based blades."""
    masks, modes, coeffs = form.real_coefficients()
    entries = []
    for mk, k, c in zip(masks, modes, coeffs):
        entries.append(
            {
                "blade": [a + 1 for a in _bits(int(mk))],
                "mode": [int(x) for x in k],
                "re": np.real(c).tolist(),
                "im": np.imag(c).tolist(),
            }
        )
    return {"frame": {"n": form.n}, "m": form.m, "entries": entries}


def from_json(doc: dict) -> TrigForm:
    frame = TorusFrame(int(doc["frame"]["n"]))
    m = int(doc.get("m", 1))
    terms = []
    for e in doc.get("entries", []):
        c = np.asarray(e["re"], dtype=float) + 1j * np.asarray(e["im"], dtype=float)
        terms.append((e["blade"], e["mode"], c.reshape(m, m)))
    if not terms:
        return TrigForm.zero(frame, m)
    return TrigForm.from_real_terms(frame, terms, m=m)


def basis_masks(frame: TorusFrame, degree: int | None = None, bidegree: tuple[int, int] | None = None) -> np.ndarray:
    t = frame.tables
    if bidegree is not None:
        return np.nonzero(frame.project_pq(*bidegree))[0]
    return np.nonzero(t.popcount == degree)[0]

