"""Mode-wise de Rham, Dolbeault, Bott–Chern and Aeppli cohomology on tori.

Every operator in sight (d, ∂, ∂̄, ∂∂̄) preserves the Fourier mode, so a
class is reduced one mode at a time: the component at mode k is replaced
by its orthogonal complement to the image of the exactness operator at k.
That choice (the minimal-norm representative) makes canonical
representatives reproducible and reduction idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np

from .forms import (
    DegreeError,
    GridForm,
    TorusFrame,
    TrigForm,
    integrate,
    wedge,
)

__all__ = [
    "FLAVORS",
    "ClosednessError",
    "CohomClass",
    "reduce_class",
    "duality_pairing",
    "del_connecting",
    "solve_exact",
    "closedness_residual",
    "constant_mode_dimension",
    "mode_dimension",
    "operator_matrix",
]

FLAVORS = ("deRham", "Dolbeault", "BottChern", "Aeppli", "H1Omega2cl")
CLOSED_TOL = 1e-10
SVD_RTOL = 1e-9


class ClosednessError(ValueError):
    """Input fails the closedness condition required by the flavor."""


# ---------------------------------------------------------------------------
# per-mode operator matrices


def _slots(frame: TorusFrame, op: str) -> range:
    if op == "d":
        return range(frame.dim)
    if op == "del":
        return range(frame.n)
    if op == "delbar":
        return range(frame.n, frame.dim)
    raise ValueError(op)


def _masks_of(frame: TorusFrame, types: Sequence) -> np.ndarray:
    """Blade masks for a list of bidegrees (tuples) or plain degrees (ints)."""
    t = frame.tables
    keep = np.zeros(t.nb, dtype=bool)
    for ty in types:
        if isinstance(ty, tuple):
            keep |= (t.p == ty[0]) & (t.q == ty[1])
        else:
            keep |= t.popcount == ty
    return np.nonzero(keep)[0]


def _single_op(frame: TorusFrame, k, op: str, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    t = frame.tables
    delta = frame.delta(np.asarray(k, dtype=float)[None])[0]
    where = {int(m): i for i, m in enumerate(dst)}
    A = np.zeros((len(dst), len(src)), dtype=complex)
    for j, mk in enumerate(src):
        mk = int(mk)
        for c in _slots(frame, op):
            if mk >> c & 1 or delta[c] == 0:
                continue
            out = mk | (1 << c)
            if out not in where:
                continue
            sign = -1.0 if t.popcount[mk & ((1 << c) - 1)] % 2 else 1.0
            A[where[out], j] += sign * delta[c]
    return A


def operator_matrix(frame: TorusFrame, k, ops: Sequence[str], src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Matrix of a composite operator (applied right to left) at mode k."""
    all_masks = np.arange(frame.tables.nb)
    cur_src = src
    M = None
    for i, op in enumerate(reversed(ops)):
        target = dst if i == len(ops) - 1 else all_masks
        A = _single_op(frame, k, op, cur_src, target)
        M = A if M is None else A @ M
        cur_src = target
    return M


@dataclass(frozen=True)
class _Flavor:
    closed: list  # list of composite ops, each a tuple of op names
    exact: list  # list of (composite ops, source types)


def _flavor(name: str, types: tuple) -> _Flavor:
    if name == "deRham":
        (k,) = types
        return _Flavor([("d",)], [(("d",), [k - 1])])
    if name == "H1Omega2cl":
        return _Flavor([("d",)], [(("d",), [(2, 0)])])
    p, q = types
    if name == "Dolbeault":
        return _Flavor([("delbar",)], [(("delbar",), [(p, q - 1)])])
    if name == "BottChern":
        return _Flavor([("del",), ("delbar",)], [(("del", "delbar"), [(p - 1, q - 1)])])
    if name == "Aeppli":
        return _Flavor([("del", "delbar")], [(("del",), [(p - 1, q)]), (("delbar",), [(p, q - 1)])])
    raise ValueError(f"unknown flavor {name!r}")


def _target_types(name: str, types: tuple) -> list:
    if name == "deRham":
        return [types[0]]
    if name == "H1Omega2cl":
        return [(3, 0), (2, 1)]
    return [types]


def _valid_source(frame: TorusFrame, types) -> list:
    out = []
    for ty in types:
        if isinstance(ty, tuple):
            if min(ty) >= 0 and max(ty) <= frame.n:
                out.append(ty)
        elif 0 <= ty <= frame.dim:
            out.append(ty)
    return out


def _exact_matrix(frame: TorusFrame, k, flav: _Flavor, dst: np.ndarray) -> np.ndarray:
    blocks = []
    for ops, src_types in flav.exact:
        src = _masks_of(frame, _valid_source(frame, src_types))
        if len(src):
            blocks.append(operator_matrix(frame, k, ops, src, dst))
    if not blocks:
        return np.zeros((len(dst), 0), dtype=complex)
    return np.hstack(blocks)


def _range_basis(A: np.ndarray, rtol: float = SVD_RTOL) -> np.ndarray:
    if A.size == 0:
        return np.zeros((A.shape[0], 0), dtype=complex)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if not len(s) or s[0] == 0:
        return np.zeros((A.shape[0], 0), dtype=complex)
    return U[:, s > rtol * s[0]]


def _by_mode(form: TrigForm, dst: np.ndarray):
    """Yield (mode, coefficient block (len(dst), m*m)) for each mode present."""
    where = {int(m): i for i, m in enumerate(dst)}
    if not len(form):
        return
    keys, inv = np.unique(form.modes, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mm = form.m * form.m
    for j, k in enumerate(keys):
        sel = np.nonzero(inv == j)[0]
        block = np.zeros((len(dst), mm), dtype=complex)
        for t in sel:
            mk = int(form.masks[t])
            if mk not in where:
                raise DegreeError("form has components outside the class bidegree")
            block[where[mk]] += form.coeffs[t].reshape(-1)
        yield k, block


def _assemble(frame: TorusFrame, m: int, dst: np.ndarray, pieces) -> TrigForm:
    masks, modes, coeffs = [], [], []
    for k, block in pieces:
        for i, mk in enumerate(dst):
            if np.any(block[i] != 0):
                masks.append(mk)
                modes.append(k)
                coeffs.append(block[i].reshape(m, m))
    if not masks:
        return TrigForm.zero(frame, m)
    return TrigForm(frame, masks, np.array(modes), np.array(coeffs), m=m)


# ---------------------------------------------------------------------------
# classes


@dataclass(frozen=True)
class CohomClass:
    """A cohomology class with its canonical (minimal-norm) representative.

    ``types`` is ``(p, q)`` for the Hodge-type flavors and ``(k,)`` for de Rham.
    """

    flavor: str
    types: tuple
    representative: TrigForm
    real: bool

    def is_zero(self, tol: float = 1e-9) -> bool:
        return self.representative.norm() <= tol

    def norm(self) -> float:
        return self.representative.norm()

    def __add__(self, other: "CohomClass") -> "CohomClass":
        self._compatible(other)
        return reduce_class(self.representative + other.representative, self.flavor, self.types, check=False)

    def __sub__(self, other: "CohomClass") -> "CohomClass":
        self._compatible(other)
        return reduce_class(self.representative - other.representative, self.flavor, self.types, check=False)

    def __mul__(self, scalar) -> "CohomClass":
        return CohomClass(self.flavor, self.types, self.representative * scalar, self.real and np.isreal(scalar))

    __rmul__ = __mul__

    def _compatible(self, other: "CohomClass") -> None:
        if (self.flavor, self.types) != (other.flavor, other.types):
            raise DegreeError("classes live in different groups")


def _infer_types(form: TrigForm, flavor: str) -> tuple:
    if flavor == "deRham":
        return (form.degree,)
    if flavor == "H1Omega2cl":
        return (3,)
    bd = form.bidegrees()
    if len(bd) != 1:
        raise DegreeError(f"form is not of pure type: {bd}")
    return bd[0]


def closedness_residual(form: TrigForm, flavor: str, types: tuple | None = None) -> float:
    if types is None:
        types = _infer_types(form, flavor)
    flav = _flavor(flavor, types)
    worst = 0.0
    for ops in flav.closed:
        out = form
        for op in reversed(ops):
            out = {"d": out.d, "del": out.del_, "delbar": out.delbar}[op]()
        worst = max(worst, out.norm())
    return worst


def reduce_class(
    alpha,
    flavor: str,
    types: tuple | None = None,
    *,
    check: bool = True,
    tol: float = CLOSED_TOL,
) -> CohomClass:
    """Canonical representative of the class of ``alpha`` in the given flavor.

    ``types`` may be omitted when ``alpha`` is nonzero and of pure type.
    Closedness is verified to ``tol`` relative to ``max(1, ‖alpha‖)``.
    """
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}")
    if isinstance(alpha, GridForm):
        alpha = alpha.to_trig()
    frame = alpha.frame
    if types is None:
        types = _infer_types(alpha, flavor)
    types = tuple(types)
    if check:
        res = closedness_residual(alpha, flavor, types)
        if res > tol * max(1.0, alpha.norm()):
            raise ClosednessError(f"{flavor} closedness residual {res:.3e}")
    flav = _flavor(flavor, types)
    dst = _masks_of(frame, _target_types(flavor, types))
    pieces = []
    for k, block in _by_mode(alpha, dst):
        if np.any(k):
            Q = _range_basis(_exact_matrix(frame, k, flav, dst))
            block = block - Q @ (Q.conj().T @ block)
        pieces.append((k, block))
    rep = _assemble(frame, alpha.m, dst, pieces)
    return CohomClass(flavor, types, rep, alpha.is_real())


def solve_exact(alpha: TrigForm, flavor: str, types: tuple | None = None):
    """Least-squares preimage under the exactness operator, mode by mode.

    Returns ``(sources, residual)`` where ``sources`` is a list of TrigForms,
    one per exactness block (e.g. ``[φ, ψ]`` with ∂φ + ∂̄ψ ≈ α for Aeppli),
    each of minimal norm, and ``residual`` is α minus their image.
    """
    if isinstance(alpha, GridForm):
        alpha = alpha.to_trig()
    frame = alpha.frame
    if types is None:
        types = _infer_types(alpha, flavor)
    flav = _flavor(flavor, tuple(types))
    dst = _masks_of(frame, _target_types(flavor, tuple(types)))
    srcs = [_masks_of(frame, _valid_source(frame, st)) for _, st in flav.exact]
    out_pieces = [[] for _ in srcs]
    res_pieces = []
    for k, block in _by_mode(alpha, dst):
        mats = [
            operator_matrix(frame, k, ops, src, dst) if len(src) else np.zeros((len(dst), 0))
            for (ops, _), src in zip(flav.exact, srcs)
        ]
        A = np.hstack(mats) if mats else np.zeros((len(dst), 0))
        if A.shape[1] and np.any(k):
            x, *_ = np.linalg.lstsq(A, block, rcond=SVD_RTOL)
        else:
            x = np.zeros((A.shape[1], block.shape[1]), dtype=complex)
        res_pieces.append((k, block - A @ x))
        off = 0
        for i, M in enumerate(mats):
            out_pieces[i].append((k, x[off : off + M.shape[1]]))
            off += M.shape[1]
    sources = [_assemble(frame, alpha.m, src, pcs) for src, pcs in zip(srcs, out_pieces)]
    return sources, _assemble(frame, alpha.m, dst, res_pieces)


def duality_pairing(a: CohomClass, b: CohomClass) -> complex:
    """∫ α∧β for classes of complementary bidegree (Aeppli × Bott–Chern)."""
    n = a.representative.frame.n
    if len(a.types) != 2 or len(b.types) != 2:
        raise DegreeError("duality pairing needs bidegrees")
    if (a.types[0] + b.types[0], a.types[1] + b.types[1]) != (n, n):
        raise DegreeError(f"bidegrees {a.types} and {b.types} are not complementary")
    prod = wedge(a.representative, b.representative)
    if prod.m != 1:
        prod = prod.trace()
    return integrate(prod)


def del_connecting(a: CohomClass) -> CohomClass:
    """Class of ∂α in Ker d on Ω^{3,0}⊕Ω^{2,1} modulo d Ω^{2,0}."""
    if a.flavor != "Aeppli" or a.types != (1, 1):
        raise DegreeError("connecting map is defined on Aeppli (1,1) classes")
    alpha = a.representative
    beta = alpha.del_()
    if not len(beta):
        beta = TrigForm.zero(alpha.frame, alpha.m)
    return reduce_class(beta, "H1Omega2cl", (3,))


# ---------------------------------------------------------------------------
# dimension counts


def mode_dimension(frame: TorusFrame, k, flavor: str, types: tuple) -> int:
    """dim(closed)/dim(exact) at a single Fourier mode."""
    types = tuple(types)
    flav = _flavor(flavor, types)
    dst = _masks_of(frame, _target_types(flavor, types))
    blocks = [operator_matrix(frame, k, ops, dst, np.arange(frame.tables.nb)) for ops in flav.closed]
    C = np.vstack(blocks)
    s = np.linalg.svd(C, compute_uv=False) if C.size else np.zeros(0)
    rank_c = int(np.sum(s > SVD_RTOL * s[0])) if len(s) and s[0] > 0 else 0
    kernel = len(dst) - rank_c
    E = _exact_matrix(frame, k, flav, dst)
    rank_e = _range_basis(E).shape[1] if np.any(np.asarray(k)) else 0
    return kernel - rank_e


def constant_mode_dimension(n: int, flavor: str, types: tuple) -> int:
    """Dimension contributed by constant forms (all differentials vanish there)."""
    if flavor == "deRham":
        return comb(2 * n, types[0])
    if flavor == "H1Omega2cl":
        return comb(n, 3) + comb(n, 2) * n
    p, q = types
    return comb(n, p) * comb(n, q)
