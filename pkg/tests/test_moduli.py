import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stringalg.dilaton import Configuration, TangentW, g_ell
from stringalg.forms import DegreeError, TorusFrame, TrigForm, hermitian_form, random_form, standard_kahler_form, wedge
from stringalg.forms import omega_power
from stringalg.gauge import Connection, PairingSpec, random_algebra_element
from stringalg.moduli import (
    BackgroundError,
    ComplexifiedClass,
    ConeError,
    IntersectionRing,
    NonHolomorphicError,
    check_ell_window,
    condition_a,
    cone_metric,
    cone_metric_matrix,
    conjecture_margin,
    deformation_dimension,
    ell_window,
    fibre_metric,
    futaki,
    gauge_fix,
    gauge_residuals,
    hodge_star,
    lefschetz_primitive,
    linearized_L,
    mode_operator,
    p_hat,
    p_hat_adjoint,
    pairing_ell,
    potential_hessian_fd,
    potential_K,
    ring_fibre_inputs,
    variation_classes,
)

AX = [0, 1]
QUINTIC = IntersectionRing.from_entries(1, [(1, 1, 1, 5)])
TWO = IntersectionRing.from_entries(2, [(1, 1, 1, 8), (1, 1, 2, 4)])


def real(x):
    return (x + x.conj()) * 0.5


def flat(n, P, seed, ell=1.5):
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    H = H @ H.conj().T + n * np.eye(n)
    F = TorusFrame(n)
    return rng, Configuration(hermitian_form(F, H), TrigForm.zero(F), TrigForm.zero(F, P.m), ell, P)


def tangent(W, rng):
    F, P = W.frame, W.pairing
    w = real(random_form(F, rng, bidegree=(1, 1), n_terms=3, max_mode=1, axes=AX, amplitude=0.3))
    b = real(random_form(F, rng, 2, n_terms=3, max_mode=1, axes=AX, amplitude=0.3))
    a = random_algebra_element(F, rng, P, degree=1, n_terms=3, max_mode=1, axes=AX, amplitude=0.3, compact=True)
    return TangentW(w, b, a)


def gauge_direction(W, rng):
    F, P = W.frame, W.pairing
    u = random_algebra_element(F, rng, P, degree=0, n_terms=2, max_mode=1, axes=AX, amplitude=0.3, compact=True)
    xi = real(random_form(F, rng, 1, n_terms=3, max_mode=1, axes=AX, amplitude=0.3))
    return u, xi


CASES = [(2, PairingSpec.single(1)), (2, PairingSpec.single(2)), (3, PairingSpec.single(1))]
IDS = ["n2-u1", "n2-u2", "n3-u1"]


# -- linearized complex ---------------------------------------------------------


@pytest.mark.parametrize("n,P", CASES, ids=IDS)
def test_linearization_kills_gauge_directions(n, P):
    rng, W = flat(n, P, 2)
    Py = p_hat(W, *gauge_direction(W, rng))
    assert max(x.norm() for x in linearized_L(W, Py).values()) < 1e-10


@pytest.mark.parametrize("n,P", CASES, ids=IDS)
def test_adjoint_of_p_hat(n, P):
    rng, W = flat(n, P, 3)
    v = tangent(W, rng)
    y = gauge_direction(W, rng)
    lhs = g_ell(W, v, p_hat(W, *y))
    rhs = pairing_ell(W, p_hat_adjoint(W, v), y)
    assert abs(lhs - rhs) < 1e-6 * max(1.0, abs(lhs))


@pytest.mark.parametrize("n,P", CASES, ids=IDS)
def test_gauge_fix(n, P):
    rng, W = flat(n, P, 4)
    v = tangent(W, rng)
    gf = gauge_fix(W, v)
    assert max(gf.residuals.values()) < 1e-8
    assert max(gauge_residuals(W, gf.tangent).values()) < 1e-8
    again = gauge_fix(W, gf.tangent)
    assert (again.tangent - gf.tangent).norm() < 1e-10
    pure = gauge_fix(W, p_hat(W, *gauge_direction(W, rng)))
    assert pure.tangent.norm() < 1e-10


@pytest.mark.parametrize("n,P,su,expected", [
    (2, PairingSpec.single(1), False, 1),
    (2, PairingSpec.single(2), False, 4),
    (2, PairingSpec.single(2), True, 3),
    (3, PairingSpec.single(1), False, 1),
])
def test_condition_a_kernel(n, P, su, expected):
    _, W = flat(n, P, 5)
    rep = condition_a(W, 1, su=su, axes=AX)
    assert rep.constant_kernel == expected
    assert rep.nonconstant_kernel == 0
    assert rep.all_square
    if not su:
        # with su the trace part of P̂*v is projected away, so only full gl is exact
        assert rep.max_projection_residual < 1e-10


def test_mode_matrices_compose_to_zero():
    _, W = flat(2, PairingSpec.single(2), 6)
    for k in ([0, 0, 0, 0], [1, 0, 0, 0], [1, -1, 0, 0]):
        op = mode_operator(W, k)
        assert np.abs(op.L @ op.P).max() < 1e-10 * max(1.0, np.abs(op.L).max() * np.abs(op.P).max())
        assert op.square


def test_condition_a_needs_flat_background():
    F = TorusFrame(2)
    P = PairingSpec.single(1)
    th = random_form(F, np.random.default_rng(0), 1, n_terms=2, max_mode=1, axes=AX) * 0.3
    th = (th - th.dagger()) * 0.5
    W = Configuration(standard_kahler_form(F), TrigForm.zero(F), TrigForm.zero(F), 1.5, P, theta0=th)
    with pytest.raises(BackgroundError):
        condition_a(W, 1, axes=AX)


def test_hodge_star_on_top_and_odd_forms():
    rng, W = flat(2, PairingSpec.single(1), 7)
    om = W.omega
    star = hodge_star(W, omega_power(om, 2))
    assert abs(star.coeffs.ravel()[0] - 1.0) < 1e-13
    eta = real(random_form(W.frame, rng, 1, n_terms=3, max_mode=1, axes=AX))
    psi = wedge(eta.complex_J(), om)
    assert (hodge_star(W, psi) + eta).norm() < 1e-12
    with pytest.raises(DegreeError):
        hodge_star(W, om)


# -- fibre metric on the torus --------------------------------------------------


@pytest.mark.parametrize("mu", ["standard", "holomorphic"])
@pytest.mark.parametrize("ell", [1.0, 1.5, 2.5])
def test_fibre_metric_matches_dilaton_metric(mu, ell):
    n = 3
    rng = np.random.default_rng(4)
    F = TorusFrame(n)

    def rh(s):
        X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        return (X + X.conj().T) * 0.5 * s

    H = rh(1.0)
    H = H @ H + n * np.eye(n)
    W = Configuration(hermitian_form(F, H), TrigForm.zero(F), TrigForm.zero(F), ell, PairingSpec.single(1), mu=mu)
    wd, bd = hermitian_form(F, rh(0.3)), hermitian_form(F, rh(0.3))
    vc = variation_classes(W, wd, bd)
    g = g_ell(W, TangentW(wd, bd, TrigForm.zero(F)))
    assert abs(fibre_metric(vc.a_dot, vc.b_dot, vc.b, vc.M, ell) - g) < 1e-9 * max(1.0, abs(g))


def test_variation_classes_reject_unsolved_fibre_system():
    _, W = flat(3, PairingSpec.single(1), 1, ell=1.0)
    F = W.frame
    wd = real(random_form(F, np.random.default_rng(1), bidegree=(1, 1), n_terms=2, max_mode=1, axes=AX))
    with pytest.raises(BackgroundError):
        variation_classes(W, wd, TrigForm.zero(F))


def test_futaki_of_constant_section_on_trivial_bundle():
    F = TorusFrame(2)
    P = PairingSpec.single(1)
    s = TrigForm.constant(F, 1j)
    assert futaki(s, Connection.trivial(F, P)).is_zero()
    with pytest.raises(NonHolomorphicError):
        futaki(TrigForm.fourier(F, [1, 0, 0, 0]), Connection.trivial(F, P))


# -- intersection rings ----------------------------------------------------------


@pytest.mark.parametrize("ell", [1.0, 1.5, 1.8, 2.5])
def test_quintic_metric_closed_form(ell):
    """K = −(2−ℓ)/2 log(5t³/6) ⇒ g = K''(t) = 3(2−ℓ)/(2t²)."""
    for t in (0.5, 1.0, 2.0):
        G = cone_metric_matrix(QUINTIC, [t], ell)
        assert abs(G[0, 0] - 3 * (2 - ell) / (2 * t * t)) < 1e-12
        assert abs(potential_K(QUINTIC, [t], ell) + 0.5 * (2 - ell) * np.log(5 * t**3 / 6)) < 1e-14


points = st.tuples(st.floats(0.3, 3.0), st.floats(0.3, 3.0))
directions = st.tuples(*(st.floats(-2, 2) for _ in range(4)))


@settings(max_examples=30, deadline=None)
@given(points, directions, st.sampled_from([1.0, 1.5, 1.8, 2.5]))
def test_cone_metric_paths_agree(t, d, ell):
    t = np.array(t)
    ad = np.array(d[:2]) + 1j * np.array(d[2:])
    G = cone_metric_matrix(TWO, t, ell)
    g = cone_metric(TWO, t, ell, ad)
    assert abs(g - (ad.real @ G @ ad.real + ad.imag @ G @ ad.imag)) < 1e-10 * max(1.0, abs(g))
    inp = ring_fibre_inputs(TWO, t, ad, ell)
    assert abs(fibre_metric(inp["a_dot"], inp["b_dot"], inp["b"], inp["M"], ell) - g) < 1e-9 * max(1.0, abs(g))


@settings(max_examples=20, deadline=None)
@given(points, st.sampled_from([1.5, 1.8, 2.5]))
def test_metric_is_complex_hessian(t, ell):
    t = np.array(t)
    G = cone_metric_matrix(TWO, t, ell)
    H = potential_hessian_fd(TWO, t, ell)
    assert np.abs(H - G).max() < 1e-5 * max(1.0, np.abs(G).max())


@settings(max_examples=20, deadline=None)
@given(points)
def test_signature_flips_across_level_two(t):
    t = np.array(t)
    assert np.linalg.eigvalsh(cone_metric_matrix(TWO, t, 1.5)).min() > 0
    assert np.linalg.eigvalsh(cone_metric_matrix(TWO, t, 2.5)).max() < 0


@settings(max_examples=30, deadline=None)
@given(points, st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_conjecture_margin_positive_at_level_one(t, d):
    d = np.array(d)
    inp = ring_fibre_inputs(TWO, np.array(t), d, 1.0)
    m = conjecture_margin(inp["a_dot"][0], inp["b_dot"][0], inp["b"], inp["M"])
    if np.abs(d).max() > 1e-6:
        assert m > 0
    z = ring_fibre_inputs(TWO, np.array(t), np.zeros(2), 1.0)
    assert conjecture_margin(z["a_dot"][0], z["b_dot"][0], z["b"], z["M"]) == 0.0


def test_lefschetz_primitive_is_orthogonal_to_t_squared():
    t = np.array([1.0, 0.7])
    x0 = lefschetz_primitive(TWO, t, np.array([0.3, -1.1]))
    assert abs(TWO.cubic(x0, t, t)) < 1e-14


def test_cone_errors():
    with pytest.raises(ConeError):
        potential_K(QUINTIC, [-1.0], 1.5)
    assert not ComplexifiedClass.of([-1.0 + 2j]).in_cone(QUINTIC)
    assert ComplexifiedClass.of([1.0 + 2j]).in_cone(QUINTIC)
    with pytest.raises(ValueError):
        conjecture_margin([1.0], [1.0], [1.0], -1.0)


def test_ring_io(tmp_path):
    doc = TWO.to_json()
    assert np.array_equal(IntersectionRing.from_json(json.loads(json.dumps(doc))).kappa, TWO.kappa)
    p = tmp_path / "ring.csv"
    p.write_text("i,j,k,value\n1,1,1,8\n1,1,2,4\n")
    assert np.array_equal(IntersectionRing.from_csv(p).kappa, TWO.kappa)
    k = np.zeros((2, 2, 2))
    k[0, 0, 1] = 1.0
    with pytest.raises(ValueError):
        IntersectionRing(k, 1.0)


# -- counts ---------------------------------------------------------------------


def test_deformation_dimension():
    assert deformation_dimension(224) == 450
    assert deformation_dimension(0) == 2
    for bad in (-1, 1.5, True):
        with pytest.raises(ValueError):
            deformation_dimension(bad)


def test_level_window():
    assert ell_window(3) == pytest.approx((4.0 / 3.0, 2.0), abs=1e-15)
    check_ell_window(1.5, 3)
    for bad in (4.0 / 3.0, 2.0, 1.0, 2.5):
        with pytest.raises(ValueError):
            check_ell_window(bad, 3)
