import numpy as np
import pytest

from stringalg.courant import CourantData, e0_bracket, e0_pairing, random_section
from stringalg.forms import TorusFrame, TrigForm, as_grid
from stringalg.gauge import Connection, PairingSpec, random_algebra_element
from stringalg.picard import (
    ConstraintError,
    PicardElement,
    PicLieElement,
    aeppli_hom,
    dr_hom,
    exp_path,
    hamiltonian_member,
    lie_bracket,
    pic_act,
    pic_adjoint,
    pic_compose,
    pic_identity,
    pic_inverse,
    random_lie_element,
)

SHAPE = (32, 32, 1, 1)
P = PairingSpec((2, 1), (-1.0, 1.0))


@pytest.fixture(scope="module", params=[11, 12])
def setup(request):
    F = TorusFrame(2)
    rng = np.random.default_rng(request.param)
    th = random_algebra_element(F, rng, P, degree=1, n_terms=2, max_mode=1, axes=[0, 1], amplitude=0.5)
    conn = Connection(th, P)
    zs = [random_lie_element(conn, rng) for _ in range(3)]
    ps = [exp_path(z, conn, [1.0], SHAPE, tol=None)[0] for z in zs]
    return F, rng, conn, zs, ps


def test_exp_path_satisfies_constraint(setup):
    _, _, conn, zs, ps = setup
    assert all(z.residual(conn) < 1e-12 for z in zs)
    assert all(p.residual() < 1e-6 for p in ps)


def test_exp_path_starts_at_identity(setup):
    _, _, conn, zs, _ = setup
    p0 = exp_path(zs[0], conn, [0.0], SHAPE)[0]
    e = pic_identity(conn, SHAPE)
    assert (p0.g - e.g).norm() < 1e-14 and p0.tau.norm() == 0.0


def test_group_axioms(setup):
    _, _, conn, _, (p1, p2, p3) = setup
    a = pic_compose(pic_compose(p1, p2), p3)
    b = pic_compose(p1, pic_compose(p2, p3))
    assert (a.g - b.g).norm() < 1e-8 and (a.tau - b.tau).norm() < 1e-8
    e = pic_compose(p1, pic_inverse(p1))
    assert (e.g - pic_identity(conn, SHAPE).g).norm() < 1e-8 and e.tau.norm() < 1e-8
    left = pic_compose(pic_identity(conn, SHAPE), p2)
    assert (left.g - p2.g).norm() < 1e-12 and (left.tau - p2.tau).norm() < 1e-12


def test_action_is_orthogonal_homomorphism_and_symmetry(setup):
    F, rng, conn, _, (p1, p2, _) = setup
    u, v = (random_section(F, rng, P, axes=[0, 1]) for _ in range(2))
    assert (pic_act(pic_compose(p1, p2), u) - pic_act(p1, pic_act(p2, u))).norm() < 1e-8
    lhs = e0_pairing(pic_act(p1, u), pic_act(p1, v), P)
    assert (lhs - as_grid(e0_pairing(u, v, P), SHAPE)).norm() < 1e-8
    data = CourantData(as_grid(CourantData.from_connection(conn).H, SHAPE), Connection(as_grid(conn.theta, SHAPE), P))
    assert (pic_act(p1, e0_bracket(u, v, data)) - e0_bracket(pic_act(p1, u), pic_act(p1, v), data)).norm() < 1e-8


def test_adjoint_is_homomorphism(setup):
    _, _, conn, (z, _, _), (p1, p2, _) = setup
    A = pic_adjoint(pic_compose(p1, p2), z, tol=None)
    B = pic_adjoint(p1, pic_adjoint(p2, z, tol=None), tol=None)
    assert (A.s - B.s).norm() < 1e-8 and (A.B - B.B).norm() < 1e-8
    assert A.residual(Connection(as_grid(conn.theta, SHAPE), P)) < 1e-7


def test_aeppli_image_is_adjoint_invariant(setup):
    _, _, conn, (z, _, _), (p1, _, _) = setup
    before = aeppli_hom(z, conn).representative
    after = aeppli_hom(pic_adjoint(p1, z), conn).representative
    assert (after - before).norm() < 1e-8


def test_bracket_jacobi_and_antisymmetry(setup):
    _, _, conn, (x, y, w), _ = setup
    br = lambda a, b: lie_bracket(a, b, conn)  # noqa: E731
    J = br(x, br(y, w)) + br(y, br(w, x)) + br(w, br(x, y))
    assert J.s.norm() < 1e-10 and J.B.norm() < 1e-10
    S = br(x, y) + br(y, x)
    assert S.s.norm() < 1e-12 and S.B.norm() < 1e-12


def test_hamiltonian_elements_have_zero_aeppli_image():
    F = TorusFrame(2)
    conn = Connection.trivial(F, PairingSpec.single(1))
    xi = TrigForm.term(F, [F.slot("z", 1)], [1, 0, 0, 0])
    z = PicLieElement(TrigForm.zero(F), xi.d())
    ok, (phi, psi) = hamiltonian_member(z, conn)
    assert ok
    assert aeppli_hom(z, conn).is_zero(1e-12)
    c = PicLieElement(TrigForm.zero(F), TrigForm.from_real_terms(F, [((1, 3), None, 1.0)]))
    assert not hamiltonian_member(c, conn)[0]
    assert not dr_hom(c, conn).is_zero()


def test_constraint_violation_is_detected():
    F = TorusFrame(2)
    conn = Connection.trivial(F, PairingSpec.single(1))
    e = pic_identity(conn, (8, 8, 1, 1))
    tau = as_grid(TrigForm.term(F, [0, 1], [1, 0, 0, 0]), (8, 8, 1, 1))
    bad = PicardElement(e.g, tau, conn)
    assert bad.residual() > 0.1
    with pytest.raises(ConstraintError):
        pic_compose(bad, e)
