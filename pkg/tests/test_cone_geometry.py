import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from moving_obstacles.boundary import (
    CircleCurve,
    StefanovWallParams,
    TranslatingCurve,
    build_stefanov_wall,
    eval_boundary,
    timelike_margin,
)
from moving_obstacles.cone_geometry import (
    EvenPeriodic,
    RigidMotion,
    SlowUniform,
    VectorField,
    assemble_form,
    boundary_extension_field,
    boundary_normal,
    build_psi,
    classify_vector,
    cone_algebra_survey,
    finite_difference_jacobian,
    flow_from_field,
    jacobian_bound_check,
    linear_field,
    p2,
    pulse_swirl_field,
    random_form,
    rigid_rotation_field,
    tangent_timelike_vector,
    tau_roots,
    wave_form,
    zero_field,
)
from moving_obstacles.errors import (
    ConfigError,
    HypothesisViolation,
    PropertyViolation,
    TimelikeViolation,
)

SEEDS = np.array([[0.5, 0.0], [0.0, -0.8], [0.3, 0.4], [-0.2, 0.1]])


class TestForms:
    def test_wave_form(self):
        f = wave_form(2)
        np.testing.assert_array_equal(f.B, np.diag([-1.0, -1.0, 1.0]))
        assert f.binv_tt == pytest.approx(1.0)
        assert f.lam0 == pytest.approx(1.0)
        np.testing.assert_allclose(f.e0, [0, 0, 1], atol=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_determinant_identity(self, n, rng):
        for _ in range(20):
            f = random_form(rng, n)
            direct = np.linalg.inv(f.B)[n, n]
            predicted = (-1) ** n * np.linalg.det(f.A) / np.linalg.det(f.B)
            assert predicted == pytest.approx(direct, rel=1e-10)
            assert f.binv_tt > 0 and f.a_positive_definite

    def test_indefinite_A_rejected(self):
        with pytest.raises(HypothesisViolation) as info:
            assemble_form(np.diag([1.0, -0.5]))
        assert info.value.payload["hypothesis"] == "signature"

    def test_bad_shapes(self):
        with pytest.raises(ConfigError):
            assemble_form(np.eye(2), [1.0, 2.0, 3.0])
        with pytest.raises(ConfigError):
            assemble_form([[1.0, 0.5], [0.0, 1.0]])


class TestTauRoots:
    def test_wave_roots(self):
        tm, tp = tau_roots(wave_form(2), [3.0, 4.0])
        assert (tm, tp) == (-5.0, 5.0)

    def test_substitution_and_signs(self, rng):
        for _ in range(200):
            f = random_form(rng, a_scale=3.0)
            xi = rng.normal(size=f.n)
            tm, tp = tau_roots(f, xi)
            assert tm < 0 < tp
            for tau in (tm, tp):
                assert abs(p2(f, xi, tau)) <= 1e-12 * (xi @ xi + tau * tau)

    def test_cancellation_free(self):
        # a dominates: the small root is recovered from Vieta, not by subtraction
        f = assemble_form(np.array([[1e-8]]), [1e4])
        tm, tp = tau_roots(f, [1.0])
        assert tm * tp == pytest.approx(-1e-8, rel=1e-12)

    def test_zero_covector(self):
        with pytest.raises(ConfigError):
            tau_roots(wave_form(2), [0.0, 0.0])


class TestClassification:
    def test_vectors(self):
        f = wave_form(2)
        assert classify_vector(f, [0.3, 0.1, 1.0]).kind == "TimelikeVector"
        assert classify_vector(f, [0.6, 0.8, 1.0]).kind == "Null"
        assert classify_vector(f, [1.0, 0.1, 0.5]).kind == "Spacelike"

    def test_covectors(self):
        f = wave_form(2)
        c = classify_vector(f, [1.0, 0.0, 0.5], covector=True)
        assert c.kind == "TimelikeSurfaceNormal" and c.margin == pytest.approx(0.75)
        assert classify_vector(f, [0.0, 0.0, 1.0], covector=True).kind == "Spacelike"

    def test_orthogonality_lemma(self, rng):
        # every nonzero covector annihilating a time-like vector has w.B w < 0
        for _ in range(300):
            f = random_form(rng)
            v = np.zeros(f.n + 1)
            v[-1] = 1.0
            v[:-1] = 0.1 * rng.normal(size=f.n)
            if f.vector_quad(v) <= 0:
                continue
            w = rng.normal(size=f.n + 1)
            w -= (w @ v) / (v @ v) * v
            assert f.covector_quad(w) < 0

    def test_survey(self):
        s = cone_algebra_survey(300, seed=3)
        assert s.ok()
        assert s.tau_sign_failures == 0 and s.orthogonality_violations == 0
        assert s.orthogonality_tested > 200


class TestTangentVector:
    def test_identities(self, rng):
        for _ in range(100):
            f = random_form(rng)
            nu = rng.normal(size=f.n + 1)
            if f.covector_quad(nu) >= 0:
                continue
            tv = tangent_timelike_vector(f, nu)
            assert tv.d @ tv.nu == pytest.approx(0.0, abs=1e-12)
            assert tv.margin == pytest.approx(1 / f.lam0 - tv.a0**2, rel=1e-10)
            assert tv.margin > 0

    def test_degenerates_near_null_normal(self):
        f = wave_form(2)
        margins = [tangent_timelike_vector(f, [1.0, 0.0, 1.0 - e]).margin
                   for e in (1e-1, 1e-2, 1e-3)]
        assert margins[0] > margins[1] > margins[2] > 0
        with pytest.raises(HypothesisViolation):
            tangent_timelike_vector(f, [1.0, 0.0, 1.0])

    @pytest.mark.parametrize("curve", [CircleCurve(), TranslatingCurve(0.5, (0.1, 0.05), time_period=2.0),
                                       build_stefanov_wall(StefanovWallParams())],
                             ids=["circle", "translating", "wall"])
    def test_normal_margin_matches_boundary(self, curve, rng):
        lo, hi = (-4.0, 4.0) if hasattr(curve, "params") else (0.0, 1.0)
        sig = rng.uniform(lo, hi, 300)
        t = rng.uniform(0, 2, 300)
        _, xs, xt = eval_boundary(curve, sig, t)
        N = boundary_normal(xs, xt)
        f = wave_form(2)
        np.testing.assert_allclose(-f.covector_quad(N), timelike_margin(curve, sig, t),
                                   rtol=1e-12, atol=1e-12)


class TestFlows:
    def test_rotation_preserves_norm(self):
        fl = flow_from_field(rigid_rotation_field(0.5), SEEDS, (0.0, 2.0), n_steps=400)
        r = np.linalg.norm(fl.F, axis=-1)
        np.testing.assert_allclose(r, np.broadcast_to(np.linalg.norm(SEEDS, axis=-1), r.shape), rtol=1e-10)
        # the Jacobian is the rotation itself
        np.testing.assert_allclose(np.linalg.det(fl.J[-1]), 1.0, rtol=1e-10)

    def test_zero_field(self):
        fl = flow_from_field(zero_field(), SEEDS, (0.0, 1.0), n_steps=10)
        np.testing.assert_array_equal(fl.F[-1], SEEDS)
        np.testing.assert_array_equal(fl.J[-1], np.broadcast_to(np.eye(2), (4, 2, 2)))
        assert np.all(fl.timelike_margin == 1.0)

    def test_fd_jacobian_agrees(self):
        fl = flow_from_field(pulse_swirl_field(0.4, 0.0, 1.0, 0.3, 1.2), SEEDS, (0.0, 1.0),
                             n_steps=200)
        _, rel = finite_difference_jacobian(fl)
        assert rel < 1e-5

    def test_superluminal_field_reports_location(self):
        with pytest.raises(TimelikeViolation) as info:
            flow_from_field(rigid_rotation_field(2.0), SEEDS, (0.0, 1.0), n_steps=10)
        assert info.value.payload["t"] == 0.0
        np.testing.assert_allclose(info.value.payload["x"], [0.0, -0.8])

    def test_seed_shape(self):
        with pytest.raises(ConfigError):
            flow_from_field(zero_field(), [[1.0, 2.0, 3.0]])


class TestGronwall:
    def test_linear_field_is_tight(self):
        # v = c y: |W| = exp(c t) exactly saturates the forward envelope
        fl = flow_from_field(linear_field(0.3 * np.eye(2)), SEEDS, (0.0, 1.0), n_steps=200)
        rep = jacobian_bound_check(fl)
        assert rep.ok
        assert rep.max_forward_ratio == pytest.approx(1.0, abs=1e-8)
        assert rep.uniform_bound == pytest.approx(math.exp(0.3), rel=1e-8)

    def test_pulse_gives_finite_uniform_bound(self):
        field = pulse_swirl_field(0.4, 0.2, 0.8, 0.3, 1.2)
        short = flow_from_field(field, SEEDS, (0.0, 1.0), n_steps=200)
        long = flow_from_field(field, SEEDS, (0.0, 3.0), n_steps=600)
        a = jacobian_bound_check(short).uniform_bound
        b = jacobian_bound_check(long).uniform_bound
        # psi vanishes after the pulse, so the bound stops growing
        assert b == pytest.approx(a, rel=1e-6)

    def test_underestimated_psi_is_caught(self):
        lin = linear_field(0.3 * np.eye(2))
        cheat = VectorField(2, lin.v, lin.jac, None, "cheat")
        fl = flow_from_field(cheat, SEEDS, (0.0, 1.0), n_steps=50)
        fl.psi[:] = 0.1
        with pytest.raises(PropertyViolation) as info:
            jacobian_bound_check(fl)
        assert info.value.payload["seed"] is not None
        assert not jacobian_bound_check(fl, strict=False).forward_ok


class TestBuildPsi:
    def test_rigid(self):
        motion = RigidMotion(omega=0.3,
                             l=lambda t: 0.05 * np.array([math.sin(2 * math.pi * t), 0.0]),
                             dl=lambda t: 0.1 * math.pi * np.array([math.cos(2 * math.pi * t), 0.0]),
                             rho0=1.0, rho=2.0)
        s = build_psi(motion)
        assert s.ok and s.checks["(iii)"]["value"] > 0
        # the inner disk is moved rigidly
        inner = np.linalg.norm(s.y, axis=-1) <= 1.0
        d = np.linalg.norm(s.psi[:, inner], axis=-1) - np.linalg.norm(s.y[inner], axis=-1)
        assert np.max(np.abs(d)) <= 0.05 + 1e-12

    def test_rigid_too_fast(self):
        with pytest.raises(HypothesisViolation) as info:
            build_psi("Rigid", {"omega": 3.0})
        assert info.value.payload["hypothesis"] in ("speed_bound", "(iii)")
        assert not build_psi("Rigid", {"omega": 3.0}, strict=False).ok

    def test_even_periodic(self):
        s = build_psi(EvenPeriodic(pulse_swirl_field(0.3, 0.0, 0.5, 0.5, 1.5)))
        assert s.ok
        np.testing.assert_allclose(s.psi[0], s.psi[-1], atol=1e-12)
        # symmetric about t = 1/2
        np.testing.assert_allclose(s.psi[16], s.psi[48], atol=1e-9)

    def test_slow_uniform(self):
        s = build_psi(SlowUniform.example(eps0=0.01))
        assert s.ok
        assert s.checks["zero_mean"]["value"] < 1e-12
        assert s.checks["jacobian_deviation"]["value"] < 0.01
        # outside rho' the map is the identity
        far = np.linalg.norm(s.y, axis=-1) >= 2.0
        np.testing.assert_allclose(s.psi[:, far], np.broadcast_to(s.y[far], s.psi[:, far].shape))

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            build_psi("Wobble")
        with pytest.raises(ConfigError):
            build_psi("Rigid", {"spin": 1})


@pytest.fixture(scope="module")
def extension():
    curve = TranslatingCurve(0.5, (0.1, 0.0), time_period=4.0)
    return curve, boundary_extension_field(curve, rho=1.5)


class TestBoundaryExtension:
    def test_geometry(self, extension):
        _, ext = extension
        assert ext.kappa_max == pytest.approx(2.0, rel=1e-6)
        assert ext.delta == pytest.approx(0.25, rel=1e-6)
        assert ext.support_radius < 1.5

    def test_boundary_seeds_stay_on_curve(self, extension):
        curve, ext = extension
        seeds = curve.evaluate(np.array([0.0, 0.25, 0.5, 0.75]), 0.0)[0]
        fl = flow_from_field(ext.field, seeds, (0.0, 4.0), n_steps=40)
        l, _ = curve.offset(fl.t)
        dist = np.linalg.norm(fl.F - l[:, None, :], axis=-1)
        assert np.max(np.abs(dist - 0.5)) < 1e-6
        assert fl.timelike_margin.min() > 0
        assert jacobian_bound_check(fl).ok

    def test_boundary_velocity_is_timelike_and_tangent(self, extension):
        curve, ext = extension
        sig = np.linspace(0, 1, 50)
        for t in (0.0, 1.3):
            vb = ext.boundary_velocity(sig, t)
            _, xs, xt = curve.evaluate(sig, t)
            N = boundary_normal(xs, xt)
            # (v, 1) is tangent to the moving boundary
            ext3 = np.concatenate([vb, np.ones((50, 1))], axis=1)
            np.testing.assert_allclose(np.sum(ext3 * N, axis=1), 0.0, atol=1e-12)
            assert np.all(np.linalg.norm(vb, axis=1) < 1)

    def test_vanishes_away_from_boundary(self, extension):
        _, ext = extension
        far = np.array([[1.45, 0.0], [0.0, 1.45], [0.05, -0.8]])
        np.testing.assert_array_equal(ext.field.v(far, 0.3), 0.0)

    def test_rejects_wide_collar(self):
        with pytest.raises(ConfigError):
            boundary_extension_field(TranslatingCurve(0.5, (0.1, 0.0), time_period=4.0),
                                     delta=0.6)

    @given(t=st.floats(0.0, 4.0), ang=st.floats(0.0, 2 * math.pi), off=st.floats(-0.02, 0.2))
    def test_field_speed_below_one(self, extension, t, ang, off):
        curve, ext = extension
        l, _ = curve.offset(np.array([t]))
        p = l[0] + (0.5 + off) * np.array([math.cos(ang), math.sin(ang)])
        assert np.linalg.norm(ext.field.v(p[None], t)) < 1
