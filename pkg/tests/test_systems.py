import math

import numpy as np
import pytest

from recurq import (Box, ControlSignal, ControlSystem, DomainError,
                    IntegrationBlowupError, divergence, double_integrator,
                    eval_field, integrate, jacobian_fd, make_system, rk4_step,
                    scalar_linear)


class TestControlSignal:
    def test_value_at_segments(self):
        sig = ControlSignal(1.0, [[-1.0], [0.0], [1.0]])
        np.testing.assert_allclose(sig.value_at(0.0), [-1.0])
        np.testing.assert_allclose(sig.value_at(0.999), [-1.0])
        np.testing.assert_allclose(sig.value_at(1.0), [0.0])
        np.testing.assert_allclose(sig.value_at(2.5), [1.0])
        # clamped at the right endpoint
        np.testing.assert_allclose(sig.value_at(3.0), [1.0])

    def test_negative_time_rejected(self):
        sig = ControlSignal.constant([0.5], 2.0)
        with pytest.raises(ValueError):
            sig.value_at(-0.1)

    def test_constant_helper(self):
        sig = ControlSignal.constant([-1.0], 4.0)
        assert sig.total_duration == 4.0
        np.testing.assert_allclose(sig.value_at(3.9), [-1.0])


class TestEvalField:
    def test_domain_check(self):
        sys = double_integrator()
        np.testing.assert_allclose(eval_field(sys, [0.0, 2.0], [1.0]), [2.0, 1.0])
        with pytest.raises(DomainError):
            eval_field(sys, [0.0, 0.0], [1.5])

    def test_dimension_check(self):
        sys = double_integrator()
        with pytest.raises(ValueError):
            eval_field(sys, [0.0], [0.0])


class TestRK4:
    def test_exact_on_quadratic_solutions(self):
        # double integrator with constant input has polynomial solutions of
        # degree 2, which RK4 reproduces to rounding error
        sys = double_integrator()
        traj = integrate(sys, [1.0, 1.0], ControlSignal.constant([-1.0], 5.0),
                         4.0, 0.05)
        t = traj.times
        exact = np.stack([1.0 + t - 0.5 * t**2, 1.0 - t], axis=-1)
        assert np.max(np.abs(traj.states - exact)) < 1e-12

    def test_convergence_order_on_exponential(self):
        # x' = x, x(1) = e; the error must shrink by ~2^4 per halving
        sys = scalar_linear(a=1.0)
        u0 = ControlSignal.constant([0.0], 1.0)

        def err(dt):
            traj = integrate(sys, [1.0], u0, 1.0, dt)
            return abs(traj.end[0] - math.e)

        e1, e2 = err(0.05), err(0.025)
        order = math.log2(e1 / e2)
        assert order >= 3.0
        assert order == pytest.approx(4.0, abs=0.3)

    def test_single_step_matches_loop(self):
        sys = scalar_linear(a=1.0)
        x1 = rk4_step(sys.field, np.array([1.0]), np.array([0.5]), 0.1)
        traj = integrate(sys, [1.0], ControlSignal.constant([0.5], 0.1), 0.1, 0.1)
        np.testing.assert_allclose(traj.end, x1, rtol=0, atol=0)


class TestIntegrate:
    def test_zero_horizon(self):
        sys = double_integrator()
        traj = integrate(sys, [0.2, -0.3], ControlSignal.constant([0.0], 1.0),
                         0.0, 0.1)
        assert traj.horizon == 0.0
        np.testing.assert_allclose(traj.states, [[0.2, -0.3]])

    def test_partial_final_step(self):
        sys = scalar_linear(a=1.0)
        traj = integrate(sys, [1.0], ControlSignal.constant([0.0], 1.0), 0.55, 0.1)
        assert traj.times[-1] == pytest.approx(0.55)
        assert traj.end[0] == pytest.approx(math.exp(0.55), rel=1e-6)

    def test_dt_must_divide_segment(self):
        sys = double_integrator()
        with pytest.raises(ValueError):
            integrate(sys, [0.0, 0.0], ControlSignal(1.0, [[0.0]]), 1.0, 0.3)

    def test_horizon_beyond_signal_rejected(self):
        sys = double_integrator()
        with pytest.raises(ValueError):
            integrate(sys, [0.0, 0.0], ControlSignal.constant([0.0], 1.0),
                      2.0, 0.1)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_blowup_detected(self):
        cubic = ControlSystem(
            n=1, m=1, U=Box([0.0], [1.0]),
            field=lambda x, u: np.array((x[0] ** 3,)), name="cubic")
        with pytest.raises(IntegrationBlowupError) as exc:
            integrate(cubic, [5.0], ControlSignal.constant([0.0], 10.0),
                      10.0, 0.01)
        assert 0.0 < exc.value.t <= 10.0

    def test_deterministic_repeatability(self):
        sys = double_integrator()
        sig = ControlSignal(0.5, [[0.3], [-0.7], [1.0], [0.0]])
        a = integrate(sys, [0.1, 0.2], sig, 2.0, 0.01)
        b = integrate(sys, [0.1, 0.2], sig, 2.0, 0.01)
        assert np.array_equal(a.states, b.states)


class TestJacobians:
    def test_fd_matches_analytic_double_integrator(self):
        sys = double_integrator()
        J = jacobian_fd(sys, [0.3, -0.5], [0.2])
        np.testing.assert_allclose(J, [[0.0, 1.0], [0.0, 0.0]], atol=1e-8)

    def test_divergence_double_integrator_zero(self):
        sys = double_integrator()
        assert divergence(sys, [0.5, 0.5], [1.0]) == 0.0

    def test_divergence_scalar_linear(self):
        sys = scalar_linear(a=1.0)
        assert divergence(sys, [0.3], [0.1]) == 1.0

    def test_divergence_fd_fallback(self):
        sys = scalar_linear(a=2.5)
        bare = ControlSystem(n=1, m=1, U=sys.U, field=sys.field, name="bare")
        assert divergence(bare, [0.3], [0.1]) == pytest.approx(2.5, abs=1e-6)


class TestFactory:
    def test_builtins(self):
        assert make_system("double_integrator").n == 2
        assert make_system("scalar_linear", a=2.0).name == "scalar_linear(a=2.0)"
        with pytest.raises(KeyError):
            make_system("pendulum")
