import numpy as np
import pytest

from phaselab.field import (
    BoxAxis,
    GridError,
    Ordering,
    PeriodicAxis,
    TranslationVector,
    compare,
    constant_field,
    field_from_function,
    field_from_values,
    sup_distance,
    translate,
)
from phaselab.heteroclinic import logistic_profile, solve_heteroclinic_bvp, profile_to_field
from phaselab.integrand import Integrand, allen_cahn
from phaselab.minimize import (
    EnergyDivergedError,
    RelaxOptions,
    energy,
    energy_gradient,
    minimality_spot_check,
    relax,
)


AC1 = allen_cahn(1)
AC2 = allen_cahn(2)


class TestEnergy:
    def test_pure_phase_zero(self):
        u = constant_field((PeriodicAxis(1, 8), PeriodicAxis(1, 8)), 0.0)
        assert energy(u, AC2) == 0.0
        assert energy(u, AC2, region=((2, 6), (0, 8))) == 0.0

    def test_half_level_on_unit_cell(self):
        u = constant_field((PeriodicAxis(1, 4),), 0.5)
        assert abs(energy(u, AC1) - 0.0625) < 1e-15

    def test_transition_layer_energy_third(self):
        # closed form: twice the integral of u(1-u) over the unit range = 1/3
        ax = BoxAxis(-20, 20, 100)
        u = field_from_function((ax,), lambda p: logistic_profile(p[..., 0]))
        assert abs(energy(u, AC1) - 1.0 / 3.0) < 1e-3

    def test_region_additivity(self):
        rng = np.random.default_rng(0)
        ax = BoxAxis(0, 2, 8)
        u = field_from_values((ax,), rng.random(17))
        total = energy(u, AC1)
        left = energy(u, AC1, region=((0, 9),))
        right = energy(u, AC1, region=((8, 17),))
        assert abs(total - left - right) < 1e-14

    def test_empty_region_rejected(self):
        u = constant_field((PeriodicAxis(1, 8),), 0.0)
        with pytest.raises(GridError):
            energy(u, AC1, region=((3, 4),))

    def test_translation_equivariance_exact(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            axes = (PeriodicAxis(2, 8), PeriodicAxis(1, 4))
            u = field_from_values(
                axes, rng.random(tuple(a.nodes for a in axes)), rises=(int(rng.integers(-1, 2)), 0)
            )
            e0 = energy(u, AC2)
            k = TranslationVector(
                (int(rng.integers(-2, 3)), int(rng.integers(-2, 3))), int(rng.integers(-2, 3))
            )
            if u.rises[0] == 0:
                assert energy(translate(u, k), AC2) == e0
            else:
                assert abs(energy(translate(u, k), AC2) - e0) < 1e-12

    def test_sampled_x_periodic_integrand_equivariant_to_quadrature(self):
        wavy = Integrand(
            name="wavy",
            dimension=1,
            density=lambda x, u, p: (2.0 + np.sin(2 * np.pi * x[..., 0]))
            * np.sum(np.asarray(p) ** 2, axis=-1)
            + np.sin(np.pi * u) ** 2,
            d_u=lambda x, u, p: np.pi * np.sin(2 * np.pi * u),
            d_p=lambda x, u, p: 2.0
            * (2.0 + np.sin(2 * np.pi * x[..., 0]))[..., None]
            * np.asarray(p),
            growth_constant=3.0,
        )
        rng = np.random.default_rng(2)
        u = field_from_values((PeriodicAxis(2, 8),), rng.random(16))
        e0 = energy(u, wavy)
        e1 = energy(translate(u, TranslationVector((1,), 1)), wavy)
        assert abs(e1 - e0) < 1e-12


class TestGradient:
    def test_critical_points(self):
        u0 = constant_field((PeriodicAxis(1, 8),), 0.0)
        uh = constant_field((PeriodicAxis(1, 8),), 0.5)
        assert np.abs(energy_gradient(u0, AC1).values).max() == 0.0
        assert np.abs(energy_gradient(uh, AC1).values).max() == 0.0

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        worst = 0.0
        for k in range(20):
            n = 1 + (k % 2)
            axes = (
                (PeriodicAxis(2, 16),)
                if n == 1
                else (PeriodicAxis(1, 8), PeriodicAxis(2, 8))
            )
            ac = AC1 if n == 1 else AC2
            shape = tuple(a.nodes for a in axes)
            u = field_from_values(axes, 0.3 + 0.2 * rng.standard_normal(shape))
            delta = rng.standard_normal(shape)
            g = energy_gradient(u, ac)
            hn = float(np.prod([a.h for a in axes]))
            inner = float(np.sum(g.values * delta)) * hn
            s = 1e-6
            fd = (
                energy(u.with_values(u.values + s * delta), ac)
                - energy(u.with_values(u.values - s * delta), ac)
            ) / (2 * s)
            worst = max(worst, abs(inner - fd) / max(abs(fd), 1e-12))
        assert worst < 1e-6

    def test_box_edges_included_in_first_variation(self):
        # perturbations at unpinned box edges must also be captured
        rng = np.random.default_rng(4)
        ax = BoxAxis(0, 1, 4)
        u = field_from_values((ax,), rng.random(5))
        g = energy_gradient(u, AC1)
        delta = np.zeros(5)
        delta[0] = 1.0
        s = 1e-6
        fd = (
            energy(u.with_values(u.values + s * delta), AC1)
            - energy(u.with_values(u.values - s * delta), AC1)
        ) / (2 * s)
        assert abs(g.values[0] * ax.h - fd) / abs(fd) < 1e-6


class TestRelax:
    def test_critical_start_returns_unchanged(self):
        u = constant_field((PeriodicAxis(1, 8),), 0.0)
        res = relax(u, AC1, RelaxOptions())
        assert res.converged and res.iterations == 0
        assert np.array_equal(res.field.values, u.values)

    def test_ramp_relaxes_to_transition_layer(self):
        ax = BoxAxis(-12, 12, 25)
        x = ax.coords()
        ramp = field_from_values((ax,), (x + 12) / 24)
        res = relax(
            ramp,
            AC1,
            RelaxOptions(max_iterations=120_000, gradient_tolerance=1e-3, initial_step=1e-4),
        )
        assert res.converged
        target = field_from_function((ax,), lambda p: logistic_profile(p[..., 0]))
        assert sup_distance(res.field, target) < 2e-3
        # pinned ends kept their values
        assert res.field.values[0] == ramp.values[0]
        assert res.field.values[-1] == ramp.values[-1]

    def test_energy_history_non_increasing(self):
        rng = np.random.default_rng(5)
        u = field_from_values((PeriodicAxis(2, 16),), 0.5 + 0.3 * rng.standard_normal(32))
        res = relax(u, AC1, RelaxOptions(max_iterations=3000, gradient_tolerance=1e-8, log_every=1))
        e = res.history["energy"]
        assert np.all(np.diff(e) <= 1e-15)

    def test_slope_and_offset_preserved(self):
        rng = np.random.default_rng(6)
        axes = (PeriodicAxis(2, 8),)
        u = field_from_values(axes, 0.1 * rng.standard_normal(16), rises=(1,))
        u = u.with_values(u.values)
        res = relax(u, AC1, RelaxOptions(max_iterations=500, gradient_tolerance=1e-6))
        assert res.field.rises == (1,)
        assert res.field.offset == u.offset

    def test_clamp_respected(self):
        rng = np.random.default_rng(7)
        u = field_from_values((PeriodicAxis(1, 16),), 0.5 + 0.4 * rng.standard_normal(16))
        res = relax(
            u,
            AC1,
            RelaxOptions(max_iterations=2000, gradient_tolerance=1e-6, clamp=(0.0, 1.0)),
        )
        assert res.field.values.min() >= 0.0
        assert res.field.values.max() <= 1.0

    def test_fixed_step_divergence_raises(self):
        rng = np.random.default_rng(8)
        u = field_from_values((PeriodicAxis(1, 16),), rng.random(16))
        with pytest.raises(EnergyDivergedError):
            relax(
                u,
                AC1,
                RelaxOptions(
                    max_iterations=10_000, gradient_tolerance=1e-12, step_rule="fixed", initial_step=1.0
                ),
            )

    def test_stall_detected_instead_of_spinning(self):
        # at O(1) energy the adaptive rule cannot resolve decreases below
        # eps * |E|, so an unreachable tolerance must stall, not spin
        u = profile_to_field(solve_heteroclinic_bvp(12, 0.02))
        res = relax(
            u, AC1, RelaxOptions(max_iterations=5_000, gradient_tolerance=1e-14)
        )
        assert res.status == "stalled"
        assert res.iterations < 5_000

    def test_options_validated(self):
        with pytest.raises(ValueError):
            RelaxOptions(gradient_tolerance=0.0)
        with pytest.raises(ValueError):
            RelaxOptions(clamp=(1.0, 0.0))
        with pytest.raises(ValueError):
            RelaxOptions(step_rule="newton")


class TestComparisonPrincipleProbe:
    def test_ordered_relaxed_fields_energy_lattice(self):
        # pointwise min/max of strictly ordered critical fields select the
        # fields themselves, so the energies agree bitwise
        ax = BoxAxis(-12, 12, 50)
        u = field_from_function((ax,), lambda p: logistic_profile(p[..., 0] - 1.0))
        v = field_from_function((ax,), lambda p: logistic_profile(p[..., 0]))
        assert compare(u, v).kind is Ordering.LESS
        lo = u.with_values(np.minimum(u.values, v.values))
        hi = u.with_values(np.maximum(u.values, v.values))
        assert energy(lo, AC1) == energy(u, AC1)
        assert energy(hi, AC1) == energy(v, AC1)


class TestMinimalitySpotCheck:
    def test_pure_phase_passes(self):
        u = constant_field((PeriodicAxis(16, 8),), 0.0)
        report = minimality_spot_check(u, AC1, trials=100, max_radius=6.0, seed=1)
        assert report.passed
        assert report.worst_delta >= 0.0

    def test_well_maximum_fails(self):
        # wide negative perturbations lower the well faster than the gradient
        # term costs, so the flat half-level state is not a minimizer
        u = constant_field((PeriodicAxis(16, 8),), 0.5)
        report = minimality_spot_check(u, AC1, trials=100, max_radius=6.0, seed=1)
        assert not report.passed
        assert report.worst_delta < -1e-3
        assert report.failures
        worst = report.worst_trial
        assert abs(worst["amplitude"]) >= 0.3

    def test_relaxed_transition_layer_passes_small_amplitudes(self):
        profile = solve_heteroclinic_bvp(12, 0.02)
        u = profile_to_field(profile)
        report = minimality_spot_check(
            u, AC1, trials=100, max_radius=2.0, seed=2, amplitude=0.05
        )
        assert report.passed

    def test_trials_validated(self):
        u = constant_field((PeriodicAxis(1, 8),), 0.0)
        with pytest.raises(ValueError):
            minimality_spot_check(u, AC1, trials=0, max_radius=1.0, seed=0)

    def test_deterministic_given_seed(self):
        u = constant_field((PeriodicAxis(4, 8),), 0.5)
        a = minimality_spot_check(u, AC1, trials=20, max_radius=1.5, seed=11)
        b = minimality_spot_check(u, AC1, trials=20, max_radius=1.5, seed=11)
        assert a.worst_delta == b.worst_delta
        assert a.worst_trial == b.worst_trial
