import numpy as np
import pytest
from fractions import Fraction

from phaselab.field import (
    BoxAxis,
    Ordering,
    PeriodicAxis,
    TranslationVector,
    constant_field,
    field_from_function,
    sup_distance,
    translate,
)
from phaselab.heteroclinic import logistic_profile
from phaselab.integrand import allen_cahn
from phaselab.orbit import (
    InvariantExtractionError,
    InvariantSystem,
    LatticeEnumerationError,
    classify_translation,
    envelope,
    extract_invariants,
    gap_check,
    is_admissible,
    lattice_in_orthocomplement,
    rotation_fit,
    self_intersection_scan,
    total_order_check,
)

E3 = np.array([0.0, 0.0, 1.0])

LAYER_AXES = (BoxAxis(-20, 20, 25), PeriodicAxis(1, 4))


def layer_member(b):
    return field_from_function(LAYER_AXES, lambda p: logistic_profile(p[..., 0] - b))


def hull_field():
    # average slope 1/2 with a periodic wiggle: the classic sheared example
    return field_from_function(
        (PeriodicAxis(2, 8),),
        lambda p: 0.5 * p[..., 0] + 0.1 * np.sin(2 * np.pi * p[..., 0]),
        rises=(1,),
    )


def crossing_field():
    # genuinely 2-D oscillation with period 2: it crosses its own translate
    axes = (PeriodicAxis(2, 8), PeriodicAxis(2, 8))
    return field_from_function(
        axes,
        lambda p: 0.5
        + 0.2 * np.sin(np.pi * p[..., 0]) * np.sin(np.pi * p[..., 1] + np.pi / 4),
    )


class TestRotationFit:
    def test_bounded_layer_has_flat_direction(self):
        fit = rotation_fit(layer_member(0.3))
        assert fit.rho == (Fraction(0), Fraction(0))
        assert np.allclose(fit.a1, E3, atol=0)

    def test_sheared_field(self):
        fit = rotation_fit(hull_field())
        assert fit.rho == (Fraction(1, 2),)
        assert abs(fit.bound - 0.1) < 1e-12
        expected = np.array([-0.5, 1.0]) / np.sqrt(1.25)
        assert np.abs(fit.a1 - expected).max() < 1e-14

    def test_constant(self):
        fit = rotation_fit(constant_field((PeriodicAxis(1, 8),), 0.3))
        assert fit.rho == (Fraction(0),)
        assert fit.bound == 0.0


class TestClassifyTranslation:
    def test_zero_translation_equal(self):
        u = layer_member(0.0)
        rel = classify_translation(u, TranslationVector((0, 0), 0))
        assert rel.kind is Ordering.EQUAL

    def test_layer_shift_along_profile(self):
        u = layer_member(0.0)
        assert classify_translation(u, TranslationVector((1, 0), 0)).kind is Ordering.LESS
        assert classify_translation(u, TranslationVector((-1, 0), 0)).kind is Ordering.GREATER

    def test_layer_invariant_transverse(self):
        u = layer_member(0.0)
        assert classify_translation(u, TranslationVector((0, 1), 0)).kind is Ordering.EQUAL

    def test_sign_observation(self):
        # a translation with positive inner product against the rotation
        # direction always lands above the field, and below for negative
        for u in (layer_member(0.4), hull_field(), constant_field((PeriodicAxis(1, 4),), 0.2)):
            a1 = rotation_fit(u).a1
            n = u.n
            for k in np.ndindex(*(5,) * (n + 1)):
                kbar = tuple(int(x) - 2 for x in k)
                dot = float(np.dot(kbar, a1))
                if abs(dot) < 1e-9:
                    continue
                kind = classify_translation(
                    u, TranslationVector(kbar[:-1], kbar[-1])
                ).kind
                assert kind is (Ordering.GREATER if dot > 0 else Ordering.LESS)


class TestSelfIntersectionScan:
    def test_layer_is_clean(self):
        assert self_intersection_scan(layer_member(0.3), 3) == []

    def test_constant_is_clean(self):
        assert self_intersection_scan(constant_field((PeriodicAxis(1, 4),), 0.25), 3) == []

    def test_genuinely_2d_oscillation_crosses(self):
        wits = self_intersection_scan(crossing_field(), 3)
        assert wits
        assert any(w.kbar.vertical == 0 for w in wits)

    def test_witness_reproduces_crossing(self):
        wits = self_intersection_scan(crossing_field(), 2)
        w = wits[0]
        again = classify_translation(crossing_field(), w.kbar)
        assert again.kind is Ordering.CROSSING

    def test_radius_validated(self):
        with pytest.raises(ValueError):
            self_intersection_scan(layer_member(0.0), 0)


class TestLattice:
    def test_coordinate_complement(self):
        basis = lattice_in_orthocomplement([E3], 3)
        assert basis.tolist() == [[1, 0, 0], [0, 1, 0]]

    def test_two_directions(self):
        basis = lattice_in_orthocomplement([E3, np.array([-1.0, 0.0, 0.0])], 3)
        assert basis.tolist() == [[0, 1, 0]]

    def test_diagonal_direction(self):
        d = np.array([-1.0, 1.0, 0.0]) / np.sqrt(2.0)
        basis = lattice_in_orthocomplement([d], 3)
        assert basis.tolist() == [[1, 1, 0], [0, 0, 1]]

    def test_rows_orthogonal_and_integer(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            v = rng.integers(-2, 3, size=3)
            if not np.any(v):
                continue
            d = v / np.linalg.norm(v)
            basis = lattice_in_orthocomplement([d], 3)
            assert basis.dtype == np.int64
            assert np.abs(basis @ d).max() < 1e-10
            assert np.linalg.matrix_rank(basis) == basis.shape[0]

    def test_radius_too_small_reported(self):
        d = np.array([3.0, -1.0]) / np.sqrt(10.0)
        with pytest.raises(LatticeEnumerationError):
            lattice_in_orthocomplement([d], 1)
        basis = lattice_in_orthocomplement([d], 3)
        assert basis.tolist() == [[1, 3]]

    def test_dependent_directions_rejected(self):
        with pytest.raises(ValueError):
            lattice_in_orthocomplement([E3, 2.0 * E3], 3)


class TestExtractInvariants:
    def test_transition_layer_family_member(self):
        sys = extract_invariants(layer_member(0.3), 3)
        assert sys.t == 2
        assert np.allclose(sys.a[0], E3, atol=1e-12)
        assert np.allclose(sys.a[1], [-1.0, 0.0, 0.0], atol=1e-12)
        assert sys.gamma_bases[2].tolist() == [[0, 1, 0]]
        assert is_admissible(sys)

    def test_constant_field(self):
        sys = extract_invariants(constant_field((PeriodicAxis(1, 4), PeriodicAxis(1, 4)), 0.0), 3)
        assert sys.t == 1
        assert np.allclose(sys.a[0], E3, atol=0)
        assert sys.gamma_bases[1].tolist() == [[1, 0, 0], [0, 1, 0]]

    def test_exactly_linear_field(self):
        axes = (PeriodicAxis(1, 4), PeriodicAxis(1, 4))
        u = field_from_function(axes, lambda p: p[..., 0], rises=(1, 0))
        sys = extract_invariants(u, 3)
        assert sys.t == 1
        expected = np.array([-1.0, 0.0, 1.0]) / np.sqrt(2.0)
        assert np.abs(sys.a[0] - expected).max() < 1e-12
        assert sys.gamma_bases[1].tolist() == [[1, 0, 1], [0, 1, 0]]

    def test_sheared_field(self):
        sys = extract_invariants(hull_field(), 3)
        assert sys.t == 1
        assert sys.gamma_bases[1].tolist() == [[2, 1]]

    def test_translation_invariance(self):
        u = layer_member(0.2)
        s0 = extract_invariants(u, 3)
        s1 = extract_invariants(translate(u, TranslationVector((2, 1), 1)), 3)
        assert s0.t == s1.t
        assert np.array_equal(s0.a, s1.a)
        assert all(
            np.array_equal(a, b) for a, b in zip(s0.gamma_bases, s1.gamma_bases)
        )

    def test_uniqueness_across_scan_radii(self):
        u = layer_member(0.2)
        s3 = extract_invariants(u, 3)
        s4 = extract_invariants(u, 4)
        assert s3.t == s4.t
        assert np.abs(s3.a - s4.a).max() < 1e-10
        assert all(
            np.array_equal(a, b) for a, b in zip(s3.gamma_bases, s4.gamma_bases)
        )

    def test_crossing_field_rejected_with_witnesses(self):
        with pytest.raises(InvariantExtractionError) as err:
            extract_invariants(crossing_field(), 3)
        assert err.value.witnesses

    def test_crossing_rejected_even_without_prescan(self):
        with pytest.raises(InvariantExtractionError):
            extract_invariants(
                crossing_field(), 3, require_no_self_intersections=False
            )

    def test_json_round_trip(self):
        sys = extract_invariants(layer_member(0.1), 3)
        d = sys.to_json_dict()
        back = InvariantSystem.from_json_dict(d)
        assert back.t == sys.t
        assert np.array_equal(back.a, sys.a)
        assert d["gamma_bases"][2] == [[0, 1, 0]]


class TestAdmissibility:
    def test_layer_chain_admissible(self):
        sys = InvariantSystem(
            2,
            np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0]]),
            (
                np.eye(3, dtype=np.int64),
                np.array([[1, 0, 0], [0, 1, 0]], dtype=np.int64),
                np.array([[0, 1, 0]], dtype=np.int64),
            ),
        )
        assert is_admissible(sys)

    def test_downward_first_direction_inadmissible(self):
        sys = InvariantSystem(
            1,
            np.array([[0.0, 0.0, -1.0]]),
            (
                np.eye(3, dtype=np.int64),
                np.array([[1, 0, 0], [0, 1, 0]], dtype=np.int64),
            ),
        )
        assert not is_admissible(sys)

    def test_direction_outside_sublattice_span_inadmissible(self):
        sys = InvariantSystem(
            2,
            np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]),
            (
                np.eye(3, dtype=np.int64),
                np.array([[1, 0, 0], [0, 1, 0]], dtype=np.int64),
                np.array([[0, 1, 0]], dtype=np.int64),
            ),
        )
        assert not is_admissible(sys)


class TestEnvelope:
    def test_layer_envelopes_are_pure_phases(self):
        u = layer_member(0.3)
        sys = extract_invariants(u, 3)
        up = envelope(u, sys, +1, steps=60, tol=1e-7)
        dn = envelope(u, sys, -1, steps=60, tol=1e-7)
        assert sup_distance(up, constant_field(LAYER_AXES, 1.0)) < 1e-6
        assert sup_distance(dn, constant_field(LAYER_AXES, 0.0)) < 1e-6

    def test_envelopes_sandwich_the_field(self):
        u = layer_member(0.0)
        sys = extract_invariants(u, 3)
        up = envelope(u, sys, +1, steps=60, tol=1e-7, verify=False)
        dn = envelope(u, sys, -1, steps=60, tol=1e-7, verify=False)
        from phaselab.field import compare

        assert compare(dn, u).kind is Ordering.LESS
        assert compare(u, up).kind is Ordering.LESS

    def test_depth_one_chain_rejected(self):
        u = constant_field((PeriodicAxis(1, 4),), 0.0)
        sys = extract_invariants(u, 3)
        with pytest.raises(ValueError):
            envelope(u, sys, +1)


class TestTotalOrder:
    def test_single_family_with_phases_is_ordered(self):
        fields = [layer_member(b) for b in (-1.0, 0.0, 0.5)] + [
            constant_field(LAYER_AXES, 0.0),
            constant_field(LAYER_AXES, 1.0),
        ]
        report = total_order_check(fields)
        assert report.passed
        assert report.pair_count == 10

    def test_transition_layers_in_different_directions_cross(self):
        axes = (BoxAxis(-8, 8, 4), BoxAxis(-8, 8, 4))
        v1 = field_from_function(axes, lambda p: logistic_profile(p[..., 0]))
        v2 = field_from_function(axes, lambda p: logistic_profile(p[..., 1]))
        report = total_order_check([v1, v2])
        assert not report.passed
        assert report.violations[0][2].kind is Ordering.CROSSING

    def test_singleton(self):
        assert total_order_check([layer_member(0.0)]).passed


class TestGapCheck:
    def test_phases_are_not_strictly_inside(self):
        u = layer_member(0.0)
        sys = extract_invariants(u, 3)
        report = gap_check(
            u,
            sys,
            [constant_field(LAYER_AXES, 0.0), constant_field(LAYER_AXES, 1.0)],
            allen_cahn(2),
            trials=20,
            seed=3,
        )
        assert report.passed
        assert not any(c.strictly_between for c in report.candidates)

    def test_half_level_flagged_with_minimality_status(self):
        u = layer_member(0.0)
        sys = extract_invariants(u, 3)
        report = gap_check(
            u,
            sys,
            [constant_field(LAYER_AXES, 0.5)],
            allen_cahn(2),
            trials=60,
            max_radius=6.0,
            seed=3,
        )
        entry = report.candidates[0]
        assert entry.strictly_between
        assert entry.invariant_match
        assert not entry.minimality_passed  # rejected by the minimality filter
        assert not entry.anomaly
        assert report.passed

    def test_empty_candidates_vacuous_pass(self):
        u = layer_member(0.0)
        sys = extract_invariants(u, 3)
        assert gap_check(u, sys, [], allen_cahn(2)).passed
