import math

import numpy as np
import pytest

import oamsort as om
from oamsort.decompose import MixedState
from oamsort.discriminate import ChannelMeasurement, MeasurementScheme, _channel_table
from oamsort.errors import DomainError, UnreachableThresholdError

from helpers import brute_force_multishot, random_mixed_pair, trace_norm_probability


def single_channel_state(grid, profile, m=0):
    return MixedState(
        radial_grid=grid,
        ms=(m,),
        weights=np.array([1.0]),
        profiles=profile[None, :],
        m_max=8,
        truncation_loss=0.0,
        captured_fraction=1.0,
        low_capture=False,
    )


class TestHelstromPure:
    def test_orthogonal_states(self):
        assert om.helstrom_pure(0.0) == 1.0

    def test_identical_states_fall_back_to_prior(self):
        assert om.helstrom_pure(1.0, om.Priors(0.3, 0.7)) == pytest.approx(0.7, abs=1e-15)

    @pytest.mark.parametrize(
        "overlap,reported",
        [(0.987, 0.582), (0.981, 0.598), (0.975, 0.612)],
    )
    def test_reported_values(self, overlap, reported):
        assert om.helstrom_pure(overlap) == pytest.approx(reported, abs=3e-3)

    def test_frozen_values(self):
        assert om.helstrom_pure(0.987) == pytest.approx(0.5803598, abs=1e-6)
        assert om.helstrom_pure(0.981) == pytest.approx(0.5970038, abs=1e-6)
        assert om.helstrom_pure(0.975) == pytest.approx(0.6111025, abs=1e-6)

    def test_monotone_in_overlap(self):
        grid = np.linspace(0, 1, 101)
        vals = [om.helstrom_pure(v) for v in grid]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_rejects_bad_overlap(self):
        with pytest.raises(DomainError):
            om.helstrom_pure(1.2)


class TestHelstromMixed:
    def test_single_shared_channel_reduces_to_pure(self, rng):
        rg = om.RadialGrid(32, 10.0)
        from helpers import random_profile

        a = random_profile(rng, rg)
        b = random_profile(rng, rg)
        sa = single_channel_state(rg, a)
        sb = single_channel_state(rg, b)
        overlap = abs(rg.inner(a, b))
        priors = om.Priors(0.4, 0.6)
        assert om.helstrom_mixed(sa, sb, priors) == pytest.approx(
            om.helstrom_pure(overlap, priors), abs=1e-12
        )

    def test_identical_states(self, decs256):
        mixed = om.dephase(decs256["pa"])
        assert om.helstrom_mixed(mixed, mixed) == pytest.approx(0.5, abs=1e-9)

    def test_trace_norm_oracle(self, rng):
        for _ in range(30):
            n_ch = int(rng.integers(2, 9))
            a, b = random_mixed_pair(rng, n_ch)
            priors = om.Priors(*((0.5, 0.5) if rng.random() < 0.4 else (lambda u: (u, 1 - u))(rng.uniform(0.1, 0.9))))
            direct = om.helstrom_mixed(a, b, priors)
            oracle = trace_norm_probability(a, b, priors)
            assert direct == pytest.approx(oracle, abs=1e-9)

    def test_priors_swap_invariance(self, rng):
        a, b = random_mixed_pair(rng, 4)
        priors = om.Priors(0.3, 0.7)
        assert om.helstrom_mixed(a, b, priors) == pytest.approx(
            om.helstrom_mixed(b, a, priors.swapped()), abs=1e-12
        )


class TestOptimalScheme:
    def test_orthogonal_profiles_project_on_own_states(self, rng):
        rg = om.RadialGrid(32, 10.0)
        from helpers import random_profile

        a = random_profile(rng, rg)
        raw = random_profile(rng, rg)
        b = raw - complex(rg.inner(a, raw)) * a
        b = b / rg.norm(b)
        sa, sb = single_channel_state(rg, a), single_channel_state(rg, b)
        scheme = om.optimal_scheme(sa, sb)
        ch = scheme.channels[0]
        w = rg.weights()
        ya = (ch.basis.conj() * w) @ a
        yb = (ch.basis.conj() * w) @ b
        assert np.real(ya.conj() @ ch.outcome0 @ ya) == pytest.approx(1.0, abs=1e-9)
        assert np.real(yb.conj() @ ch.outcome0 @ yb) == pytest.approx(0.0, abs=1e-9)

    def test_collinear_profiles_collapse(self, rng):
        rg = om.RadialGrid(32, 10.0)
        from helpers import random_profile

        a = random_profile(rng, rg)
        b = a * np.exp(0.4j)
        sa, sb = single_channel_state(rg, a), single_channel_state(rg, b)
        scheme = om.optimal_scheme(sa, sb, om.Priors(0.6, 0.4))
        ch = scheme.channels[0]
        assert ch.kind == "whole"
        assert ch.outcome0[0, 0] == pytest.approx(1.0)
        assert ch.complement_outcome == 0

    def test_outcome_operators_form_a_povm(self, rng):
        a, b = random_mixed_pair(rng, 5)
        scheme = om.optimal_scheme(a, b, om.Priors(0.35, 0.65))
        rg = a.radial_grid
        sq = np.sqrt(rg.weights())
        eye = np.eye(rg.n_r)
        for ch in scheme.channels.values():
            emb = ch.basis * sq  # orthonormal rows in the Euclidean metric
            assert np.allclose(emb @ emb.conj().T, np.eye(len(emb)), atol=1e-9)
            span = emb.conj().T @ emb
            pi0 = emb.conj().T @ ch.outcome0 @ emb
            if ch.complement_outcome == 0:
                pi0 = pi0 + (eye - span)
            pi1 = eye - pi0
            for op in (pi0, pi1):
                assert np.allclose(op, op.conj().T, atol=1e-9)
                assert np.linalg.eigvalsh(op).min() > -1e-9

    def test_attains_the_mixed_bound(self, rng):
        for _ in range(30):
            n_ch = int(rng.integers(2, 9))
            a, b = random_mixed_pair(rng, n_ch)
            u = rng.uniform(0.15, 0.85)
            priors = om.Priors(u, 1 - u)
            scheme = om.optimal_scheme(a, b, priors)
            p, s0, s1 = om.scheme_probability(scheme, a, b, priors)
            assert p == pytest.approx(om.helstrom_mixed(a, b, priors), abs=1e-9)
            assert p == pytest.approx(priors.p0 * s0 + priors.p1 * s1, abs=1e-12)


class TestSchemeProbability:
    def test_uninformative_scheme_returns_prior(self, decs256):
        dec = om.dephase(decs256["pa"])
        base = om.optimal_scheme(dec, dec)
        blind = MeasurementScheme(
            radial_grid=base.radial_grid,
            m_max=base.m_max,
            channels={
                m: ChannelMeasurement(
                    basis=ch.basis,
                    outcome0=np.eye(len(ch.basis), dtype=complex),
                    complement_outcome=0,
                    flatten_target=ch.flatten_target,
                    kind="whole",
                )
                for m, ch in base.channels.items()
            },
        )
        priors = om.Priors(0.3, 0.7)
        p, s0, s1 = om.scheme_probability(blind, dec, dec, priors)
        assert p == pytest.approx(0.7, abs=1e-9)

    def test_dephasing_leaves_result_unchanged(self, decs256):
        d0, d1 = decs256["pa"], decs256["pb"]
        scheme = om.optimal_scheme(d0, d1)
        pure = om.scheme_probability(scheme, d0, d1)
        mixed = om.scheme_probability(scheme, om.dephase(d0), om.dephase(d1))
        assert pure == mixed

    def test_priors_swap(self, rng):
        a, b = random_mixed_pair(rng, 4)
        priors = om.Priors(0.25, 0.75)
        scheme = om.optimal_scheme(a, b, priors)
        swapped_scheme = om.optimal_scheme(b, a, priors.swapped())
        p, s0, s1 = om.scheme_probability(scheme, a, b, priors)
        q, t0, t1 = om.scheme_probability(swapped_scheme, b, a, priors.swapped())
        assert p == pytest.approx(q, abs=1e-12)
        assert (s0, s1) == pytest.approx((t1, t0), abs=1e-12)


class TestRealSpace:
    def test_identical_fields(self, fields256):
        f = fields256["pa"]
        assert om.real_space_probability(f, f) == pytest.approx(0.5, abs=1e-12)

    def test_disjoint_intensities(self, grid256):
        top = np.zeros((256, 256), dtype=complex)
        bottom = np.zeros((256, 256), dtype=complex)
        top[:100] = 1.0
        bottom[150:] = 1.0
        f0 = om.ComplexField(grid256, top).normalized()
        f1 = om.ComplexField(grid256, bottom).normalized()
        assert om.real_space_probability(f0, f1, zernike=False) == pytest.approx(1.0, abs=1e-12)

    def test_phase_plate_reveals_weak_phase_objects(self, fields256):
        f0, f1 = fields256["pa"], fields256["pb"]
        with_plate = om.real_space_probability(f0, f1, zernike=True)
        without = om.real_space_probability(f0, f1, zernike=False)
        assert with_plate > without
        assert without == pytest.approx(0.5, abs=1e-3)  # pure phase objects look alike

    def test_mixed_matches_rotation_average(self, grid256, probe256, params300):
        build = lambda az, tight: om.interact(
            probe256,
            om.make_phantom(
                grid256,
                7,
                blob_sigma=4.5 if tight else 6.5,
                packing=1.0 if tight else 0.3,
                azimuth=az,
            ),
            params300,
        )
        d0 = om.oam_decompose(build(0.0, False))
        d1 = om.oam_decompose(build(0.0, True))
        exact = om.real_space_mixed_probability(d0, d1, grid256)
        k_rot = 64
        avg = [np.zeros((256, 256)), np.zeros((256, 256))]
        for k in range(k_rot):
            az = 2 * np.pi * k / k_rot
            for which, tight in ((0, False), (1, True)):
                filtered = om.zernike_filter(build(az, tight))
                avg[which] += np.abs(filtered.amplitudes) ** 2
        for which in (0, 1):
            avg[which] /= avg[which].sum() * grid256.pixel_area
        oracle = float(np.maximum(0.5 * avg[0], 0.5 * avg[1]).sum() * grid256.pixel_area)
        assert exact == pytest.approx(oracle, abs=2e-3)

    def test_grid_mismatch(self, fields256, grid512):
        other = om.ComplexField(grid512, np.ones((512, 512), dtype=complex)).normalized()
        with pytest.raises(DomainError):
            om.real_space_probability(fields256["pa"], other)


class TestMultiShot:
    def test_single_shot_reduction(self):
        priors = om.Priors(0.45, 0.55)
        s0, s1 = 0.7, 0.65
        expected = max(priors.p0 * s0, priors.p1 * (1 - s1)) + max(
            priors.p0 * (1 - s0), priors.p1 * s1
        )
        assert om.n_electron_probability(s0, s1, priors, 1) == pytest.approx(expected, abs=1e-12)

    def test_perfect_shots(self):
        assert om.n_electron_probability(1.0, 1.0, n=17) == pytest.approx(1.0, abs=1e-12)

    def test_three_shot_oracle(self):
        assert om.n_electron_probability(0.8, 0.6, n=3) == pytest.approx(0.772, abs=1e-12)

    def test_brute_force_sequences(self, rng):
        for _ in range(8):
            n = int(rng.integers(1, 13))
            s0, s1 = rng.uniform(0.05, 0.95, 2)
            p0 = rng.uniform(0.1, 0.9)
            got = om.n_electron_probability(s0, s1, om.Priors(p0, 1 - p0), n)
            assert got == pytest.approx(brute_force_multishot(s0, s1, p0, n), abs=1e-12)

    def test_nondecreasing_in_n(self):
        vals = [om.n_electron_probability(0.62, 0.58, n=n) for n in range(1, 40)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_large_n_is_finite_and_fast(self):
        p = om.n_electron_probability(0.52, 0.52, n=200_000)
        assert 0.99 < p <= 1.0


class TestNMin:
    def test_reported_pair(self):
        n90 = om.n_min(0.564, 0.564, threshold=0.9)
        n99 = om.n_min(0.564, 0.564, threshold=0.99)
        assert n90 == 99  # frozen from the exact evaluation
        assert n99 == 329
        assert abs(n90 - 98) <= 0.1 * 98
        assert abs(n99 - 323) <= 0.1 * 323

    def test_perfect_shots_need_one(self):
        assert om.n_min(1.0, 1.0, threshold=0.999) == 1

    def test_threshold_is_met_minimally(self):
        n = om.n_min(0.6, 0.6, threshold=0.95)
        assert om.n_electron_probability(0.6, 0.6, n=n) >= 0.95
        assert om.n_electron_probability(0.6, 0.6, n=n - 1) < 0.95

    def test_monotone_in_shot_quality(self):
        base = om.n_min(0.58, 0.58, threshold=0.9)
        better0 = om.n_min(0.62, 0.58, threshold=0.9)
        better1 = om.n_min(0.58, 0.62, threshold=0.9)
        assert better0 <= base and better1 <= base

    def test_unreachable_for_uninformative_shots(self):
        with pytest.raises(UnreachableThresholdError):
            om.n_min(0.5, 0.5, threshold=0.9)
        with pytest.raises(UnreachableThresholdError):
            om.n_min(0.3, 0.7, threshold=0.9)  # s0 = 1 - s1: outcome carries nothing

    def test_threshold_domain(self):
        with pytest.raises(DomainError):
            om.n_min(0.9, 0.9, threshold=0.4)
        with pytest.raises(DomainError):
            om.n_min(0.9, 0.9, threshold=1.0)


class TestGlobalPhaseInvariance:
    def test_reports_unchanged_under_global_phase(self, fields256):
        f0, f1 = fields256["pa"], fields256["pb"]
        f1_rotated = om.ComplexField(f1.grid, f1.amplitudes * np.exp(0.7j))
        d0 = om.oam_decompose(f0)
        d1 = om.oam_decompose(f1)
        d1r = om.oam_decompose(f1_rotated)
        assert abs(om.state_overlap(d0, d1)) == pytest.approx(
            abs(om.state_overlap(d0, d1r)), abs=1e-12
        )
        assert om.helstrom_mixed(d0, d1) == pytest.approx(om.helstrom_mixed(d0, d1r), abs=1e-12)
        p = om.scheme_probability(om.optimal_scheme(d0, d1), d0, d1)
        pr = om.scheme_probability(om.optimal_scheme(d0, d1r), d0, d1r)
        assert p[0] == pytest.approx(pr[0], abs=1e-12)


class TestReportExport:
    def test_csv_and_json_consistency(self, analyses512):
        reports = [a.report for a in analyses512.values()]
        csv_text = om.report_csv(reports)
        lines = csv_text.strip().splitlines()
        assert len(lines) == 1 + len(reports)
        header = lines[0].split(",")
        assert header[:6] == ["pair", "overlap", "p_max_pure", "p_max_mixed", "p_rs", "p_oam"]
        for rep in reports:
            # full-precision JSON reproduces the pure bound from the overlap
            doc = __import__("oamsort").discriminate.report_to_json(rep)
            recomputed = om.helstrom_pure(doc["overlap_magnitude"])
            assert recomputed == pytest.approx(doc["p_max_pure"], abs=1e-12)

    def test_unreachable_rendering(self):
        rep = om.DiscriminationReport(
            label="same,same",
            overlap=1.0 + 0j,
            p_max_pure=0.5,
            p_max_mixed=0.5,
            p_real_space=0.5,
            p_oam_exact=0.5,
            p_oam_physical=0.5,
            s0=0.5,
            s1=0.5,
            rs_s0=0.5,
            rs_s1=0.5,
            thresholds=(0.9,),
            n_min_oam=(None,),
            n_min_rs=(None,),
            illuminated_area=32400.0,
        )
        text = om.report_csv([rep])
        assert "unreachable" in text
        assert rep.doses == (None,)


class TestChannelTable:
    def test_union_with_exclusive_channels(self, rng):
        a, b = random_mixed_pair(rng, 6)
        rows = list(_channel_table(a, b))
        assert [r[0] for r in rows] == sorted(set(a.ms) | set(b.ms))
        for m, qa, chia, qb, chib in rows:
            assert (qa > 0) == (chia is not None)
            assert (qb > 0) == (chib is not None)
