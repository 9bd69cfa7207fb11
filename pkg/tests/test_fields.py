import math

import numpy as np
import pytest
import scipy.constants as const

import oamsort as om
from oamsort.errors import DomainError, FormatError

from helpers import overlap_integral


def wavelength_oracle(kv):
    """Closed-form relativistic de Broglie wavelength in angstrom."""
    e_u = const.e * kv * 1e3
    rest = const.m_e * const.c**2
    return const.h / math.sqrt(2 * const.m_e * e_u * (1 + e_u / (2 * rest))) * 1e10


class TestElectronParams:
    def test_wavelength_300kv(self):
        p = om.electron_params(300.0)
        assert p.wavelength == pytest.approx(wavelength_oracle(300.0), rel=1e-12)
        assert p.wavelength == pytest.approx(0.0197, abs=2e-4)

    def test_wavelength_100kv(self):
        p = om.electron_params(100.0)
        assert p.wavelength == pytest.approx(wavelength_oracle(100.0), rel=1e-12)
        assert p.wavelength == pytest.approx(0.0370, abs=2e-4)

    def test_gamma_low_voltage_limit(self):
        gammas = [om.electron_params(kv).gamma for kv in (300.0, 100.0, 10.0, 1.0)]
        assert all(g1 > g2 for g1, g2 in zip(gammas, gammas[1:]))
        assert gammas[-1] == pytest.approx(1.0, abs=2.5e-3)

    def test_sigma_definition(self):
        # 2*pi*m0*gamma*e*lambda/h^2 per volt*angstrom
        p = om.electron_params(200.0)
        lam_m = p.wavelength * 1e-10
        expected = 2 * math.pi * const.m_e * p.gamma * const.e * lam_m / const.h**2 * 1e-10
        assert p.sigma == pytest.approx(expected, rel=1e-12)

    def test_lambda_strictly_decreasing(self):
        kvs = np.linspace(1.0, 3000.0, 40)
        lams = [om.electron_params(kv).wavelength for kv in kvs]
        assert all(a > b for a, b in zip(lams, lams[1:]))

    @pytest.mark.parametrize("kv", [0.5, 0.0, -10.0, 3001.0])
    def test_voltage_out_of_range(self, kv):
        with pytest.raises(DomainError):
            om.electron_params(kv)


class TestGridSpec:
    def test_pixel_and_area(self):
        g = om.GridSpec(128, 64.0)
        assert g.pixel == pytest.approx(0.5)
        assert g.area == pytest.approx(64.0**2)

    def test_axis_symmetric(self):
        ax = om.GridSpec(32, 16.0).axis()
        assert np.allclose(ax, -ax[::-1])

    @pytest.mark.parametrize("n", [12, 100, 500, 8])
    def test_rejects_bad_side(self, n):
        with pytest.raises(DomainError):
            om.GridSpec(n, 100.0)

    def test_rejects_bad_fov(self):
        with pytest.raises(DomainError):
            om.GridSpec(64, -1.0)


class TestComplexField:
    def test_normalize(self, grid256):
        f = om.ComplexField(grid256, np.full((256, 256), 3.0 + 4.0j))
        assert f.normalized().norm() == pytest.approx(1.0, abs=1e-12)

    def test_immutable(self, grid256):
        f = om.ComplexField(grid256, np.ones((256, 256), dtype=complex))
        with pytest.raises(ValueError):
            f.amplitudes[0, 0] = 0.0

    def test_sample_matches_grid_points(self, grid256):
        rng = np.random.default_rng(5)
        smooth = np.zeros((256, 256), dtype=complex)
        X, Y = grid256.mesh()
        for _ in range(4):
            cx, cy = rng.uniform(-40, 40, 2)
            smooth += np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / 80) * np.exp(1j * rng.uniform(-3, 3))
        f = om.ComplexField(grid256, smooth)
        ax = grid256.axis()
        got = f.sample(ax[::7], np.full_like(ax[::7], ax[100]))
        assert np.allclose(got, smooth[100, ::7], atol=1e-12)


class TestProbe:
    def test_unit_norm(self, probe512):
        assert probe512.norm() == pytest.approx(1.0, abs=1e-12)

    def test_supported_inside_disc(self, probe512, grid512):
        X, Y = grid512.mesh()
        outside = np.hypot(X, Y) >= grid512.fov * 17 / 36
        assert np.abs(probe512.amplitudes[outside]).max() == 0.0

    def test_bad_apodization(self, grid256):
        with pytest.raises(DomainError):
            om.plane_wave_probe(grid256, radius=200.0)


class TestPhantom:
    def test_rotational_symmetry_by_construction(self, grid256):
        base = om.make_phantom(grid256, 7)
        turned = om.make_phantom(grid256, 7, azimuth=2 * np.pi / 7)
        assert np.allclose(base.potential, turned.potential, atol=1e-9 * base.potential.max())

    def test_zero_peak(self, grid256):
        spec = om.make_phantom(grid256, 7, peak_potential=0.0)
        assert not spec.potential.any()

    def test_peak_value(self, grid256):
        spec = om.make_phantom(grid256, 5, peak_potential=123.0)
        assert spec.potential.max() == pytest.approx(123.0, rel=1e-12)

    def test_deterministic(self, grid256):
        one = om.make_phantom(grid256, 6, packing=0.5)
        two = om.make_phantom(grid256, 6, packing=0.5)
        assert np.array_equal(one.potential, two.potential)

    def test_geometry_error(self, grid256):
        with pytest.raises(DomainError):
            om.make_phantom(grid256, 7, ring_radius=85.0)

    @pytest.mark.parametrize("kwargs", [{"n_fold": 0}, {"n_fold": 3, "packing": 0.0}, {"n_fold": 3, "packing": 1.5}])
    def test_parameter_errors(self, grid256, kwargs):
        with pytest.raises(DomainError):
            om.make_phantom(grid256, **kwargs)


class TestInteract:
    def test_identity_specimen(self, probe256, grid256, params300):
        flat = om.SpecimenModel(grid256, np.zeros((256, 256)))
        out = om.interact(probe256, flat, params300)
        assert np.allclose(out.amplitudes, probe256.amplitudes, atol=1e-14)

    def test_pure_phase_preserves_modulus(self, probe256, grid256, params300):
        spec = om.make_phantom(grid256, 7)
        out = om.interact(probe256, spec, params300)
        assert np.allclose(np.abs(out.amplitudes), np.abs(probe256.amplitudes), atol=1e-12)

    def test_global_potential_offset_is_global_phase(self, probe256, grid256, params300):
        spec = om.make_phantom(grid256, 7)
        shifted = om.SpecimenModel(grid256, spec.potential + 250.0)
        f0 = om.interact(probe256, spec, params300)
        f1 = om.interact(probe256, shifted, params300)
        assert abs(overlap_integral(f0, f1)) == pytest.approx(1.0, abs=1e-12)

    def test_amplitude_mask_applies(self, probe256, grid256, params300):
        mask = np.full((256, 256), 0.5)
        mask[:128] = 1.0
        spec = om.SpecimenModel(grid256, np.zeros((256, 256)), amplitude=mask)
        out = om.interact(probe256, spec, params300)
        ratio = np.abs(out.amplitudes[200, 128]) / np.abs(out.amplitudes[50, 128])
        assert ratio == pytest.approx(0.5, rel=1e-9)

    def test_grid_mismatch(self, probe256, params300):
        other = om.SpecimenModel(om.GridSpec(128, 180.0), np.zeros((128, 128)))
        with pytest.raises(DomainError):
            om.interact(probe256, other, params300)

    def test_bad_amplitude_mask(self, grid256):
        with pytest.raises(DomainError):
            om.SpecimenModel(grid256, np.zeros((256, 256)), amplitude=np.full((256, 256), 1.5))


class TestPotentialMap:
    def test_round_trip_bit_exact(self, grid256, tmp_path):
        spec = om.make_phantom(grid256, 7, packing=0.7)
        path = tmp_path / "seven.pmap"
        om.save_potential_map(spec, path)
        back = om.load_potential_map(path)
        assert back.grid == spec.grid
        assert np.array_equal(back.potential, spec.potential)

    def test_rejects_non_power_of_two(self, tmp_path):
        path = tmp_path / "bad.pmap"
        path.write_text("PMAP1 500 180.0\n1.0 2.0\n")
        with pytest.raises(FormatError):
            om.load_potential_map(path)

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.pmap"
        path.write_text("XMAP 16 180.0\n" + " ".join(["0"] * 256) + "\n")
        with pytest.raises(FormatError):
            om.load_potential_map(path)

    def test_rejects_wrong_count(self, tmp_path):
        path = tmp_path / "bad.pmap"
        path.write_text("PMAP1 16 180.0\n1.0 2.0 3.0\n")
        with pytest.raises(FormatError):
            om.load_potential_map(path)

    def test_rejects_non_numeric(self, tmp_path):
        path = tmp_path / "bad.pmap"
        path.write_text("PMAP1 16 180.0\n" + " ".join(["x"] * 256) + "\n")
        with pytest.raises(FormatError):
            om.load_potential_map(path)
