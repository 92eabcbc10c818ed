import math

import numpy as np
import pytest

from conftest import FOUR_PI
from mtflow.bubbles import (AnalysisConfig, Peak, analyze, bubble_scale, detect_peaks,
                            liouville_mass, liouville_profile, local_energy, neck_scan,
                            oscillation_stat, pointwise_bound, profile_error, quantize,
                            rescale_profile)
from mtflow.errors import UnderResolved
from mtflow.grid import Domain, Field, build_masked_grid, build_radial_grid


def synthetic_bubble(a, r_k, n=4096):
    """``u = a + eta_0(r / r_k) / a`` clipped at zero, with the matching ``lam``."""
    g = build_radial_grid(1.0, n)
    v = a + liouville_profile(g.coords / r_k) / a
    v = np.maximum(v, 0.0)
    v[-1] = 0.0
    lam = (2.0 / (r_k * a * math.exp(0.5 * a * a))) ** 2
    return Field(g, v), lam


@pytest.fixture(scope="module")
def bubble():
    return synthetic_bubble(15.0, 0.01)


class TestReference:
    def test_profile(self):
        assert liouville_profile(0.0) == 0.0
        assert liouville_profile(1.0) == pytest.approx(-math.log(2))
        pts = np.array([[3.0, 4.0]])
        assert liouville_profile(pts)[0] == pytest.approx(-math.log(26))

    @pytest.mark.parametrize("L, expected", [(1.0, 2 * math.pi), (math.inf, FOUR_PI),
                                             (2.0, 16 * math.pi / 5)])
    def test_mass(self, L, expected):
        assert liouville_mass(L) == pytest.approx(expected)

    def test_mass_matches_quadrature(self):
        from scipy.integrate import quad
        for L in (1.0, 2.0, 8.0):
            val, _ = quad(lambda r: 2 * math.pi * r * 4 / (1 + r * r) ** 2, 0, L)
            assert liouville_mass(L) == pytest.approx(val, rel=1e-10)

    @pytest.mark.parametrize("u, lam, expected", [(1.0, 4.0, math.exp(-0.5)),
                                                  (2.0, 1.0, math.exp(-2.0))])
    def test_scale_examples(self, u, lam, expected):
        assert bubble_scale(u, lam) == pytest.approx(expected)

    def test_scale_monotone(self):
        us = np.linspace(0.5, 10, 50)
        r = [bubble_scale(u, 2.0) for u in us]
        assert np.all(np.diff(r) < 0)

    def test_scale_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            bubble_scale(0.0, 1.0)
        with pytest.raises(ValueError):
            bubble_scale(1.0, 0.0)


class TestQuantize:
    def test_one_bubble(self):
        l, dev, verdict = quantize(12.2)
        assert l == 1 and verdict == "quantized"
        assert dev == pytest.approx(FOUR_PI - 12.2)

    def test_two_bubbles(self):
        l, dev, verdict = quantize(25.3)
        assert (l, verdict) == (2, "quantized")
        assert dev == pytest.approx(25.3 - 2 * FOUR_PI)

    def test_non_concentrating(self):
        assert quantize(0.1)[::2] == (0, "non-concentrating")

    def test_anomalous(self):
        assert quantize(1.5 * FOUR_PI, 0.1)[2] == "anomalous"

    def test_negative(self):
        with pytest.raises(ValueError):
            quantize(-1.0)


class TestSyntheticBubble:
    def test_profile_matches_reference(self, bubble):
        u, lam = bubble
        prof = rescale_profile(u, [0.0, 0.0], bubble_scale(15.0, lam), L=4.0)
        assert profile_error(prof) < 1e-3
        assert prof.eta[0] == pytest.approx(0.0, abs=1e-12)
        assert np.all(prof.eta <= 1e-6)
        assert prof.rows().shape == (prof.eta.size, 4)

    def test_local_energy_is_liouville_mass(self, bubble):
        u, lam = bubble
        r_k = bubble_scale(15.0, lam)
        for L in (1.0, 2.0, 3.0):
            assert local_energy(u, lam, [0.0, 0.0], L * r_k) == pytest.approx(liouville_mass(L),
                                                                             rel=0.02)

    def test_neck_exponent(self, bubble):
        u, lam = bubble
        r_k = bubble_scale(15.0, lam)
        scan = neck_scan(u, lam, [0.0, 0.0], 4 * r_k, 16 * r_k, r_k=r_k)
        assert 1.8 <= scan.b <= 2.0

    def test_neck_additivity(self, bubble):
        u, lam = bubble
        r_k = bubble_scale(15.0, lam)
        s, t = 2 * r_k, 10 * r_k
        scan = neck_scan(u, lam, [0.0, 0.0], s, t, m=6)
        lhs = local_energy(u, lam, [0.0, 0.0], t)
        rhs = local_energy(u, lam, [0.0, 0.0], s) + scan.N.sum()
        assert lhs == pytest.approx(rhs, rel=1e-12)
        assert scan.radii[0] == pytest.approx(s) and scan.radii[-1] == pytest.approx(t)

    def test_neck_validation(self, bubble):
        u, lam = bubble
        with pytest.raises(ValueError):
            neck_scan(u, lam, [0.0, 0.0], 0.1, 0.05)
        with pytest.raises(ValueError):
            neck_scan(u, lam, [0.0, 0.0], 0.01, 0.05, m=3)

    def test_analyze_single_bubble(self):
        u, lam = synthetic_bubble(15.0, 0.005, n=8192)
        cfg = AnalysisConfig(L_energy=12.0)
        rep = analyze(u, lam, cfg)
        assert len(rep.bubbles) == 1
        b = rep.bubbles[0]
        assert b.l_nearest == 1 and b.verdict == "quantized"
        assert b.profile_err < 1e-3
        assert b.scale_residual < 1e-12
        assert b.neck is not None and 1.8 <= b.neck["b"] <= 2.0
        assert rep.to_dict()["bubbles"][0]["u_peak"] == 15.0

    def test_under_resolved(self):
        u, lam = synthetic_bubble(15.0, 0.01, n=256)
        with pytest.raises(UnderResolved):
            rescale_profile(u, [0.0, 0.0], bubble_scale(15.0, lam))
        rep = analyze(u, lam)
        assert rep.bubbles[0].profile_err is None
        assert "grid spacings" in rep.bubbles[0].note


@pytest.fixture(scope="module")
def rect():
    return build_masked_grid(Domain.rectangle(-1.5, 1.5, -1, 1), 1 / 64)


class TestPeaks:
    @staticmethod
    def bumps(g, spec):
        x, y = g.coords[:, 0], g.coords[:, 1]
        v = sum(A * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / 0.01) for A, cx, cy in spec)
        v[g.boundary] = 0.0
        return Field(g, v)

    def test_single_bump(self, rect):
        u = self.bumps(rect, [(2.5, 0.2, 0.1)])
        peaks = detect_peaks(u, 1.0)
        assert len(peaks) == 1
        assert np.allclose(peaks[0].x, [0.2, 0.1], atol=rect.h)

    def test_two_bumps(self, rect):
        u = self.bumps(rect, [(2.5, -0.6, 0.0), (2.2, 0.6, 0.1)])
        peaks = detect_peaks(u, 1.0)
        assert len(peaks) == 2
        assert np.allclose(peaks[0].x, [-0.6, 0.0], atol=rect.h)
        assert np.allclose(peaks[1].x, [0.6, 0.1], atol=rect.h)
        assert peaks[0].u_peak > peaks[1].u_peak

    def test_zero_field(self, rect):
        assert detect_peaks(Field.zeros(rect), 1.0) == []
        rep = analyze(Field.zeros(rect), 1.0)
        assert rep.bubbles == [] and rep.pointwise_C is None

    def test_radial_returns_global_max(self, ball256):
        u = Field.from_function(ball256, lambda r: np.sin(3 * np.pi * r) ** 2 + 1 - r)
        peaks = detect_peaks(u, 1.0)
        assert len(peaks) == 1 and peaks[0].index == int(np.argmax(u.values))

    def test_pointwise_and_oscillation_zero(self, rect):
        z = Field.zeros(rect)
        p = [Peak(0, np.array([0.0, 0.0]), 0.0, 1.0)]
        assert pointwise_bound(z, 1.0, p) == 0.0
        assert oscillation_stat(z, p) == 0.0
        with pytest.raises(ValueError):
            pointwise_bound(z, 1.0, [])
        with pytest.raises(ValueError):
            oscillation_stat(z, [])

    def test_pointwise_bound_scaling(self, rect):
        u = self.bumps(rect, [(1.0, 0.0, 0.0)])
        p = detect_peaks(u, 1.0)
        assert pointwise_bound(u, 2.0, p) == pytest.approx(2 * pointwise_bound(u, 1.0, p))


def test_cartesian_profile_sampling():
    g = build_masked_grid(Domain.ball(1.0), 1 / 128)
    # a smooth field sampled by bilinear interpolation reproduces linear data exactly
    u = Field(g, np.where(g.boundary, 0.0, 1 + g.coords[:, 0]), h10=True)
    prof = rescale_profile(u, [0.1, 0.0], 0.1, L=2.0, density=8, u_peak=1.1)
    assert prof.x.ndim == 2
    expected = 1.1 * (1.1 + 0.1 * prof.x[:, 0] - 1.1)
    assert np.allclose(prof.eta, expected, atol=1e-12)
