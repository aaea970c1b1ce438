import numpy as np
import pytest
from scipy.special import softmax

from bmtas.errors import BoundsError, DomainError
from bmtas.relax import (
    GumbelSample,
    TemperatureSchedule,
    discretize,
    draw_sample,
    gumbel_noise,
    sample_soft,
    schedule_tau,
    soft_row,
)
from bmtas.resloss import ArchitectureParams
from bmtas.seeding import rng_stream


class TestTemperatureSchedule:
    def test_linear_interpolation(self):
        sched = TemperatureSchedule(start=5.0, end=0.1, total_steps=100)
        assert schedule_tau(sched, 0) == 5.0
        assert schedule_tau(sched, 100) == pytest.approx(0.1)
        assert schedule_tau(sched, 50) == pytest.approx(2.55)

    def test_monotone_decrease(self):
        sched = TemperatureSchedule(total_steps=10)
        taus = [schedule_tau(sched, s) for s in range(11)]
        assert all(a >= b for a, b in zip(taus, taus[1:]))

    def test_step_bounds(self):
        sched = TemperatureSchedule(total_steps=10)
        with pytest.raises(BoundsError):
            schedule_tau(sched, 11)
        with pytest.raises(BoundsError):
            schedule_tau(sched, -1)

    def test_rejects_bad_ranges(self):
        with pytest.raises(DomainError):
            TemperatureSchedule(start=0.1, end=5.0)
        with pytest.raises(DomainError):
            TemperatureSchedule(start=1.0, end=0.0)
        with pytest.raises(DomainError):
            TemperatureSchedule(total_steps=0)


class TestGumbelNoise:
    def test_finite_everywhere(self):
        g = gumbel_noise((1000, 4), rng_stream(0, "noise"))
        assert np.all(np.isfinite(g))

    def test_location_scale_moments(self):
        # standard Gumbel: mean = Euler-Mascheroni, var = pi^2 / 6
        g = gumbel_noise((200000,), rng_stream(1, "noise"))
        assert g.mean() == pytest.approx(0.5772, abs=0.02)
        assert g.var() == pytest.approx(np.pi ** 2 / 6, abs=0.05)


class TestSoftSampling:
    def test_soft_row_formula(self):
        logits = np.array([1.0, -0.5, 0.2])
        noise = np.array([0.3, 0.0, -0.7])
        tau = 0.7
        assert np.allclose(
            soft_row(logits, noise, tau), softmax((logits + noise) / tau)
        )

    def test_positive_temperature_required(self):
        with pytest.raises(DomainError):
            soft_row(np.zeros(2), np.zeros(2), 0.0)
        a = ArchitectureParams.zeros(2, 1)
        with pytest.raises(DomainError):
            draw_sample(a, 0, -1.0, rng_stream(0))

    def test_sample_soft_is_a_distribution(self):
        a = ArchitectureParams.zeros(3, 2)
        rng = rng_stream(2, "soft")
        row = sample_soft(a, 1, 2, 0.5, rng)
        assert row.shape == (3,)
        assert np.all(row > 0) and row.sum() == pytest.approx(1.0)

    def test_bounds(self):
        a = ArchitectureParams.zeros(2, 2)
        rng = rng_stream(3)
        with pytest.raises(BoundsError):
            sample_soft(a, 2, 1, 1.0, rng)
        with pytest.raises(BoundsError):
            sample_soft(a, 0, 3, 1.0, rng)
        with pytest.raises(BoundsError):
            draw_sample(a, 5, 1.0, rng)

    def test_draw_sample_reproducible_from_noise(self):
        a = ArchitectureParams(np.random.default_rng(0).normal(size=(2, 3, 2)))
        sample = draw_sample(a, 0, 0.8, rng_stream(4, "gumbel"))
        rebuilt = softmax((a.logits[0] + sample.noise) / 0.8, axis=1)
        assert np.allclose(sample.z, rebuilt)

    def test_low_tau_concentrates(self):
        a = ArchitectureParams.zeros(2, 1)
        z = draw_sample(a, 0, 0.001, rng_stream(5)).z
        assert z.max() > 0.999


class TestGumbelSample:
    def test_validates_rows(self):
        with pytest.raises(DomainError):
            GumbelSample(z=np.array([[0.5, 0.6]]), noise=np.zeros((1, 2)), tau=1.0)
        with pytest.raises(DomainError):
            GumbelSample(z=np.array([[1.0, 0.0]]), noise=np.zeros((1, 2)), tau=1.0)
        with pytest.raises(DomainError):
            GumbelSample(z=np.array([[0.5, 0.5]]), noise=np.zeros((2, 2)), tau=1.0)

    def test_read_only(self):
        s = GumbelSample(z=np.array([[0.5, 0.5]]), noise=np.zeros((1, 2)), tau=1.0)
        with pytest.raises(ValueError):
            s.z[0, 0] = 0.9


class TestDiscretize:
    def test_argmax_per_task_and_layer(self):
        logits = np.zeros((2, 2, 3))
        logits[0, 0, 2] = 1.0
        logits[0, 1, 1] = 1.0
        logits[1, 0, 0] = 1.0
        logits[1, 1, 2] = 1.0
        masks = discretize(ArchitectureParams(logits))
        assert masks[0].choices() == (2, 1)
        assert masks[1].choices() == (0, 2)
        assert all(m.mode == "discrete" for m in masks)

    def test_ties_pick_lowest_index(self):
        masks = discretize(ArchitectureParams.zeros(3, 2))
        for m in masks:
            assert m.choices() == (0, 0)


def test_gumbel_softmax_limit_matches_softmax():
    """At low temperature argmax frequencies approach the softmax itself."""
    rng = rng_stream(6, "limit")
    logits = np.array([0.8, -0.3, 0.1, -1.2])
    a = ArchitectureParams(logits.reshape(1, 1, 4).repeat(4, axis=0).copy())
    counts = np.zeros(4)
    n = 4000
    for _ in range(n):
        counts[np.argmax(sample_soft(a, 0, 1, 0.05, rng))] += 1
    assert np.abs(counts / n - softmax(logits)).max() < 0.03
