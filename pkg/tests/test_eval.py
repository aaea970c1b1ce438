import numpy as np
import pytest

from bmtas.errors import ConfigError, DimensionMismatch, DomainError
from bmtas.eval import (
    MetricRecord,
    SyntheticTaskSpec,
    delta_m,
    generate_tasks,
    load_dataset,
    rsa_matrix,
    save_dataset,
)
from bmtas.partition import Partition
from bmtas.seeding import rng_stream


class TestMetricRecord:
    def test_validation(self):
        with pytest.raises(DimensionMismatch):
            MetricRecord(values=(1.0,), lower_better=(False, True))
        with pytest.raises(DimensionMismatch):
            MetricRecord(values=(1.0,), lower_better=(False,), names=("a", "b"))
        with pytest.raises(DomainError):
            MetricRecord(values=(float("nan"),), lower_better=(False,))

    def test_json_round_trip(self):
        rec = MetricRecord(
            values=(61.4, 14.7), lower_better=(False, True), names=("seg", "norm")
        )
        back = MetricRecord.from_json(rec.to_json())
        assert back == rec

    def test_json_default_names(self):
        rec = MetricRecord(values=(1.0, 2.0), lower_better=(False, False))
        obj = rec.to_json()
        assert [r["name"] for r in obj["tasks"]] == ["t0", "t1"]


class TestDeltaM:
    def test_sign_conventions(self):
        base = MetricRecord(values=(100.0, 10.0), lower_better=(False, True))
        # higher-better up 10%, lower-better down 10%: both improvements
        model = MetricRecord(values=(110.0, 9.0), lower_better=(False, True))
        assert delta_m(model, base) == pytest.approx(10.0)
        # both degrade by 10%
        model = MetricRecord(values=(90.0, 11.0), lower_better=(False, True))
        assert delta_m(model, base) == pytest.approx(-10.0)

    def test_identity_is_zero(self):
        base = MetricRecord(values=(3.0, 4.0), lower_better=(True, False))
        assert delta_m(base, base) == 0.0

    def test_zero_baseline_rejected(self):
        base = MetricRecord(values=(0.0,), lower_better=(False,))
        model = MetricRecord(values=(1.0,), lower_better=(False,))
        with pytest.raises(DomainError):
            delta_m(model, base)

    def test_direction_and_name_mismatches_rejected(self):
        a = MetricRecord(values=(1.0,), lower_better=(False,))
        b = MetricRecord(values=(1.0,), lower_better=(True,))
        with pytest.raises(DimensionMismatch):
            delta_m(a, b)
        c = MetricRecord(values=(1.0,), lower_better=(False,), names=("x",))
        d = MetricRecord(values=(1.0,), lower_better=(False,), names=("y",))
        with pytest.raises(DimensionMismatch):
            delta_m(c, d)
        e = MetricRecord(values=(1.0, 2.0), lower_better=(False, False))
        with pytest.raises(DimensionMismatch):
            delta_m(a, e)


class TestRsaMatrix:
    def test_diagonal_and_symmetry(self):
        rng = rng_stream(20, "rsa")
        feats = [rng.normal(size=(12, 5)) for _ in range(3)]
        rsa = rsa_matrix(feats)
        assert rsa.shape == (3, 3)
        assert np.allclose(np.diag(rsa), 1.0)
        assert np.allclose(rsa, rsa.T, equal_nan=True)
        assert np.all(rsa[np.isfinite(rsa)] <= 1.0 + 1e-12)

    def test_identical_encoders_score_one(self):
        f = rng_stream(21).normal(size=(10, 4))
        rsa = rsa_matrix([f, f.copy()])
        assert rsa[0, 1] == pytest.approx(1.0)

    def test_constant_features_yield_nan(self):
        f = rng_stream(22).normal(size=(8, 4))
        flat = np.ones((8, 4))
        rsa = rsa_matrix([f, flat])
        assert np.isnan(rsa[0, 1])
        assert rsa[0, 0] == 1.0

    def test_probe_requirements(self):
        with pytest.raises(DimensionMismatch):
            rsa_matrix([])
        with pytest.raises(DimensionMismatch):
            rsa_matrix([np.zeros((2, 3))])
        with pytest.raises(DimensionMismatch):
            rsa_matrix([np.zeros((5, 3)), np.zeros((4, 3))])


def pair_spec(**overrides):
    base = dict(
        num_tasks=4,
        input_dim=16,
        hidden_dim=4,
        target_dim=3,
        relatedness=Partition((0, 0, 1, 1)),
    )
    base.update(overrides)
    return SyntheticTaskSpec(**base)


class TestSyntheticTaskSpec:
    def test_validation(self):
        with pytest.raises(DimensionMismatch):
            pair_spec(relatedness=Partition((0, 0, 1)))
        with pytest.raises(DomainError):
            pair_spec(noise_std=-0.1)
        with pytest.raises(DomainError):
            pair_spec(signal_scale=0.0)
        with pytest.raises(DomainError):
            pair_spec(hidden_dim=0)
        with pytest.raises(DomainError):
            pair_spec(train_samples=0)


class TestGenerateTasks:
    def test_shapes_and_names(self):
        data = generate_tasks(pair_spec(), rng_stream(23, "data"))
        assert data.task_names == ("t0", "t1", "t2", "t3")
        assert data.inputs_train.shape == (512, 16)
        assert data.inputs_test.shape == (256, 16)
        assert all(y.shape == (512, 3) for y in data.targets_train)
        assert data.num_tasks == 4 and data.input_dim == 16
        assert data.target_dims == (3, 3, 3, 3)

    def test_noiseless_targets_live_in_group_subspace(self):
        # related tasks share an input subspace: their clean targets are
        # linear in the same hidden projection, unrelated groups orthogonal
        spec = pair_spec(noise_std=0.0, train_samples=4000)
        data = generate_tasks(spec, rng_stream(24, "data"))
        y = [t - t.mean(axis=0) for t in data.targets_train]
        within = np.abs(np.corrcoef(y[0].T, y[1].T)[:3, 3:]).max()
        cross = np.abs(np.corrcoef(y[0].T, y[2].T)[:3, 3:]).max()
        assert within > 0.5
        assert cross < 0.1

    def test_signal_scale_sets_amplitude(self):
        small = generate_tasks(
            pair_spec(noise_std=0.0, signal_scale=0.1), rng_stream(25, "data")
        )
        large = generate_tasks(
            pair_spec(noise_std=0.0, signal_scale=1.0), rng_stream(25, "data")
        )
        ratio = large.targets_train[0].std() / small.targets_train[0].std()
        assert ratio == pytest.approx(10.0, rel=1e-9)

    def test_share_private_makes_pair_targets_identical(self):
        spec = pair_spec(noise_std=0.0, share_private=True)
        data = generate_tasks(spec, rng_stream(26, "data"))
        assert np.allclose(data.targets_train[0], data.targets_train[1])
        assert not np.allclose(data.targets_train[0], data.targets_train[2])

    def test_seeded_and_deterministic(self):
        a = generate_tasks(pair_spec(), rng_stream(27, "data"))
        b = generate_tasks(pair_spec(), rng_stream(27, "data"))
        assert np.array_equal(a.inputs_train, b.inputs_train)
        assert all(
            np.array_equal(x, y) for x, y in zip(a.targets_train, b.targets_train)
        )

    def test_select_tasks_keeps_names_and_rows(self):
        data = generate_tasks(pair_spec(), rng_stream(28, "data"))
        sub = data.select_tasks([2])
        assert sub.task_names == ("t2",)
        assert np.array_equal(sub.targets_train[0], data.targets_train[2])
        assert sub.inputs_train is data.inputs_train


class TestDatasetCache:
    def test_round_trip(self, tmp_path):
        data = generate_tasks(pair_spec(), rng_stream(29, "data"))
        path = tmp_path / "bench.bmtb"
        save_dataset(data, path)
        back = load_dataset(path)
        assert back.task_names == data.task_names
        assert np.array_equal(back.inputs_train, data.inputs_train)
        assert np.array_equal(back.inputs_test, data.inputs_test)
        for x, y in zip(back.targets_train, data.targets_train):
            assert np.array_equal(x, y)
        for x, y in zip(back.targets_test, data.targets_test):
            assert np.array_equal(x, y)

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bogus.bmtb"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ConfigError):
            load_dataset(path)

    def test_rejects_wrong_version(self, tmp_path):
        data = generate_tasks(pair_spec(), rng_stream(30, "data"))
        path = tmp_path / "bench.bmtb"
        save_dataset(data, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99  # bump the little-endian version field
        path.write_bytes(bytes(raw))
        with pytest.raises(ConfigError):
            load_dataset(path)
