import numpy as np
import pytest

from decadv.data import (AgentDataSource, Dataset, agent_rng, freeze_sources, gen_synthetic_binary,
                         load_csv_dataset, next_minibatch, partition_over_agents, to_signed_labels,
                         train_test_split)


def toy(n=10):
    return Dataset(np.arange(2 * n, dtype=float).reshape(n, 2), np.arange(n) % 2)


class TestSynthetic:
    def test_homogeneous(self):
        srcs = gen_synthetic_binary(5, 3, 0.0, seed=1)
        for s in srcs[1:]:
            np.testing.assert_array_equal(s.mean, srcs[0].mean)

    def test_single_agent(self):
        assert len(gen_synthetic_binary(1, 2, 0.4, seed=0)) == 1

    def test_shift_bound(self):
        srcs = gen_synthetic_binary(10, 2, 0.5, seed=3)
        means = np.array([s.mean for s in srcs])
        m0 = np.full(2, 1 / np.sqrt(2))
        assert np.all(np.linalg.norm(means - m0, axis=1) <= 0.5 + 1e-12)
        pair = np.linalg.norm(means[:, None] - means[None], axis=-1)
        assert pair.max() <= 1.0 + 1e-12

    def test_labels_and_moments(self):
        src = gen_synthetic_binary(1, 2, 0.0, seed=0, separation=np.array([1.0, 0.1]),
                                   feature_std=np.array([1.0, 0.01]))[0]
        d = src.draw(20000, np.random.default_rng(0))
        assert set(np.unique(d.y)) == {-1.0, 1.0}
        signed = d.X * d.y[:, None]
        np.testing.assert_allclose(signed.mean(axis=0), [1.0, 0.1], atol=0.03)
        np.testing.assert_allclose(signed.std(axis=0), [1.0, 0.01], rtol=0.05)

    def test_negative_heterogeneity(self):
        with pytest.raises(ValueError):
            gen_synthetic_binary(2, 2, -0.1)


class TestCSV:
    def test_header_toy(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,b,c,label\n1,2,3,0\n4,5,6,1\n7,8,9,1\n0,0,0,0\n")
        d = load_csv_dataset(p)
        assert len(d) == 4 and d.dim == 3
        np.testing.assert_array_equal(d.y, [0, 1, 1, 0])
        np.testing.assert_array_equal(d.X[1], [4, 5, 6])

    def test_label_by_name_and_index(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("label,x\n1,0.5\n0,0.25\n")
        np.testing.assert_array_equal(load_csv_dataset(p, "label").y, [1, 0])
        np.testing.assert_array_equal(load_csv_dataset(p, 0).X[:, 0], [0.5, 0.25])

    def test_normalize(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("2,10,0\n4,10,1\n3,10,1\n")
        X = load_csv_dataset(p, normalize=True).X
        np.testing.assert_allclose(X[:, 0], [0, 1, 0.5])
        np.testing.assert_allclose(X[:, 1], 0)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="not found"):
            load_csv_dataset(tmp_path / "absent.csv")

    def test_bad_cell_reports_line(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,y\n1,0\nzz,1\n")
        with pytest.raises(ValueError, match=":3:"):
            load_csv_dataset(p)

    def test_ragged_row(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("1,2,0\n1,0\n")
        with pytest.raises(ValueError, match=":2:"):
            load_csv_dataset(p)

    def test_missing_label_column(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,b\n1,0\n")
        with pytest.raises(ValueError, match="label"):
            load_csv_dataset(p, "label")
        with pytest.raises(ValueError, match="label"):
            load_csv_dataset(p, 5)

    def test_digit_subset_class_counts(self, tmp_path):
        datasets = pytest.importorskip("sklearn.datasets")
        digits = datasets.load_digits()
        keep = np.isin(digits.target, [0, 1])
        X, y = digits.data[keep][:200], digits.target[keep][:200]
        p = tmp_path / "digits01.csv"
        np.savetxt(p, np.column_stack([X, y]), delimiter=",", fmt="%g")
        d = load_csv_dataset(p, normalize=True)
        assert len(d) == 200 and d.dim == 64
        with open(p) as fh:
            file_labels = [int(float(line.rsplit(",", 1)[1])) for line in fh]
        for c in (0, 1):
            assert np.sum(d.y == c) == file_labels.count(c)
        assert d.X.min() >= 0 and d.X.max() <= 1


class TestPartition:
    def test_contiguous(self):
        a, b = partition_over_agents(toy(10), 2, "contiguous")
        np.testing.assert_array_equal(a.indices, range(5))
        np.testing.assert_array_equal(b.indices, range(5, 10))

    def test_one_each(self):
        parts = partition_over_agents(toy(7), 7)
        assert [len(p.pool) for p in parts] == [1] * 7

    def test_too_many_agents(self):
        with pytest.raises(ValueError):
            partition_over_agents(toy(3), 4)

    def test_shuffled_seeded(self):
        idx = lambda s: [tuple(p.indices) for p in partition_over_agents(toy(20), 3, "shuffled", s)]
        assert idx(1) == idx(1)
        assert idx(1) != idx(2)

    @pytest.mark.parametrize("n,K", [(10, 3), (17, 5), (5, 5), (100, 7)])
    def test_cover(self, n, K):
        parts = partition_over_agents(toy(n), K, "shuffled", 0)
        allidx = np.concatenate([p.indices for p in parts])
        assert sorted(allidx) == list(range(n))
        sizes = [len(p.indices) for p in parts]
        assert max(sizes) - min(sizes) <= 1


class TestMinibatch:
    def test_single_sample_pool(self):
        src = AgentDataSource(0, "pool", pool=Dataset(np.array([[1.0, 2.0]]), np.array([1])))
        X, y = next_minibatch(src, 1, np.random.default_rng(0))
        np.testing.assert_array_equal(X, [[1.0, 2.0]])

    def test_keyed_streams_differ(self):
        src = gen_synthetic_binary(1, 2, seed=0)[0]
        a = next_minibatch(src, 5, agent_rng(3, 0))[0]
        b = next_minibatch(src, 5, agent_rng(3, 1))[0]
        assert not np.array_equal(a, b)

    def test_frequencies(self):
        src = AgentDataSource(0, "pool", pool=toy(4))
        X, _ = next_minibatch(src, 10_000, np.random.default_rng(5))
        freq = np.array([np.mean(X[:, 0] == 2 * i) for i in range(4)])
        assert np.all(np.abs(freq - 0.25) <= 0.02)

    def test_batch_size(self):
        with pytest.raises(ValueError):
            next_minibatch(AgentDataSource(0, "pool", pool=toy(4)), 0, np.random.default_rng())


def test_freeze_sources_deterministic():
    srcs = gen_synthetic_binary(3, 2, 0.2, seed=1)
    a = freeze_sources(srcs, 50, 9)
    b = freeze_sources(srcs, 50, 9)
    for s, t in zip(a, b):
        assert s.mode == "pool" and len(s.pool) == 50
        np.testing.assert_array_equal(s.pool.X, t.pool.X)


def test_signed_labels_and_split():
    np.testing.assert_array_equal(to_signed_labels([0, 1, 1, 0]), [-1, 1, 1, -1])
    with pytest.raises(ValueError):
        to_signed_labels([0, 1, 2])
    tr, te = train_test_split(toy(10), 0.3, 0)
    assert len(tr) == 7 and len(te) == 3
    assert sorted(np.concatenate([tr.X[:, 0], te.X[:, 0]])) == list(np.arange(0, 20, 2))
