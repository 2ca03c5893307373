import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sje.embeddings import (
    InputEmbeddingSet,
    OutputEmbeddingTable,
    SplitSpec,
    ZeroRowWarning,
    binarize_attributes,
    l2_normalize_rows,
    load_feature_matrix,
    load_output_table,
    load_split,
    make_split,
    save_feature_matrix,
    save_output_table,
    save_split,
)
from sje.errors import ParseError, ValidationError

from conftest import write


class TestLoadFeatureMatrix:
    def test_three_samples(self, tmp_path):
        p = write(tmp_path / "f.txt", "D=2\nclassA\t1.0,0.0\nclassB\t0.0,1.0\nclassA\t0.5,0.5\n")
        data = load_feature_matrix(p)
        assert data.n_samples == 3 and data.dim == 2
        assert data.class_names == ("classA", "classB")
        np.testing.assert_array_equal(data.labels, [0, 1, 0])
        np.testing.assert_array_equal(data.features[2], [0.5, 0.5])

    def test_row_length_mismatch_names_line(self, tmp_path):
        p = write(tmp_path / "f.txt", "D=2\nclassA\t1.0,0.0\nclassB\t1.0,2.0,3.0\n")
        with pytest.raises(ParseError, match="row length mismatch at line 3"):
            load_feature_matrix(p)

    def test_empty_sample_section(self, tmp_path):
        p = write(tmp_path / "f.txt", "D=2\n")
        with pytest.raises(ParseError, match="N >= 1 violated"):
            load_feature_matrix(p)

    @pytest.mark.parametrize("header", ["D2", "X=3", "D=zero", "D=0", ""])
    def test_malformed_header(self, tmp_path, header):
        p = write(tmp_path / "f.txt", header + "\nclassA\t1.0\n")
        with pytest.raises(ParseError, match="line 1|malformed"):
            load_feature_matrix(p)

    def test_non_finite(self, tmp_path):
        p = write(tmp_path / "f.txt", "D=2\nclassA\t1.0,nan\n")
        with pytest.raises(ParseError, match="non-finite value at line 2"):
            load_feature_matrix(p)

    def test_unknown_class(self, tmp_path):
        p = write(tmp_path / "f.txt", "D=1\nclassA\t1.0\nzebra\t2.0\n")
        with pytest.raises(ParseError, match="unknown class 'zebra' at line 3"):
            load_feature_matrix(p, class_names=["classA", "classB"])

    def test_labels_follow_given_order(self, tmp_path):
        p = write(tmp_path / "f.txt", "D=1\nclassA\t1.0\n")
        data = load_feature_matrix(p, class_names=["classB", "classA"])
        assert data.labels.tolist() == [1]

    def test_round_trip(self, tmp_path):
        data = InputEmbeddingSet(np.array([[0.1, -2.5], [1e-17, 3.0]]), [1, 0], ("x", "y"))
        save_feature_matrix(data, tmp_path / "f.txt")
        back = load_feature_matrix(tmp_path / "f.txt", data.class_names)
        np.testing.assert_array_equal(back.features, data.features)
        np.testing.assert_array_equal(back.labels, data.labels)


class TestLoadOutputTable:
    def test_85_dim(self, tmp_path):
        rows = "\n".join(f"{n}\t" + ",".join(["0.5"] * 85) for n in ("zebra", "whale"))
        table = load_output_table(write(tmp_path / "t.txt", f"E=85 kind=attributes-continuous\n{rows}\n"))
        assert table.dim == 85 and table.n_classes == 2
        assert table.kind == "attributes-continuous"

    def test_binary_rejects_half(self, tmp_path):
        p = write(tmp_path / "t.txt", "E=2 kind=attributes-binary\nrat\t0,1\nwhale\t0.5,1\n")
        with pytest.raises(ParseError, match="non-binary"):
            load_output_table(p)

    def test_duplicate_class(self, tmp_path):
        p = write(tmp_path / "t.txt", "E=1 kind=bow\nrat\t1\nrat\t2\n")
        with pytest.raises(ParseError, match="duplicate class"):
            load_output_table(p)

    def test_kind_override_and_missing_kind(self, tmp_path):
        p = write(tmp_path / "t.txt", "E=1\nrat\t1\n")
        assert load_output_table(p, kind="hierarchy").kind == "hierarchy"
        with pytest.raises(ParseError, match="kind"):
            load_output_table(p)

    def test_round_trip(self, tmp_path):
        t = OutputEmbeddingTable(("a b", "c"), [[0.1, 0.2], [1 / 3, -4.0]], "word-vector")
        save_output_table(t, tmp_path / "t.txt")
        back = load_output_table(tmp_path / "t.txt")
        assert back.class_names == t.class_names and back.kind == t.kind
        np.testing.assert_array_equal(back.vectors, t.vectors)


class TestNormalize:
    def test_examples(self):
        t = OutputEmbeddingTable(("a", "b", "c"), [[3, 4], [0, 0], [1, 0]], "bow")
        with pytest.warns(ZeroRowWarning, match="'b'"):
            out = l2_normalize_rows(t)
        np.testing.assert_allclose(out.vectors, [[0.6, 0.8], [0, 0], [1, 0]], atol=1e-15)
        assert out.kind == "bow"

    def test_no_warning_without_zero_rows(self):
        t = OutputEmbeddingTable(("a",), [[1.0, 0.0]], "bow")
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            l2_normalize_rows(t)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (5, 4), elements=st.floats(-1e6, 1e6)))
    def test_unit_norm_property(self, v):
        t = OutputEmbeddingTable(tuple("abcde"), v, "bow")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ZeroRowWarning)
            out = l2_normalize_rows(t).vectors
        norms = np.linalg.norm(out, axis=1)
        nz = np.any(v != 0, axis=1)
        assert np.all(np.abs(norms[nz] - 1) <= 1e-9)
        assert np.all(out[~nz] == 0)


class TestBinarize:
    def test_rat_monkey_whale(self):
        t = OutputEmbeddingTable(("rat", "monkey", "whale"), [[2], [10], [90]], "attributes-continuous")
        out = binarize_attributes(t)
        assert out.kind == "attributes-binary"
        assert out.vectors[:, 0].tolist() == [0, 0, 1]

    def test_constant_column(self):
        t = OutputEmbeddingTable(("a", "b", "c"), [[5], [5], [5]], "attributes-continuous")
        assert binarize_attributes(t).vectors[:, 0].tolist() == [0, 0, 0]

    def test_two_values(self):
        t = OutputEmbeddingTable(("a", "b"), [[0], [1]], "attributes-continuous")
        assert binarize_attributes(t).vectors[:, 0].tolist() == [0, 1]

    def test_per_attribute_threshold(self):
        t = OutputEmbeddingTable(("a", "b"), [[0, 100], [1, 200]], "attributes-continuous")
        assert binarize_attributes(t).vectors.tolist() == [[0, 0], [1, 1]]

    def test_requires_continuous(self):
        t = OutputEmbeddingTable(("a",), [[1]], "attributes-binary")
        with pytest.raises(ValidationError):
            binarize_attributes(t)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.int8, (6, 3), elements=st.integers(0, 1)))
    def test_idempotent_on_binary(self, bits):
        t = OutputEmbeddingTable(tuple("abcdef"), bits, "attributes-continuous")
        once = binarize_attributes(t).vectors
        assert set(np.unique(once)) <= {0.0, 1.0}
        constant = np.all(bits == bits[0], axis=0)
        np.testing.assert_array_equal(once[:, ~constant], bits[:, ~constant])
        assert np.all(once[:, constant] == 0)
        again = binarize_attributes(OutputEmbeddingTable(t.class_names, once, "attributes-continuous")).vectors
        np.testing.assert_array_equal(again, once)


class TestSplit:
    @pytest.mark.parametrize("total,trainval,test", [(200, 150, 50), (50, 40, 10), (113, 85, 28)])
    def test_dataset_sizes(self, total, trainval, test):
        n_val = trainval // 5
        s = make_split(range(total), n_train=trainval - n_val, n_val=n_val, n_test=test, seed=1)
        assert len(s.train | s.val) == trainval and len(s.test) == test
        assert not (s.train & s.val or s.train & s.test or s.val & s.test)

    def test_deterministic(self):
        a = make_split(range(30), n_train=10, n_val=5, n_test=5, seed=7)
        b = make_split(range(30), n_train=10, n_val=5, n_test=5, seed=7)
        c = make_split(range(30), n_train=10, n_val=5, n_test=5, seed=8)
        assert a == b
        assert a != c

    def test_too_many(self):
        with pytest.raises(ValidationError, match="exceed"):
            make_split(range(10), n_train=5, n_val=3, n_test=3, seed=0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(3, 60), st.integers(0, 2**32 - 1), st.data())
    def test_disjoint_property(self, n, seed, data):
        a = data.draw(st.integers(1, n - 2))
        b = data.draw(st.integers(1, n - a - 1))
        c = data.draw(st.integers(1, n - a - b))
        s = make_split(range(n), n_train=a, n_val=b, n_test=c, seed=seed)
        assert (len(s.train), len(s.val), len(s.test)) == (a, b, c)
        assert not (s.train & s.val or s.train & s.test or s.val & s.test)

    def test_overlap_rejected(self):
        with pytest.raises(ValidationError, match="disjoint"):
            SplitSpec({0, 1}, {1}, {2})

    def test_empty_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            SplitSpec({0}, set(), {2})

    def test_file_round_trip(self, tmp_path):
        names = ("a", "b", "c", "d")
        s = SplitSpec({0, 3}, {1}, {2})
        save_split(s, names, tmp_path / "s.txt")
        assert load_split(tmp_path / "s.txt", names) == s

    def test_file_unknown_role(self, tmp_path):
        p = write(tmp_path / "s.txt", "a\ttrain\nb\tholdout\n")
        with pytest.raises(ParseError, match="line 2"):
            load_split(p, ("a", "b"))


class TestTypes:
    def test_input_rejects_nonfinite(self):
        with pytest.raises(ValidationError):
            InputEmbeddingSet([[np.inf]], [0], ("a",))

    def test_immutable(self, identity_data):
        with pytest.raises(ValueError):
            identity_data.features[0, 0] = 5

    def test_duplicate_names(self):
        with pytest.raises(ValidationError, match="duplicate"):
            OutputEmbeddingTable(("a", "a"), np.eye(2), "bow")

    def test_reindex(self, two_class_table):
        r = two_class_table.reindex(["b", "a"])
        np.testing.assert_array_equal(r.vectors, [[0, 1], [1, 0]])
        with pytest.raises(ValidationError, match="missing"):
            two_class_table.reindex(["c"])
