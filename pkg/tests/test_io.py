import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from seqfill.io import (DataFormatError, file_sha256, format_float, load_model, read_mask, read_matrix,
                        read_sequence, save_model, write_mask, write_matrix, write_sequence)
from seqfill.mixture import ISOTROPIC, GaussianMixture
from seqfill.training import TrainConfig, gtm_fit


def write(path, text):
    path.write_text(text)
    return path


class TestSequenceFiles:
    def test_header_and_missing_cells(self, tmp_path):
        seq = read_sequence(write(tmp_path / "s.csv", "a,b\n1.0,\n,2.5\n"))
        assert seq.header == ["a", "b"]
        np.testing.assert_array_equal(seq.mask, [[True, False], [False, True]])
        assert seq.values[0, 0] == 1.0 and seq.values[1, 1] == 2.5
        assert seq.timestamps is None

    def test_all_missing_row_is_kept(self, tmp_path):
        seq = read_sequence(write(tmp_path / "s.csv", "1,2\n,\n\n3,4\n"))
        assert seq.values.shape == (3, 2)
        assert not seq.mask[1].any()

    def test_headerless(self, tmp_path):
        seq = read_sequence(write(tmp_path / "s.csv", "1,2\n3,4\n"))
        assert seq.header is None
        np.testing.assert_array_equal(seq.values, [[1, 2], [3, 4]])

    def test_timestamp_column(self, tmp_path):
        seq = read_sequence(write(tmp_path / "s.csv", "z,a\n0.5,1\n1.25,\n"))
        np.testing.assert_array_equal(seq.timestamps, [0.5, 1.25])
        assert seq.values.shape == (2, 1)
        assert seq.z_text == ["0.5", "1.25"]

    @pytest.mark.parametrize("text", ["a,b\n1,2\n3\n", "a,b\n1,x\n", "a,b\n1,nan\n", "a,b\n1,inf\n",
                                      "", "a,b\n", "z,a\n,1\n"])
    def test_malformed(self, tmp_path, text):
        with pytest.raises(DataFormatError):
            read_sequence(write(tmp_path / "s.csv", text))

    def test_present_cells_written_verbatim(self, tmp_path):
        src = "z,a,b\n0,1.50,\n1e0,,2.000\n"
        seq = read_sequence(write(tmp_path / "s.csv", src))
        filled = np.where(seq.mask, seq.values, 7.0)
        write_sequence(tmp_path / "o.csv", filled, seq.header, seq.z_text, seq.raw)
        assert (tmp_path / "o.csv").read_text() == "z,a,b\n0,1.50,7.0\n1e0,7.0,2.000\n"

    @given(arrays(float, st.tuples(st.integers(1, 5), st.integers(1, 3)),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
    def test_matrix_round_trip_is_bit_exact(self, tmp_path_factory, values):
        path = tmp_path_factory.mktemp("m") / "m.csv"
        write_matrix(path, values, [f"c{i}" for i in range(values.shape[1])])
        np.testing.assert_array_equal(read_matrix(path), values)

    def test_matrix_rejects_missing(self, tmp_path):
        with pytest.raises(DataFormatError):
            read_matrix(write(tmp_path / "m.csv", "1,\n2,3\n"))

    def test_format_float_round_trips(self):
        for x in (0.1, 1 / 3, -2.5e-300, 1e308):
            assert float(format_float(x)) == x


class TestMasks:
    def test_round_trip(self, tmp_path):
        m = np.array([[True, False], [False, False]])
        write_mask(tmp_path / "m.csv", m)
        assert (tmp_path / "m.csv").read_text() == "1,0\n0,0\n"
        np.testing.assert_array_equal(read_mask(tmp_path / "m.csv"), m)

    @pytest.mark.parametrize("text", ["1,2\n", "1,0\n1\n"])
    def test_malformed(self, tmp_path, text):
        with pytest.raises(DataFormatError):
            read_mask(write(tmp_path / "m.csv", text))


class TestModels:
    def test_mixture_round_trip(self, tmp_path):
        gm = GaussianMixture([0.25, 0.75], [[0.1, 0.2], [1 / 3, -4.0]], 0.7, ISOTROPIC)
        save_model(tmp_path / "g.json", gm)
        back, gtm = load_model(tmp_path / "g.json")
        assert gtm is None
        np.testing.assert_array_equal(back.means, gm.means)
        assert back.variances == gm.variances

    def test_gtm_document(self, tmp_path):
        gtm = gtm_fit(np.random.default_rng(0).normal(size=(40, 2)), TrainConfig(k=9, n_basis=4))
        save_model(tmp_path / "t.json", gtm)
        gm, back = load_model(tmp_path / "t.json")
        assert back is not None and gm.n_components == 9
        np.testing.assert_array_equal(back.weight_matrix, gtm.weight_matrix)

    @pytest.mark.parametrize("text", ["{", "[]", '{"version": 1}', '{"version": 3, "weights": [1]}'])
    def test_bad_documents(self, tmp_path, text):
        with pytest.raises(DataFormatError):
            load_model(write(tmp_path / "bad.json", text))

    def test_sha256(self, tmp_path):
        p = write(tmp_path / "x", "abc")
        assert file_sha256(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        json.dumps(file_sha256(p))
