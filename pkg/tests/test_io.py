import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tucker_si.io import (
    TRACE_COLUMNS,
    FormatError,
    RunManifest,
    TraceWriter,
    file_digest,
    read_matrix,
    read_observations,
    read_trace,
    write_matrix,
    write_observations,
    write_trace,
)
from tucker_si.observations import ObservationSet
from tucker_si.solver import IterTrace


def write(tmp_path, text, name="f.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestObservations:
    def test_single_entry(self, tmp_path):
        obs = read_observations(write(tmp_path, "tensor3 2 2 2 1\n1 1 1 3.5\n"))
        assert obs.dims == (2, 2, 2)
        np.testing.assert_array_equal(obs.indices, [[0, 0, 0]])
        np.testing.assert_array_equal(obs.values, [3.5])

    def test_scientific_and_whitespace(self, tmp_path):
        obs = read_observations(write(tmp_path, "tensor3 3 3 3 2\n\n 2\t3  1 -1.5e-3\n3 3 3 4E2\n"))
        np.testing.assert_array_equal(obs.values, [-1.5e-3, 400.0])

    def test_duplicate(self, tmp_path):
        p = write(tmp_path, "tensor3 2 2 2 2\n1 2 1 1.0\n1 2 1 2.0\n")
        with pytest.raises(FormatError, match=r":3:.*duplicate") as err:
            read_observations(p)
        assert err.value.line == 3

    def test_out_of_range(self, tmp_path):
        with pytest.raises(FormatError, match=r":2:.*out of range"):
            read_observations(write(tmp_path, "tensor3 2 2 2 1\n1 3 1 1.0\n"))

    def test_zero_index(self, tmp_path):
        with pytest.raises(FormatError, match=r":2:"):
            read_observations(write(tmp_path, "tensor3 2 2 2 1\n0 1 1 1.0\n"))

    @pytest.mark.parametrize(
        "text, line",
        [
            ("", 1),
            ("matrix 2 2\n", 1),
            ("tensor3 2 2 2\n", 1),
            ("tensor3 2 2 x 1\n", 1),
            ("tensor3 2 2 2 1\n1 1 1\n", 2),
            ("tensor3 2 2 2 1\n1 1 1 abc\n", 2),
            ("tensor3 2 2 2 1\n1 1 1 nan\n", 2),
            ("tensor3 2 2 2 1\n1.5 1 1 2\n", 2),
            ("tensor3 2 2 2 2\n1 1 1 2\n", 1),
            ("tensor3 2 2 2 1\n1 1 1 2\n2 2 2 1\n", 3),
        ],
    )
    def test_malformed(self, tmp_path, text, line):
        with pytest.raises(FormatError) as err:
            read_observations(write(tmp_path, text))
        assert err.value.line == line

    def test_round_trip(self, tmp_path, rng):
        lin = rng.choice(1000, size=200, replace=False)
        idx = np.stack(np.unravel_index(lin, (10, 10, 10)), axis=1)
        obs = ObservationSet((10, 10, 10), idx, rng.standard_normal(200) * 10.0 ** rng.integers(-200, 200, 200))
        p = tmp_path / "o.txt"
        write_observations(p, obs)
        back = read_observations(p)
        np.testing.assert_array_equal(back.indices, obs.indices)
        np.testing.assert_array_equal(back.values, obs.values)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_observation_values_bit_exact(tmp_path_factory, values):
    n = len(values)
    obs = ObservationSet((n, 1, 1), [[i, 0, 0] for i in range(n)], values)
    p = tmp_path_factory.mktemp("h") / "o.txt"
    write_observations(p, obs)
    np.testing.assert_array_equal(read_observations(p).values, obs.values)


class TestMatrix:
    def test_round_trip(self, tmp_path, rng):
        M = rng.standard_normal((7, 3))
        p = tmp_path / "m.txt"
        write_matrix(p, M)
        np.testing.assert_array_equal(read_matrix(p), M)

    def test_parse(self, tmp_path):
        M = read_matrix(write(tmp_path, "matrix 2 2\n1 2\n3 4e0\n"))
        np.testing.assert_array_equal(M, [[1, 2], [3, 4]])

    @pytest.mark.parametrize(
        "text, line",
        [("matrix 2 2\n1 2\n", 1), ("matrix 1 2\n1 2 3\n", 2), ("matrix 1 2\n1 2\n3 4\n", 3), ("tensor3 1 1 1 1\n", 1)],
    )
    def test_malformed(self, tmp_path, text, line):
        with pytest.raises(FormatError) as err:
            read_matrix(write(tmp_path, text))
        assert err.value.line == line


class TestTrace:
    def trace(self):
        return [
            IterTrace(0, 0.0, 10.0, 4.0, 0.0, 0.0, 1.0, None),
            IterTrace(1, 0.125, 1 / 3, 1e-300, 0.7, 0.1, 0.5, 0.25),
        ]

    def test_header(self, tmp_path):
        p = tmp_path / "t.csv"
        write_trace(p, self.trace())
        assert p.read_text().splitlines()[0] == "iter,seconds,cost,grad_norm_sq,step,beta,train_rmse,test_rmse"
        assert ",".join(TRACE_COLUMNS) == p.read_text().splitlines()[0]

    def test_empty_test_cell(self, tmp_path):
        p = tmp_path / "t.csv"
        write_trace(p, self.trace())
        assert p.read_text().splitlines()[1].endswith(",")

    def test_round_trip(self, tmp_path):
        p = tmp_path / "t.csv"
        with TraceWriter(p) as w:
            for tr in self.trace():
                w(tr)
        assert read_trace(p) == self.trace()

    def test_bad_header(self, tmp_path):
        with pytest.raises(FormatError):
            read_trace(write(tmp_path, "a,b\n", "t.csv"))


class TestManifest:
    def test_round_trip(self, tmp_path):
        src = write(tmp_path, "tensor3 1 1 1 1\n1 1 1 2\n")
        m = RunManifest("complete", {"rank": [1, 1, 1], "metric": "precond"}, seed=3, version="0.1.0")
        m.add_input("train", src)
        p = tmp_path / "manifest.json"
        m.write(p)
        back = RunManifest.read(p)
        assert back == m
        assert back.inputs["train"]["sha256"] == file_digest(src)

    def test_digest_changes(self, tmp_path):
        a = write(tmp_path, "x", "a")
        b = write(tmp_path, "y", "b")
        assert file_digest(a) != file_digest(b)
        assert len(file_digest(a)) == 64
