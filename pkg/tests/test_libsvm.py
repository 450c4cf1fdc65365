import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupled_decent.errors import ParseError
from coupled_decent.libsvm import SparseExamples, dump_libsvm, parse_libsvm, read_libsvm


class TestParse:
    def test_single_row(self):
        ex = parse_libsvm("1 1:0.5 3:2.0\n")
        assert len(ex) == 1
        assert ex.rows[0] == (1.0, [(1, 0.5), (3, 2.0)])
        assert ex.num_features == 3

    def test_empty(self):
        ex = parse_libsvm("")
        assert len(ex) == 0
        assert ex.num_features == 0

    def test_non_increasing_index(self):
        with pytest.raises(ParseError) as info:
            parse_libsvm("+1 2:1 1:1\n")
        assert (info.value.line, info.value.column) == (1, 8)

    def test_comments_and_blank_lines(self):
        text = "# header\n\n-1 2:3 # trailing\n0.5 1:1\n"
        ex = parse_libsvm(text)
        assert [r[0] for r in ex.rows] == [-1.0, 0.5]
        assert ex.rows[0][1] == [(2, 3.0)]

    @pytest.mark.parametrize("text, line, col", [
        ("x 1:1\n", 1, 1),
        ("1 1:1\n1 2:abc\n", 2, 3),
        ("1 1\n", 1, 3),
        ("1 :4\n", 1, 3),
        ("1 0:4\n", 1, 3),
        ("1  1.5:2\n", 1, 4),
    ])
    def test_errors_report_position(self, text, line, col):
        with pytest.raises(ParseError) as info:
            parse_libsvm(text)
        assert (info.value.line, info.value.column) == (line, col)

    def test_bytes_and_file_inputs(self, tmp_path):
        text = "1 1:1 4:2\n0 2:3\n"
        a = parse_libsvm(text.encode())
        b = parse_libsvm(io.BytesIO(text.encode()))
        p = tmp_path / "d.svm"
        p.write_text(text)
        c = read_libsvm(p)
        assert a.rows == b.rows == c.rows

    def test_max_rows_and_override(self):
        ex = parse_libsvm("1 1:1\n2 2:1\n3 3:1\n", max_rows=2, num_features=10)
        assert len(ex) == 2
        assert ex.num_features == 10
        with pytest.raises(ParseError):
            parse_libsvm("1 5:1\n", num_features=3)

    def test_dense_and_labels(self):
        ex = parse_libsvm("1 1:0.5 3:2\n-2 2:1\n")
        assert np.array_equal(ex.to_dense(), [[0.5, 0, 2], [0, 1, 0]])
        assert np.array_equal(ex.labels, [1.0, -2.0])
        assert len(ex.head(1)) == 1

    def test_container_validates(self):
        with pytest.raises(ValueError):
            SparseExamples([(1.0, [(2, 1.0), (2, 1.0)])], 3)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@st.composite
def examples(draw):
    nf = draw(st.integers(1, 12))
    rows = []
    for _ in range(draw(st.integers(0, 6))):
        idx = sorted(draw(st.sets(st.integers(1, nf), max_size=nf)))
        rows.append((draw(finite), [(i, draw(finite)) for i in idx]))
    return SparseExamples(rows, nf)


class TestRoundTrip:
    @settings(max_examples=100, deadline=None)
    @given(examples())
    def test_dump_parse(self, ex):
        back = parse_libsvm(dump_libsvm(ex), num_features=ex.num_features)
        assert back.rows == ex.rows
