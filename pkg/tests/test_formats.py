import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays, array_shapes

from icrsparse.formats import (
    MatrixFormatError,
    decode_binary,
    encode_binary,
    format_csv,
    parse_csv,
    read_matrix,
    read_vector,
    write_matrix,
)

finite = st.floats(allow_nan=False, allow_infinity=False)


@given(arrays(np.float64, array_shapes(min_dims=2, max_dims=2, max_side=6), elements=finite))
def test_binary_and_csv_round_trip(a):
    assert decode_binary(encode_binary(a)).tobytes() == a.tobytes()
    b = parse_csv(format_csv(a))
    assert np.array_equal(b, a)


def test_binary_layout():
    data = encode_binary(np.array([[1.0, 2.0, 3.0]]))
    assert data[:8] == b"ICRMAT01"
    assert data[8:16] == (1).to_bytes(8, "little")
    assert data[16:24] == (3).to_bytes(8, "little")
    assert len(data) == 24 + 24
    with pytest.raises(MatrixFormatError):
        decode_binary(data[:-1])
    with pytest.raises(MatrixFormatError):
        decode_binary(b"NOTMAGIC" + data[8:])


def test_csv_errors_carry_position():
    with pytest.raises(MatrixFormatError) as info:
        parse_csv("1,2,3\n4,x,6\n", path="a.csv")
    assert (info.value.row, info.value.col) == (2, 2)
    assert info.value.details() == {"path": "a.csv", "row": 2, "col": 2}
    with pytest.raises(MatrixFormatError) as info:
        parse_csv("1,2\n3\n")
    assert info.value.row == 2
    with pytest.raises(MatrixFormatError):
        parse_csv("1,nan\n")
    with pytest.raises(MatrixFormatError):
        parse_csv("\n\n")


def test_file_detection(tmp_path):
    a = np.arange(6.0).reshape(2, 3) / 7
    write_matrix(tmp_path / "a.bin", a, binary=True)
    write_matrix(tmp_path / "a.csv", a)
    assert np.array_equal(read_matrix(tmp_path / "a.bin"), a)
    assert np.array_equal(read_matrix(tmp_path / "a.csv"), a)
    (tmp_path / "row.csv").write_text("1,2,3\n")
    assert read_vector(tmp_path / "row.csv").tolist() == [1.0, 2.0, 3.0]
    with pytest.raises(MatrixFormatError):
        read_vector(tmp_path / "a.csv")
