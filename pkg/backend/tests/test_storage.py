import json
import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from plom.exceptions import InputError
from plom.storage import ArtifactStore, format_number, read_matrix, write_matrix


def test_format_number_keeps_17_digits():
    assert format_number(0.1) == "0.10000000000000001"
    assert format_number(3) == "3"
    assert format_number(True) == "1"


def test_csv_header_is_skipped(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b,c\n1,2,3\n4,5,6\n")
    assert_array_equal(read_matrix(path), [[1, 2, 3], [4, 5, 6]])


def test_binary_is_column_major(tmp_path):
    matrix = np.arange(6.0).reshape(2, 3)
    path = write_matrix(tmp_path / "m.bin", matrix)
    data = path.read_bytes()
    assert data[:4] == b"PLOM"
    assert struct.unpack_from("<II", data, 4) == (2, 3)
    assert struct.unpack_from("<2d", data, 12) == (0.0, 3.0)
    assert_array_equal(read_matrix(path), matrix)


def test_csv_values_survive_writing(tmp_path):
    matrix = np.array([[np.pi, -1e-300], [1.0 / 3.0, 2.5e10]])
    assert_array_equal(read_matrix(write_matrix(tmp_path / "m.csv", matrix, header=["u", "v"])), matrix)


def test_bad_magic(tmp_path):
    path = tmp_path / "m.bin"
    path.write_bytes(b"NOPE" + struct.pack("<II", 1, 1) + struct.pack("<d", 1.0))
    with pytest.raises(InputError, match="magic"):
        read_matrix(path)


def test_truncated_payload(tmp_path):
    path = write_matrix(tmp_path / "m.bin", np.ones((2, 2)))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(InputError):
        read_matrix(path)


@pytest.mark.parametrize("text", ["1,2\n3\n", "1,2\n3,x\n", "a,b\n"])
def test_malformed_csv(tmp_path, text):
    path = tmp_path / "m.csv"
    path.write_text(text)
    with pytest.raises(InputError):
        read_matrix(path)


def test_undecodable_csv(tmp_path):
    path = tmp_path / "m.csv"
    path.write_bytes(b"1.0,2.0\n\xff\xfe,3.0\n")
    with pytest.raises(InputError, match="Unreadable CSV"):
        read_matrix(path)


def test_missing_file(tmp_path):
    with pytest.raises(InputError, match="not found"):
        read_matrix(tmp_path / "absent.csv")


def test_json_is_sorted_and_nan_free(store):
    path = store.write_json("report.json", {"b": float("nan"), "a": np.arange(2), "c": np.float64(1.5)})
    text = path.read_text(encoding="utf-8")
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {"a": [0, 1], "b": None, "c": 1.5}


def test_rows_are_written_with_header(store):
    path = store.write_rows("curves/x.csv", ["n", "value"], [(1, 0.5), (2, 0.25)])
    assert path.read_text().splitlines() == ["n,value", "1,0.5", "2,0.25"]


def test_error_record(store):
    record = {"kind": "input-error", "message": "boom", "exit_code": 1, "stage": "input", "details": {}}
    store.write_error(record)
    assert store.read_json("error.json") == record
