import json

import numpy as np
import pytest

from stylefuse.containers import (
    ContainerError,
    read_container,
    require_meta,
    write_container,
)


def test_round_trip_preserves_values_and_meta(tmp_path):
    path = tmp_path / "a.bin"
    f = np.random.default_rng(0).normal(size=(3, 5)).astype(np.float32)
    i = np.arange(12, dtype=np.int32).reshape(4, 3)
    write_container(path, "demo", [("f", f), ("i", i)], meta={"k": 7})
    meta, blobs = read_container(path, expect_kind="demo")
    assert meta == {"k": 7}
    assert blobs["f"].dtype == np.float32 and np.array_equal(blobs["f"], f)
    assert blobs["i"].dtype == np.int32 and np.array_equal(blobs["i"], i)


def test_float64_is_stored_as_float32(tmp_path):
    path = tmp_path / "a.bin"
    x = np.array([0.1, 0.2, 1 / 3], dtype=np.float64)
    write_container(path, "demo", [("x", x)])
    _, blobs = read_container(path)
    assert blobs["x"].dtype == np.float32
    assert np.array_equal(blobs["x"], x.astype(np.float32))


def test_scalar_and_empty_shapes(tmp_path):
    path = tmp_path / "a.bin"
    write_container(path, "demo", [("s", np.float32(2.5)), ("e", np.zeros((0, 4)))])
    _, blobs = read_container(path)
    assert blobs["s"].shape == () and blobs["s"] == np.float32(2.5)
    assert blobs["e"].shape == (0, 4)


def test_kind_mismatch_rejected(tmp_path):
    path = tmp_path / "a.bin"
    write_container(path, "motion", [("x", np.zeros(2))])
    with pytest.raises(ContainerError, match="kind"):
        read_container(path, expect_kind="style")


def test_non_container_file_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"\x89PNG\r\n\x1a\nnot json")
    with pytest.raises(ContainerError):
        read_container(path)


def test_wrong_format_tag_rejected(tmp_path):
    path = tmp_path / "a.bin"
    path.write_bytes(json.dumps({"format": "other", "version": 1}).encode() + b"\n")
    with pytest.raises(ContainerError, match="format"):
        read_container(path)


def test_wrong_version_rejected(tmp_path):
    path = tmp_path / "a.bin"
    hdr = {"format": "stylefuse-container", "version": 2, "kind": "x", "meta": {}, "blobs": []}
    path.write_bytes(json.dumps(hdr).encode() + b"\n")
    with pytest.raises(ContainerError, match="version"):
        read_container(path)


def test_truncated_blob_rejected(tmp_path):
    path = tmp_path / "a.bin"
    write_container(path, "demo", [("x", np.zeros(16, dtype=np.float32))])
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(ContainerError, match="truncated"):
        read_container(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "a.bin"
    write_container(path, "demo", [("x", np.zeros(4, dtype=np.float32))])
    with open(path, "ab") as fh:
        fh.write(b"\x00\x00")
    with pytest.raises(ContainerError, match="trailing"):
        read_container(path)


def test_disallowed_dtype_rejected_on_read(tmp_path):
    path = tmp_path / "a.bin"
    hdr = {
        "format": "stylefuse-container",
        "version": 1,
        "kind": "x",
        "meta": {},
        "blobs": [{"name": "x", "dtype": "<f8", "shape": [1]}],
    }
    path.write_bytes(json.dumps(hdr).encode() + b"\n" + b"\x00" * 8)
    with pytest.raises(ContainerError, match="dtype"):
        read_container(path)


def test_disallowed_dtype_rejected_on_write(tmp_path):
    with pytest.raises(ContainerError, match="dtype"):
        write_container(tmp_path / "a.bin", "demo", [("x", np.array(["a", "b"]))])


def test_bad_shape_rejected(tmp_path):
    path = tmp_path / "a.bin"
    hdr = {
        "format": "stylefuse-container",
        "version": 1,
        "kind": "x",
        "meta": {},
        "blobs": [{"name": "x", "dtype": "<f4", "shape": [-1]}],
    }
    path.write_bytes(json.dumps(hdr).encode() + b"\n")
    with pytest.raises(ContainerError, match="shape"):
        read_container(path)


def test_require_meta():
    assert require_meta({"a": 1}, "a") == 1
    with pytest.raises(ContainerError, match="missing meta"):
        require_meta({}, "a", path="p")
