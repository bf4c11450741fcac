"""Single-file array container: one JSON header line followed by raw blobs.

Every binary artifact in this package (motion series, audio features,
checkpoints, generic arrays) uses the same layout so that one reader/writer
pair covers them all:

    line 1:  UTF-8 JSON object terminated by '\\n' with keys
             format ("stylefuse-container"), version (1), kind (str),
             meta (dict), blobs (list of {name, dtype, shape})
    then:    the raw bytes of each blob, little-endian, C order, in the
             order listed in the header.

Only two dtypes are allowed on disk: "<f4" (float32) and "<i4" (int32).
Readers validate the header and byte counts and raise ContainerError on
any mismatch, so a truncated or foreign file never yields silent garbage.
"""

import json

import numpy as np

FORMAT_TAG = "stylefuse-container"
VERSION = 1
_DTYPES = {"<f4", "<i4"}


class ContainerError(ValueError):
    """Raised when a container file is malformed, truncated, or of the wrong kind."""


def write_container(path, kind, blobs, meta=None):
    """Write named arrays to `path`.

    blobs: list of (name, array) pairs; float arrays are stored as float32,
    integer arrays as int32.  meta must be JSON-serializable.
    """
    entries = []
    raw = []
    for name, arr in blobs:
        arr = np.asarray(arr)
        if arr.dtype.kind == "f":
            arr = arr.astype("<f4")
        elif arr.dtype.kind in "iu":
            arr = arr.astype("<i4")
        else:
            raise ContainerError(f"unsupported dtype {arr.dtype} for blob '{name}'")
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        raw.append(np.ascontiguousarray(arr).tobytes())
    header = {
        "format": FORMAT_TAG,
        "version": VERSION,
        "kind": kind,
        "meta": meta or {},
        "blobs": entries,
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n"
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8"))
        for chunk in raw:
            fh.write(chunk)


def read_container(path, expect_kind=None):
    """Read a container; returns (meta, {name: array}).

    Arrays come back exactly as stored (float32 / int32).  If expect_kind is
    given, a mismatching file is rejected.
    """
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerError(f"{path}: not a container file ({exc})") from None
        if not isinstance(header, dict) or header.get("format") != FORMAT_TAG:
            raise ContainerError(f"{path}: missing container format tag")
        if header.get("version") != VERSION:
            raise ContainerError(f"{path}: unsupported container version {header.get('version')!r}")
        kind = header.get("kind")
        if expect_kind is not None and kind != expect_kind:
            raise ContainerError(f"{path}: kind is {kind!r}, expected {expect_kind!r}")
        entries = header.get("blobs")
        if not isinstance(entries, list):
            raise ContainerError(f"{path}: bad blob table")
        arrays = {}
        for ent in entries:
            try:
                name, dtype, shape = ent["name"], ent["dtype"], tuple(ent["shape"])
            except (KeyError, TypeError) as exc:
                raise ContainerError(f"{path}: bad blob entry ({exc})") from None
            if dtype not in _DTYPES:
                raise ContainerError(f"{path}: disallowed dtype {dtype!r} for blob '{name}'")
            if any((not isinstance(s, int)) or s < 0 for s in shape):
                raise ContainerError(f"{path}: bad shape {shape} for blob '{name}'")
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            nbytes = count * 4
            buf = fh.read(nbytes)
            if len(buf) != nbytes:
                raise ContainerError(
                    f"{path}: truncated blob '{name}' (wanted {nbytes} bytes, got {len(buf)})"
                )
            arrays[name] = np.frombuffer(buf, dtype=dtype).reshape(shape).copy()
        if fh.read(1):
            raise ContainerError(f"{path}: trailing bytes after last blob")
    meta = header.get("meta")
    if not isinstance(meta, dict):
        raise ContainerError(f"{path}: meta must be an object")
    return meta, arrays


def require_meta(meta, key, path="<container>"):
    if key not in meta:
        raise ContainerError(f"{path}: missing meta field '{key}'")
    return meta[key]
