"""On-disk formats: dataset CSV/binary, model bundle container, series CSVs, atomic writes."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .dataset import TUPLE_FIELDS, LabeledDataset
from .errors import CorruptPayloadError, SchemaError, VersionError

DATASET_SCHEMA = 1
DATASET_MAGIC = b"BMDSET\x00\x01"
BUNDLE_VERSION = 1
BUNDLE_MAGIC = b"BMBUNDLE"


def atomic_write(path, data: bytes | str) -> Path:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# datasets ------------------------------------------------------------------------

def _column_names(n_t):
    return [f"{f}_{j}" for j in range(n_t) for f in TUPLE_FIELDS]


def write_dataset_csv(ds: LabeledDataset, path) -> Path:
    """Text dataset: a ``#`` schema line, a column header, then one sample per row."""
    names = ds.meta.get("class_names") or []
    meta_line = (f"# breathmodel-dataset schema={DATASET_SCHEMA} n_t={ds.n_t} classes={ds.num_classes} "
                 f"class_names={'|'.join(names)}\n")
    flat = ds.x.reshape(len(ds), -1)
    rows = ([sid, int(lab)] + [repr(float(v)) for v in row] for sid, lab, row in zip(ds.source_ids, ds.labels, flat))
    return atomic_write(path, meta_line + _csv_text(["source_id", "label"] + _column_names(ds.n_t), rows))


def _parse_meta_line(line: str) -> dict:
    if not line.startswith("# breathmodel-dataset"):
        raise SchemaError("missing '# breathmodel-dataset' schema line")
    out = {}
    for tok in line.strip().split()[2:]:
        if "=" not in tok:
            raise SchemaError(f"malformed schema token {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    for k in ("schema", "n_t", "classes"):
        if k not in out:
            raise SchemaError(f"schema line lacks {k}")
    if int(out["schema"]) > DATASET_SCHEMA:
        raise VersionError(f"dataset schema {out['schema']} is newer than supported {DATASET_SCHEMA}")
    return out


def read_dataset_csv(path) -> LabeledDataset:
    with open(path, newline="") as fh:
        meta = _parse_meta_line(fh.readline())
        n_t, c = int(meta["n_t"]), int(meta["classes"])
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["source_id", "label"] + _column_names(n_t):
            raise SchemaError("column header does not match n_t")
        ids, labels, rows = [], [], []
        for lineno, rec in enumerate(reader, start=3):
            if len(rec) != 2 + 6 * n_t:
                raise SchemaError(f"line {lineno}: expected {2 + 6 * n_t} fields, got {len(rec)}")
            try:
                labels.append(int(rec[1]))
                rows.append([float(v) for v in rec[2:]])
            except ValueError as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
            ids.append(rec[0])
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) and (labels.min() < -1 or labels.max() >= max(c, 1)):
        raise SchemaError(f"labels outside [-1, {c})")
    names = [n for n in meta.get("class_names", "").split("|") if n]
    x = np.asarray(rows, dtype=np.float64).reshape(len(rows), n_t, 6)
    return LabeledDataset(x, labels, np.array(ids, dtype=str), {"class_names": names or None})


def write_dataset_binary(ds: LabeledDataset, path) -> Path:
    """Binary dataset: magic, JSON header length (u32 LE), JSON header, int64 labels, float64 x (LE)."""
    header = json.dumps({"schema": DATASET_SCHEMA, "n": len(ds), "n_t": ds.n_t, "classes": ds.num_classes,
                         "class_names": ds.meta.get("class_names"), "source_ids": ds.source_ids.tolist()}).encode()
    body = ds.labels.astype("<i8").tobytes() + ds.x.astype("<f8").tobytes()
    return atomic_write(path, DATASET_MAGIC + struct.pack("<I", len(header)) + header + body)


def read_dataset_binary(path) -> LabeledDataset:
    raw = Path(path).read_bytes()
    if raw[:8] != DATASET_MAGIC:
        raise SchemaError("not a binary dataset file")
    if len(raw) < 12:
        raise CorruptPayloadError("truncated dataset header")
    (hlen,) = struct.unpack("<I", raw[8:12])
    try:
        header = json.loads(raw[12 : 12 + hlen])
    except ValueError as exc:
        raise CorruptPayloadError(f"unreadable dataset header: {exc}") from None
    if header["schema"] > DATASET_SCHEMA:
        raise VersionError(f"dataset schema {header['schema']} is newer than supported {DATASET_SCHEMA}")
    n, n_t = header["n"], header["n_t"]
    off = 12 + hlen
    need = off + 8 * n + 8 * n * n_t * 6
    if len(raw) != need:
        raise CorruptPayloadError(f"dataset payload has {len(raw)} bytes, expected {need}")
    labels = np.frombuffer(raw, "<i8", n, off).astype(np.int64)
    x = np.frombuffer(raw, "<f8", n * n_t * 6, off + 8 * n).astype(np.float64).reshape(n, n_t, 6)
    return LabeledDataset(x, labels, np.array(header["source_ids"], dtype=str),
                          {"class_names": header.get("class_names")})


def write_dataset(ds: LabeledDataset, path) -> Path:
    """``.bin`` suffix selects the binary variant, anything else the CSV text form."""
    return write_dataset_binary(ds, path) if str(path).endswith(".bin") else write_dataset_csv(ds, path)


def read_dataset(path) -> LabeledDataset:
    if not Path(path).exists():
        raise FileNotFoundError(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
    return read_dataset_binary(path) if head == DATASET_MAGIC else read_dataset_csv(path)


# series --------------------------------------------------------------------------

def write_series_csv(times, values, path) -> Path:
    rows = ([repr(float(t)), repr(float(v))] for t, v in zip(times, values))
    return atomic_write(path, _csv_text(["t", "position"], rows))


def read_series_csv(path):
    arr = _read_numeric_csv(path, ["t", "position"])
    return arr[:, 0], arr[:, 1]


def write_marker_csv(times, positions, path) -> Path:
    rows = ([repr(float(t))] + [repr(float(v)) for v in p] for t, p in zip(times, positions))
    return atomic_write(path, _csv_text(["t", "x", "y", "z"], rows))


def read_marker_csv(path):
    """Returns ``(times, positions (n, 3))``."""
    arr = _read_numeric_csv(path, ["t", "x", "y", "z"])
    return arr[:, 0], arr[:, 1:]


def _read_numeric_csv(path, columns):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != columns:
            raise SchemaError(f"expected columns {columns}, got {header}")
        try:
            rows = [[float(v) for v in rec] for rec in reader if rec]
        except ValueError as exc:
            raise SchemaError(str(exc)) from None
    if any(len(r) != len(columns) for r in rows):
        raise SchemaError("ragged rows")
    return np.asarray(rows, dtype=np.float64).reshape(-1, len(columns))


def write_rows_csv(rows: list[dict], path) -> Path:
    if not rows:
        return atomic_write(path, "")
    header = list(rows[0])
    for r in rows[1:]:
        for k in r:
            if k not in header:
                header.append(k)
    return atomic_write(path, _csv_text(header, ([r.get(k, "") for k in header] for r in rows)))


# bundles -------------------------------------------------------------------------

def _bundle_header(bundle, blocks):
    return {
        "version": BUNDLE_VERSION,
        "variant": bundle.variant,
        "specs": bundle.specs(),
        "norm_stats": bundle.norm_stats.to_dict() if bundle.norm_stats is not None else None,
        "thresholds": bundle.thresholds.to_dict() if bundle.thresholds is not None else None,
        "prior": bundle.prior.to_dict() if bundle.prior is not None else None,
        "config": bundle.config,
        "seed": bundle.seed,
        "meta": bundle.meta,
        "log": bundle.log,
        "blocks": blocks,
    }


def bundle_bytes(bundle) -> bytes:
    """Magic, version (u32), header length (u64), JSON header, then for each
    parameter/buffer block: name length (u32), name, byte count (u64), float64 LE data."""
    payload = bytearray()
    blocks = []
    for net_name, net in bundle.networks.items():
        params, buffers = net.state()
        for kind, group in (("param", params), ("buffer", buffers)):
            for key, arr in group.items():
                name = f"{net_name}/{kind}/{key}".encode()
                data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
                payload += struct.pack("<I", len(name)) + name + struct.pack("<Q", len(data)) + data
                blocks.append([name.decode(), list(arr.shape)])
    header = _bundle_header(bundle, blocks)
    header["payload_sha256"] = hashlib.sha256(payload).hexdigest()
    hbytes = json.dumps(header, default=_json_default).encode()
    return BUNDLE_MAGIC + struct.pack("<I", BUNDLE_VERSION) + struct.pack("<Q", len(hbytes)) + hbytes + bytes(payload)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_bundle(bundle, path) -> Path:
    return atomic_write(path, bundle_bytes(bundle))


def parse_bundle(raw: bytes):
    from . import objectives as O
    from .preprocess import NormStats, SlopeThresholds
    from .trainer import ModelBundle, network_types

    if raw[:8] != BUNDLE_MAGIC:
        raise CorruptPayloadError("not a model bundle (bad magic)")
    if len(raw) < 20:
        raise CorruptPayloadError("truncated bundle header")
    (version,) = struct.unpack("<I", raw[8:12])
    if version != BUNDLE_VERSION:
        raise VersionError(f"bundle version {version} unsupported (expected {BUNDLE_VERSION})")
    (hlen,) = struct.unpack("<Q", raw[12:20])
    if len(raw) < 20 + hlen:
        raise CorruptPayloadError("truncated bundle header")
    try:
        header = json.loads(raw[20 : 20 + hlen])
    except ValueError as exc:
        raise CorruptPayloadError(f"unreadable bundle header: {exc}") from None
    payload = raw[20 + hlen :]
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise CorruptPayloadError("bundle payload checksum mismatch (truncated or modified)")
    arrays, off = {}, 0
    shapes = {name: tuple(shape) for name, shape in header["blocks"]}
    while off < len(payload):
        (nlen,) = struct.unpack_from("<I", payload, off)
        name = payload[off + 4 : off + 4 + nlen].decode()
        (dlen,) = struct.unpack_from("<Q", payload, off + 4 + nlen)
        start = off + 12 + nlen
        arrays[name] = np.frombuffer(payload, "<f8", dlen // 8, start).astype(np.float64).reshape(shapes[name])
        off = start + dlen
    networks = {}
    for net_name, spec_dict in header["specs"].items():
        spec_cls, net_cls = network_types(net_name)
        net = net_cls(spec_cls.from_dict(spec_dict), header["seed"])
        pre = f"{net_name}/"
        params = {k[len(pre) + 6 :]: v for k, v in arrays.items() if k.startswith(pre + "param/")}
        buffers = {k[len(pre) + 7 :]: v for k, v in arrays.items() if k.startswith(pre + "buffer/")}
        try:
            net.load_state(params, buffers)
        except KeyError as exc:
            raise CorruptPayloadError(f"bundle lacks block {exc}") from None
        networks[net_name] = net
    return ModelBundle(
        variant=header["variant"],
        networks=networks,
        norm_stats=NormStats.from_dict(header["norm_stats"]) if header["norm_stats"] else None,
        thresholds=SlopeThresholds.from_dict(header["thresholds"]) if header["thresholds"] else None,
        prior=O.PriorSpec.from_dict(header["prior"]) if header["prior"] else None,
        config=header["config"],
        log=header["log"],
        seed=header["seed"],
        meta=header["meta"],
    )


def read_bundle(path):
    if not Path(path).exists():
        raise FileNotFoundError(path)
    return parse_bundle(Path(path).read_bytes())
