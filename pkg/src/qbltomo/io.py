"""On-disk formats.

Images and sinograms are a JSON header plus a sibling ``.bin`` payload of raw
little-endian float64 values (row-major; sinograms are projection-major).
Given ``foo.json`` the payload is ``foo.bin``.

Permutations are JSON arrays of 1-based integers. Result tables are CSV.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import FormatError, Image2D, Sinogram

_DTYPE = np.dtype("<f8")


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix == ".bin":
        p = p.with_suffix(".json")
    elif p.suffix != ".json":
        p = p.with_name(p.name + ".json")
    return p, p.with_suffix(".bin")


def _read_header(path: Path, required: Mapping[str, type]) -> dict:
    try:
        header = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read header {path}: {exc}") from exc
    if not isinstance(header, dict):
        raise FormatError(f"{path}: header must be a JSON object")
    for key, typ in required.items():
        if key not in header:
            raise FormatError(f"{path}: missing header field {key!r}")
        val = header[key]
        if typ is int and (isinstance(val, bool) or not isinstance(val, int)):
            raise FormatError(f"{path}: {key!r} must be an integer")
        if typ is float and (isinstance(val, bool) or not isinstance(val, (int, float))):
            raise FormatError(f"{path}: {key!r} must be a number")
    return header


def _read_payload(path: Path, count: int) -> np.ndarray:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read payload {path}: {exc}") from exc
    if len(raw) != count * _DTYPE.itemsize:
        raise FormatError(
            f"{path}: payload has {len(raw)} bytes, expected {count * _DTYPE.itemsize}"
        )
    data = np.frombuffer(raw, dtype=_DTYPE).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite values in payload")
    return data


def write_image(path, img: Image2D) -> Path:
    hdr_path, bin_path = _paths(path)
    h, w = img.shape
    header = {
        "width": w,
        "height": h,
        "pixel_size": float(img.pixel_size),
        "dtype": "f64le",
        "support_radius": float(img.support_radius),
    }
    hdr_path.write_text(json.dumps(header, indent=2))
    bin_path.write_bytes(img.pixels.astype(_DTYPE).tobytes())
    return hdr_path


def read_image(path) -> Image2D:
    hdr_path, bin_path = _paths(path)
    hdr = _read_header(hdr_path, {"width": int, "height": int, "pixel_size": float, "dtype": str})
    if hdr["dtype"] != "f64le":
        raise FormatError(f"{hdr_path}: unsupported dtype {hdr['dtype']!r}")
    w, h = hdr["width"], hdr["height"]
    if w < 1 or h < 1 or hdr["pixel_size"] <= 0:
        raise FormatError(f"{hdr_path}: invalid geometry")
    pixels = _read_payload(bin_path, w * h).reshape(h, w)
    try:
        return Image2D(pixels, float(hdr["pixel_size"]), hdr.get("support_radius"))
    except ValueError as exc:
        raise FormatError(f"{hdr_path}: {exc}") from exc


def write_sinogram(path, sino: Sinogram) -> Path:
    if np.iscomplexobj(sino.data):
        raise FormatError("only real sinograms can be written")
    hdr_path, bin_path = _paths(path)
    header = {
        "num_projections": sino.num_projections,
        "num_bins": sino.num_bins,
        "bin_spacing": float(sino.bin_spacing),
    }
    if sino.angles_known is not None:
        header["angles_known"] = [float(a) for a in sino.angles_known]
    hdr_path.write_text(json.dumps(header))
    bin_path.write_bytes(sino.data.astype(_DTYPE).tobytes())
    return hdr_path


def read_sinogram(path) -> Sinogram:
    hdr_path, bin_path = _paths(path)
    hdr = _read_header(hdr_path, {"num_projections": int, "num_bins": int, "bin_spacing": float})
    n, b = hdr["num_projections"], hdr["num_bins"]
    if n < 1 or b < 2 or hdr["bin_spacing"] <= 0:
        raise FormatError(f"{hdr_path}: invalid geometry")
    data = _read_payload(bin_path, n * b).reshape(n, b)
    angles = hdr.get("angles_known")
    if angles is not None and len(angles) != n:
        raise FormatError(f"{hdr_path}: angles_known has wrong length")
    return Sinogram(data, float(hdr["bin_spacing"]), None if angles is None else np.array(angles))


def write_permutation(path, perm_map: Sequence[int]) -> None:
    Path(path).write_text(json.dumps([int(v) for v in perm_map]))


def read_permutation(path) -> list[int]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read permutation {path}: {exc}") from exc
    if not isinstance(data, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in data):
        raise FormatError(f"{path}: permutation must be a JSON array of integers")
    return data


def write_results_csv(path, rows: Iterable[Mapping], columns: Sequence[str]) -> Path:
    p = Path(path)
    with p.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in columns})
    return p


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_results_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
