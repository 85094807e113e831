"""Shared domain types, file formats, and the deterministic RNG contract.

Everything downstream (enhancement, geometry, simulation, descriptors,
training, evaluation) builds on the types defined here. All types are
immutable after construction and safe to share across threads.

File formats:
  * sonar frames: binary PGM (P5), maxval 65535, big-endian samples,
    rows = beams, columns = bins, intensities quantized from [0, 1];
  * dataset manifests: a single UTF-8 JSON document with a fixed key order
    (config, generator_seed, records).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

DESCRIPTOR_DIM = 128
PGM_MAXVAL = 65535
ROLES = ("anchor", "sample")

_MASK64 = (1 << 64) - 1


class SonarPlaceError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SonarPlaceError):
    """An invariant on a domain type or operation input was violated."""


class FormatError(SonarPlaceError):
    """A file on disk does not match its expected format.

    ``byte_offset`` points at the position where parsing failed.
    """

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


def wrap_angle(theta: float) -> float:
    """Wrap an angle in radians to the interval (-pi, pi]."""
    w = (theta + math.pi) % (2.0 * math.pi) - math.pi
    if w == -math.pi:
        w = math.pi
    return w


def splitmix64(x: int) -> int:
    """One splitmix64 mixing step; full 64-bit avalanche of the input."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_seed(seed: int, *stream_ids: int) -> int:
    """Derive a child seed from a master seed and one or more stream ids.

    The derivation is pure arithmetic (xor + splitmix64 per id), so child
    streams can be created in any order, in parallel, with identical results.
    """
    s = seed & _MASK64
    for sid in stream_ids:
        s = splitmix64(s ^ (sid & _MASK64))
    return s


def derive_rng(seed: int, *stream_ids: int) -> np.random.Generator:
    """Deterministic generator for the given (seed, stream ids) tuple."""
    return np.random.default_rng(derive_seed(seed, *stream_ids))


@dataclass(frozen=True)
class SonarConfig:
    """Static sonar acquisition geometry: range, aperture, image dimensions."""

    max_range_m: float
    aperture_rad: float
    n_beams: int
    n_bins: int

    def __post_init__(self):
        if not (math.isfinite(self.max_range_m) and self.max_range_m > 0):
            raise ValidationError(f"max_range_m must be positive, got {self.max_range_m}")
        if not (0.0 < self.aperture_rad <= math.pi):
            raise ValidationError(f"aperture_rad must be in (0, pi], got {self.aperture_rad}")
        if self.n_beams < 2 or self.n_bins < 2:
            raise ValidationError(
                f"n_beams and n_bins must be >= 2, got {self.n_beams} x {self.n_bins}"
            )


class SonarImage:
    """Polar intensity grid, shape (n_beams, n_bins), values in [0, 1].

    The pixel array is copied and frozen at construction; instances are
    immutable and safe to share across threads.
    """

    __slots__ = ("config", "data")

    def __init__(self, config: SonarConfig, data: np.ndarray):
        data = np.array(data, dtype=np.float64, copy=True)
        if data.shape != (config.n_beams, config.n_bins):
            raise ValidationError(
                f"image shape {data.shape} does not match config "
                f"({config.n_beams}, {config.n_bins})"
            )
        if not np.all(np.isfinite(data)):
            raise ValidationError("image contains non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValidationError(
                f"image values outside [0, 1]: min={data.min()}, max={data.max()}"
            )
        data.flags.writeable = False
        object.__setattr__(self, "config", config)
        object.__setattr__(self, "data", data)

    def __setattr__(self, name, value):
        raise AttributeError("SonarImage is immutable")

    def __eq__(self, other):
        if not isinstance(other, SonarImage):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class Pose2D:
    """Planar pose: position in meters, heading in radians, timestamp in seconds.

    The heading is wrapped to (-pi, pi] at construction.
    """

    x: float
    y: float
    heading: float
    t: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "heading", "t"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValidationError(f"Pose2D.{name} must be finite, got {v}")
        if self.t < 0.0:
            raise ValidationError(f"Pose2D.t must be non-negative, got {self.t}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))


@dataclass(frozen=True)
class Descriptor:
    """Unit-norm 128-vector in cosine space."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (DESCRIPTOR_DIM,):
            raise ValidationError(f"descriptor must have shape ({DESCRIPTOR_DIM},), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("descriptor contains non-finite values")
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-6:
            raise ValidationError(f"descriptor norm {norm} deviates from 1 by more than 1e-6")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ScanRecord:
    """One scan in a dataset: id, pose, image location, role, owning asset."""

    id: int
    pose: Pose2D
    image_path: str
    role: str
    asset_id: int

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(
                f"unknown role {self.role!r}; allowed roles: {', '.join(ROLES)}"
            )


@dataclass(frozen=True)
class DatasetManifest:
    """A generated dataset: sonar config, scan records, and the generator seed."""

    config: SonarConfig
    records: tuple[ScanRecord, ...]
    generator_seed: int = 0

    def __post_init__(self):
        records = tuple(self.records)
        seen: set[int] = set()
        for r in records:
            if r.id in seen:
                raise ValidationError(f"duplicate record id {r.id} in manifest")
            seen.add(r.id)
        object.__setattr__(self, "records", records)

    def by_id(self, record_id: int) -> ScanRecord:
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)

    def subset(self, asset_ids) -> "DatasetManifest":
        """Manifest restricted to the given asset ids (record ids unchanged)."""
        keep = set(asset_ids)
        records = tuple(r for r in self.records if r.asset_id in keep)
        return DatasetManifest(self.config, records, self.generator_seed)


# ---------------------------------------------------------------------------
# PGM image I/O
# ---------------------------------------------------------------------------


def write_image(image: SonarImage, path: str | os.PathLike) -> None:
    """Write a sonar frame as 16-bit binary PGM (P5, maxval 65535).

    Rows are beams, columns are bins. Values are quantized with
    round(v * 65535); the round-trip error is at most 1/131070 per value.
    Validation happens before the file is opened, so no file is emitted on
    invalid input.
    """
    data = image.data
    if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
        raise ValidationError("refusing to write image with values outside [0, 1]")
    quantized = np.rint(data * PGM_MAXVAL).astype(">u2")
    header = f"P5\n{image.config.n_bins} {image.config.n_beams}\n{PGM_MAXVAL}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(quantized.tobytes())


def _parse_pgm_header(raw: bytes, path) -> tuple[int, int, int, int]:
    """Parse a P5 header, returning (width, height, maxval, payload offset)."""
    if raw[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file", byte_offset=0)
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        # skip whitespace and '#' comments between header tokens
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            end = raw.find(b"\n", pos)
            if end < 0:
                raise FormatError(f"{path}: unterminated comment in header", byte_offset=pos)
            pos = end + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header", byte_offset=start)
        token = raw[start:pos]
        if not token.isdigit():
            raise FormatError(f"{path}: invalid header token {token!r}", byte_offset=start)
        tokens.append(int(token))
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise FormatError(f"{path}: missing whitespace after maxval", byte_offset=pos)
    pos += 1
    width, height, maxval = tokens
    return width, height, maxval, pos


def read_pgm_dimensions(path: str | os.PathLike) -> tuple[int, int]:
    """Read only the (n_beams, n_bins) dimensions from a PGM header."""
    with open(path, "rb") as fh:
        raw = fh.read(256)
    width, height, _, _ = _parse_pgm_header(raw, path)
    return height, width


def read_image(path: str | os.PathLike, config: SonarConfig) -> SonarImage:
    """Read a 16-bit P5 PGM sonar frame.

    PGM files carry only dimensions; range and aperture come from the
    manifest config, which the file dimensions must match. Raises
    FormatError (with byte offset) on malformed files and ValidationError
    on dimension mismatch.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    width, height, maxval, offset = _parse_pgm_header(raw, path)
    if maxval != PGM_MAXVAL:
        raise FormatError(f"{path}: expected maxval {PGM_MAXVAL}, got {maxval}", byte_offset=offset)
    expected = width * height * 2
    payload = raw[offset : offset + expected]
    if len(payload) < expected:
        raise FormatError(
            f"{path}: truncated payload, expected {expected} bytes, got {len(payload)}",
            byte_offset=offset + len(payload),
        )
    values = np.frombuffer(payload, dtype=">u2").astype(np.float64) / PGM_MAXVAL
    data = values.reshape(height, width)
    if (config.n_beams, config.n_bins) != (height, width):
        raise ValidationError(
            f"{path}: image is {height}x{width}, manifest config says "
            f"{config.n_beams}x{config.n_bins}"
        )
    return SonarImage(config, data)


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------


def save_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    """Write a manifest as a UTF-8 JSON document with stable key order."""
    doc = {
        "config": {
            "max_range_m": manifest.config.max_range_m,
            "aperture_rad": manifest.config.aperture_rad,
            "n_beams": manifest.config.n_beams,
            "n_bins": manifest.config.n_bins,
        },
        "generator_seed": manifest.generator_seed,
        "records": [
            {
                "id": r.id,
                "x": r.pose.x,
                "y": r.pose.y,
                "heading": r.pose.heading,
                "t": r.pose.t,
                "image_path": r.image_path,
                "role": r.role,
                "asset_id": r.asset_id,
            }
            for r in manifest.records
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_manifest(path: str | os.PathLike, check_images: bool = True) -> DatasetManifest:
    """Load a manifest, validating roles, id uniqueness, and image paths.

    Image paths are resolved relative to the manifest's directory. With
    ``check_images`` (the default) every referenced image must exist and its
    PGM header must match the manifest config dimensions.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    try:
        cfg = doc["config"]
        config = SonarConfig(
            max_range_m=float(cfg["max_range_m"]),
            aperture_rad=float(cfg["aperture_rad"]),
            n_beams=int(cfg["n_beams"]),
            n_bins=int(cfg["n_bins"]),
        )
        records = tuple(
            ScanRecord(
                id=int(r["id"]),
                pose=Pose2D(
                    x=float(r["x"]),
                    y=float(r["y"]),
                    heading=float(r["heading"]),
                    t=float(r["t"]),
                ),
                image_path=str(r["image_path"]),
                role=str(r["role"]),
                asset_id=int(r["asset_id"]),
            )
            for r in doc["records"]
        )
        manifest = DatasetManifest(config, records, int(doc["generator_seed"]))
    except KeyError as exc:
        raise FormatError(f"{path}: missing manifest key {exc}") from exc
    if check_images:
        base = os.path.dirname(os.fspath(path))
        for r in manifest.records:
            img_path = os.path.join(base, r.image_path)
            if not os.path.isfile(img_path):
                raise ValidationError(f"record {r.id}: image path {r.image_path!r} does not resolve")
            beams, bins = read_pgm_dimensions(img_path)
            if (beams, bins) != (config.n_beams, config.n_bins):
                raise ValidationError(
                    f"record {r.id}: image {r.image_path!r} is {beams}x{bins}, "
                    f"config says {config.n_beams}x{config.n_bins}"
                )
    return manifest


def resolve_image_path(manifest_path: str | os.PathLike, record: ScanRecord) -> str:
    """Absolute path of a record's image, given the manifest's location."""
    return os.path.join(os.path.dirname(os.path.abspath(os.fspath(manifest_path))), record.image_path)


def load_images(manifest: DatasetManifest, manifest_path: str | os.PathLike) -> dict[int, SonarImage]:
    """Load every image referenced by a manifest, keyed by record id."""
    return {
        r.id: read_image(resolve_image_path(manifest_path, r), manifest.config)
        for r in manifest.records
    }
