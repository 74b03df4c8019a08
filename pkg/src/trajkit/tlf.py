"""Binary track-file (TLF) and checkpoint (TRJP) formats.

TLF layout, little-endian: magic "TRJF", version u32, then u32 header
fields T, H_c, W_c, H, W, s, convention (0 absolute-pixel, 1
absolute-normalized, 2 offset), then float32 coordinates [T*N*2] and
visibility bytes [T*N] with N = H_c*W_c.  Offset-convention coordinates are
relative to the stride-cell center anchors.

Checkpoints store named float32 parameter blocks plus a JSON metadata tail.
Conversions run in float64 and round once to the float32 payload.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .trajfield import (
    OffsetField,
    SparseTracks,
    cell_anchors,
    denormalize_coords,
    normalize_coords,
    rasterize,
    to_offsets,
)

TLF_MAGIC = b"TRJF"
TLF_VERSION = 1
CKPT_MAGIC = b"TRJP"
CKPT_VERSION = 1

CONV_PIXEL = 0
CONV_NORMALIZED = 1
CONV_OFFSET = 2
CONVENTIONS = {CONV_PIXEL: "absolute-pixel", CONV_NORMALIZED: "absolute-normalized",
               CONV_OFFSET: "offset"}


class TlfError(ValueError):
    """Malformed or inconsistent TLF content."""


class TlfFile:
    """In-memory TLF record: header plus coarse per-track payload."""

    def __init__(self, coords, visibility, height: int, width: int, stride: int,
                 convention: int):
        self.coords = np.asarray(coords, dtype=np.float32)
        self.visibility = np.asarray(visibility, dtype=np.uint8)
        self.height = int(height)
        self.width = int(width)
        self.stride = int(stride)
        self.convention = int(convention)
        if self.convention not in CONVENTIONS:
            raise TlfError(f"unknown coordinate convention {convention}")
        if self.stride <= 0 or self.height % self.stride or self.width % self.stride:
            raise TlfError(f"frame {self.height}x{self.width} not divisible by stride {self.stride}")
        hc, wc = self.coarse_shape
        if self.coords.ndim != 3 or self.coords.shape[2] != 2 or self.coords.shape[1] != hc * wc:
            raise TlfError(f"coords shape {self.coords.shape} inconsistent with grid {hc}x{wc}")
        if self.visibility.shape != self.coords.shape[:2]:
            raise TlfError(f"visibility shape {self.visibility.shape} != {self.coords.shape[:2]}")

    @property
    def frames(self) -> int:
        return self.coords.shape[0]

    @property
    def coarse_shape(self):
        return self.height // self.stride, self.width // self.stride


def write_tlf(path, tlf: TlfFile) -> None:
    t, n, _ = tlf.coords.shape
    hc, wc = tlf.coarse_shape
    with open(path, "wb") as fh:
        fh.write(TLF_MAGIC)
        fh.write(struct.pack("<7I", TLF_VERSION, t, hc, wc, tlf.height, tlf.width,
                             tlf.stride))
        fh.write(struct.pack("<I", tlf.convention))
        fh.write(tlf.coords.astype("<f4").tobytes())
        fh.write(tlf.visibility.astype(np.uint8).tobytes())


def read_tlf(path) -> TlfFile:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 36 or raw[:4] != TLF_MAGIC:
        raise TlfError(f"{path}: not a TLF file")
    version, t, hc, wc, height, width, stride = struct.unpack("<7I", raw[4:32])
    if version != TLF_VERSION:
        raise TlfError(f"{path}: unsupported TLF version {version}")
    (convention,) = struct.unpack("<I", raw[32:36])
    n = hc * wc
    coord_bytes = t * n * 2 * 4
    expected = 36 + coord_bytes + t * n
    if len(raw) != expected:
        raise TlfError(f"{path}: payload length {len(raw)} != expected {expected}")
    coords = np.frombuffer(raw[36:36 + coord_bytes], dtype="<f4").reshape(t, n, 2)
    vis = np.frombuffer(raw[36 + coord_bytes:], dtype=np.uint8).reshape(t, n)
    try:
        return TlfFile(coords, vis, height, width, stride, convention)
    except TlfError:
        raise
    except ValueError as exc:
        raise TlfError(f"{path}: {exc}") from exc


def from_tracks(tracks: SparseTracks) -> TlfFile:
    return TlfFile(tracks.coords, tracks.visibility, tracks.height, tracks.width,
                   tracks.stride, CONV_PIXEL)


def _cell_anchor_rows(tlf: TlfFile) -> np.ndarray:
    return cell_anchors(tlf.height, tlf.width, tlf.stride).reshape(-1, 2)


def convert(tlf: TlfFile, convention: int) -> TlfFile:
    """Re-express the payload in another coordinate convention (float64
    arithmetic, one float32 rounding at the end)."""
    if convention not in CONVENTIONS:
        raise TlfError(f"unknown coordinate convention {convention}")
    if convention == tlf.convention:
        return TlfFile(tlf.coords.copy(), tlf.visibility.copy(), tlf.height,
                       tlf.width, tlf.stride, tlf.convention)
    norm = _to_normalized(tlf)
    if convention == CONV_NORMALIZED:
        out = norm
    elif convention == CONV_PIXEL:
        out = denormalize_coords(norm, tlf.height, tlf.width)
    else:
        out = norm - _cell_anchor_rows(tlf)[None]
    return TlfFile(out, tlf.visibility.copy(), tlf.height, tlf.width, tlf.stride,
                   convention)


def _to_normalized(tlf: TlfFile) -> np.ndarray:
    coords = tlf.coords.astype(np.float64)
    if tlf.convention == CONV_NORMALIZED:
        return coords
    if tlf.convention == CONV_PIXEL:
        return normalize_coords(coords, tlf.height, tlf.width)
    return coords + _cell_anchor_rows(tlf)[None]


def to_tracks(tlf: TlfFile) -> SparseTracks:
    """Back to pixel-coordinate tracks regardless of stored convention."""
    norm = _to_normalized(tlf)
    px = denormalize_coords(norm, tlf.height, tlf.width)
    return SparseTracks(px, tlf.visibility.copy(), tlf.stride, tlf.height, tlf.width)


def to_offset_field(tlf: TlfFile) -> OffsetField:
    """Dense pixel-anchored offset field for model consumption."""
    return to_offsets(rasterize(to_tracks(tlf)))


def coarse_pixel_positions(tlf: TlfFile):
    """(T, H_c, W_c, 2) pixel positions plus visibility, for the metrics."""
    hc, wc = tlf.coarse_shape
    norm = _to_normalized(tlf)
    px = denormalize_coords(norm, tlf.height, tlf.width)
    return px.reshape(tlf.frames, hc, wc, 2), tlf.visibility.reshape(tlf.frames, hc, wc).copy()


def from_offset_field(field: OffsetField, height: int, width: int) -> TlfFile:
    """Coarse-sample a dense offset field back into an offset-convention TLF."""
    from .trajfield import coarse_positions
    px, vis = coarse_positions(field, height, width)
    t, hc, wc, _ = px.shape
    norm = normalize_coords(px.reshape(t, hc * wc, 2), height, width)
    offsets = norm - cell_anchors(height, width, field.stride).reshape(-1, 2)[None]
    return TlfFile(offsets, vis.reshape(t, hc * wc), height, width, field.stride,
                   CONV_OFFSET)


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(path, blocks: dict, meta: dict | None = None) -> None:
    """Named float32 parameter blocks with a JSON metadata tail."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<2I", CKPT_VERSION, len(blocks)))
        for name in sorted(blocks):
            arr = np.asarray(blocks[name], dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
            fh.write(arr.tobytes())
        payload = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)


def load_checkpoint(path):
    """Returns (blocks, meta) with float64 arrays."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != CKPT_MAGIC:
        raise TlfError(f"{path}: not a checkpoint file")
    version, count = struct.unpack("<2I", raw[4:12])
    if version != CKPT_VERSION:
        raise TlfError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    blocks = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            shape = struct.unpack_from(f"<{ndim}I", raw, pos) if ndim else ()
            pos += 4 * ndim
            size = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(raw, dtype="<f4", count=size, offset=pos).reshape(shape)
            pos += size * 4
            blocks[name] = arr.astype(np.float64)
        (meta_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        meta = json.loads(raw[pos:pos + meta_len].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TlfError(f"{path}: truncated or corrupt checkpoint") from exc
    return blocks, meta
