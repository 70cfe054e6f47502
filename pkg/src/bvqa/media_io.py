"""Raw video decoding, frame sampling, color conversion and dataset manifests.

Supported inputs are 8-bit 4:2:0 only: Y4M files and headerless .yuv
(dimensions taken from the manifest). Anything else must be transcoded
upstream.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import ManifestError, VideoFormatError

MANIFEST_COLUMNS = ("id", "path", "width", "height", "fps", "pix_fmt", "mos", "dataset")
SUPPORTED_PIX_FMTS = ("yuv420p8", "y4m")

# Y4M colorspace tags that mean plain 8-bit 4:2:0
_C420_TAGS = {"420", "420jpeg", "420mpeg2", "420paldv"}


@dataclass(frozen=True)
class FramePlane:
    """One channel of one frame, row-major float64."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError(f"FramePlane needs a 2-D array, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("FramePlane contains non-finite values")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class VideoRecord:
    id: str
    path: str
    width: int
    height: int
    fps: float
    pix_fmt: str
    mos: float
    dataset_tag: str


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    records: tuple[VideoRecord, ...]
    mos_scale: tuple[float, float]
    bt709: bool = False

    def __post_init__(self):
        low, high = self.mos_scale
        if not low < high:
            raise ManifestError(f"mos_scale low must be < high, got {self.mos_scale}")
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise ManifestError(f"duplicate id {r.id}")
            seen.add(r.id)


def _parse_fps(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def load_manifest(path: str) -> DatasetManifest:
    """Parse a dataset manifest CSV.

    Expected layout: optional ``# key=value`` comment lines (``mos_scale`` is
    required, ``bt709`` optional), then a header row with the columns in
    MANIFEST_COLUMNS.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        raw_lines = fh.read().splitlines()

    meta: dict[str, str] = {}
    body: list[str] = []
    for line in raw_lines:
        if line.startswith("#"):
            stripped = line.lstrip("#").strip()
            if "=" in stripped:
                key, value = stripped.split("=", 1)
                meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)

    if "mos_scale" in meta:
        try:
            low_s, high_s = meta["mos_scale"].split(",")
            mos_scale = (float(low_s), float(high_s))
        except ValueError as exc:
            raise ManifestError(f"bad mos_scale metadata: {meta['mos_scale']!r}") from exc
    else:
        raise ManifestError("manifest is missing the '# mos_scale=low,high' line")
    bt709 = meta.get("bt709", "false").lower() in ("1", "true", "yes")

    reader = csv.DictReader(io.StringIO("\n".join(body)))
    if reader.fieldnames is None:
        raise ManifestError("manifest has no header row")
    missing = [c for c in MANIFEST_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise ManifestError(f"manifest is missing columns: {', '.join(missing)}")

    low, high = mos_scale
    records: list[VideoRecord] = []
    seen: set[str] = set()
    base_dir = os.path.dirname(os.path.abspath(path))
    for row_num, row in enumerate(reader, start=2):
        try:
            rec = VideoRecord(
                id=row["id"],
                path=os.path.join(base_dir, row["path"]),
                width=int(row["width"]),
                height=int(row["height"]),
                fps=_parse_fps(row["fps"]),
                pix_fmt=row["pix_fmt"],
                mos=float(row["mos"]),
                dataset_tag=row["dataset"],
            )
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"row {row_num}: {exc}") from exc
        if rec.id in seen:
            raise ManifestError(f"row {row_num}: duplicate id {rec.id}")
        seen.add(rec.id)
        if rec.fps <= 0:
            raise ManifestError(f"row {row_num}: fps must be positive, got {rec.fps}")
        if rec.pix_fmt not in SUPPORTED_PIX_FMTS:
            raise ManifestError(f"row {row_num}: unsupported pix_fmt {rec.pix_fmt!r}")
        if not low <= rec.mos <= high:
            raise ManifestError(
                f"row {row_num}: mos {rec.mos} outside declared scale [{low},{high}]"
            )
        records.append(rec)

    name = meta.get("name", os.path.splitext(os.path.basename(path))[0])
    return DatasetManifest(name=name, records=tuple(records), mos_scale=mos_scale, bt709=bt709)


FrameTriple = tuple[FramePlane, FramePlane, FramePlane]


def _read_planes(payload: bytes, width: int, height: int) -> FrameTriple:
    cw, ch = width // 2, height // 2
    y_len, c_len = width * height, cw * ch
    y = np.frombuffer(payload, dtype=np.uint8, count=y_len, offset=0)
    u = np.frombuffer(payload, dtype=np.uint8, count=c_len, offset=y_len)
    v = np.frombuffer(payload, dtype=np.uint8, count=c_len, offset=y_len + c_len)
    return (
        FramePlane(y.reshape(height, width).astype(np.float64)),
        FramePlane(u.reshape(ch, cw).astype(np.float64)),
        FramePlane(v.reshape(ch, cw).astype(np.float64)),
    )


def read_y4m(path: str) -> list[FrameTriple]:
    """Decode an 8-bit 4:2:0 Y4M file into (luma, chroma_u, chroma_v) triples."""
    with open(path, "rb") as fh:
        header = fh.readline()
        if not header.startswith(b"YUV4MPEG2"):
            raise VideoFormatError(f"{path}: not a YUV4MPEG2 stream")
        width = height = 0
        colorspace = "420"
        for token in header.split()[1:]:
            tag, value = chr(token[0]), token[1:].decode("ascii")
            if tag == "W":
                width = int(value)
            elif tag == "H":
                height = int(value)
            elif tag == "C":
                colorspace = value
        if colorspace not in _C420_TAGS:
            raise VideoFormatError(f"{path}: unsupported colorspace C{colorspace}")
        if width <= 0 or height <= 0:
            raise VideoFormatError(f"{path}: missing W/H in header")
        if width % 2 or height % 2:
            raise VideoFormatError(f"{path}: 4:2:0 needs even dimensions, got {width}x{height}")

        frame_len = width * height * 3 // 2
        frames: list[FrameTriple] = []
        while True:
            marker = fh.readline()
            if not marker:
                break
            if not marker.startswith(b"FRAME"):
                raise VideoFormatError(f"{path}: expected FRAME marker at frame {len(frames)}")
            payload = fh.read(frame_len)
            if len(payload) < frame_len:
                raise VideoFormatError(f"{path}: truncated payload at frame {len(frames)}")
            frames.append(_read_planes(payload, width, height))
    return frames


def write_y4m(path: str, frames: Sequence[FrameTriple], fps: float = 30.0) -> None:
    """Write 8-bit 4:2:0 frames as Y4M (inverse of read_y4m)."""
    if not frames:
        raise ValueError("cannot write an empty video")
    y0 = frames[0][0]
    fps_num = int(round(fps * 1000))
    header = f"YUV4MPEG2 W{y0.width} H{y0.height} F{fps_num}:1000 Ip A1:1 C420\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for y, u, v in frames:
            fh.write(b"FRAME\n")
            for plane in (y, u, v):
                fh.write(np.round(plane.data).astype(np.uint8).tobytes())


def read_yuv(path: str, width: int, height: int) -> list[FrameTriple]:
    """Decode a headerless 8-bit 4:2:0 .yuv file."""
    if width % 2 or height % 2:
        raise VideoFormatError(f"{path}: 4:2:0 needs even dimensions, got {width}x{height}")
    frame_len = width * height * 3 // 2
    frames: list[FrameTriple] = []
    with open(path, "rb") as fh:
        while True:
            payload = fh.read(frame_len)
            if not payload:
                break
            if len(payload) < frame_len:
                raise VideoFormatError(f"{path}: truncated payload at frame {len(frames)}")
            frames.append(_read_planes(payload, width, height))
    return frames


def read_video(record: VideoRecord) -> list[FrameTriple]:
    if record.pix_fmt == "y4m":
        return read_y4m(record.path)
    return read_yuv(record.path, record.width, record.height)


def sample_indices(length: int, fps: float, mode: str) -> list[int]:
    """Frame indices for the two sampling schedules.

    ``every_second_frame`` keeps indices 0, 2, 4, ...; ``one_per_second``
    keeps round(n * fps) for n = 0, 1, 2, ... clipped to the sequence length.
    """
    if length <= 0:
        raise ValueError("empty video")
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    if mode == "every_second_frame":
        return list(range(0, length, 2))
    if mode == "one_per_second":
        indices = []
        n = 0
        while True:
            idx = int(round(n * fps))
            if idx >= length:
                break
            indices.append(idx)
            n += 1
        return indices
    raise ValueError(f"unknown sampling mode {mode!r}")


def sample_frames(frames: Sequence, fps: float, mode: str) -> list:
    return [frames[i] for i in sample_indices(len(frames), fps, mode)]


def upsample_chroma(chroma: FramePlane, width: int, height: int) -> np.ndarray:
    """Nearest-neighbor 2x chroma upsampling to the luma grid."""
    up = np.repeat(np.repeat(chroma.data, 2, axis=0), 2, axis=1)
    if up.shape != (height, width):
        raise ValueError(
            f"chroma {chroma.data.shape} does not upsample to luma {(height, width)}"
        )
    return up


def yuv_to_rgb(y: FramePlane, u: FramePlane, v: FramePlane, bt709: bool = False) -> np.ndarray:
    """Limited-range YUV 4:2:0 to gamma-encoded RGB in [0, 1], shape (H, W, 3)."""
    h, w = y.height, y.width
    yp = (y.data - 16.0) / 219.0
    cb = (upsample_chroma(u, w, h) - 128.0) / 224.0
    cr = (upsample_chroma(v, w, h) - 128.0) / 224.0
    if bt709:
        r = yp + 1.5748 * cr
        g = yp - 0.1873 * cb - 0.4681 * cr
        b = yp + 1.8556 * cb
    else:
        r = yp + 1.402 * cr
        g = yp - 0.344136 * cb - 0.714136 * cr
        b = yp + 1.772 * cb
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# D65 reference white
_WHITE = np.array([0.95047, 1.0, 1.08883])


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def rgb_to_lab(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gamma-encoded sRGB in [0,1] to CIELAB (D65)."""
    linear = _srgb_to_linear(rgb)
    xyz = linear @ _SRGB_TO_XYZ.T
    t = xyz / _WHITE
    delta = 6.0 / 29.0
    f = np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)
    l_chan = 116.0 * f[..., 1] - 16.0
    a_chan = 500.0 * (f[..., 0] - f[..., 1])
    b_chan = 200.0 * (f[..., 1] - f[..., 2])
    return l_chan, a_chan, b_chan


def yuv_to_lab(
    y: FramePlane, u: FramePlane, v: FramePlane, bt709: bool = False
) -> tuple[FramePlane, FramePlane, FramePlane]:
    """BT.601 (or BT.709) limited-range YUV to CIELAB planes, L in [0, 100]."""
    l_chan, a_chan, b_chan = rgb_to_lab(yuv_to_rgb(y, u, v, bt709=bt709))
    return FramePlane(l_chan), FramePlane(a_chan), FramePlane(b_chan)
