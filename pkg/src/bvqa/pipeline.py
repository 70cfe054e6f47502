"""Video-level feature extraction orchestration.

Frames are cut into non-overlapping one-second chunks. Spatial NSS families
run on every second frame of each chunk and are avg/std pooled within the
chunk; motion features come from consecutive sampled frame pairs per chunk;
chunk vectors are averaged across the video and the 1 frame/sec
spatial-impairment block is appended at video level.
"""

from __future__ import annotations

import numpy as np

from .errors import FeatureExtractionError
from .media_io import FramePlane, FrameTriple, sample_indices, yuv_to_lab
from .pooling import chunk_pool, video_aggregate
from .registry import REGISTRY, FeatureVector, concat_vectors
from .spatial import brisque_features, gmlog_features, higrade_grad_features
from .temporal import hcf_features, lcf_features

SPATIAL_FAMILIES = ("brisque", "gmlog", "higrade_grad")
ALL_FAMILIES = SPATIAL_FAMILIES + ("tlvqm_lcf", "tlvqm_hcf")


def chunk_frames(frames: list[FrameTriple], fps: float) -> list[list[FrameTriple]]:
    """Split a frame sequence into non-overlapping one-second chunks."""
    if not frames:
        raise ValueError("empty video")
    chunks = []
    c = 0
    while True:
        start = int(round(c * fps))
        stop = int(round((c + 1) * fps))
        if start >= len(frames):
            break
        chunks.append(frames[start : min(stop, len(frames))])
        c += 1
    return chunks


def spatial_frame_vector(frame: FrameTriple, families, bt709: bool = False) -> FeatureVector:
    """Concatenated enabled spatial families for one frame."""
    y, u, v = frame
    parts = []
    for family in families:
        if family == "brisque":
            parts.append(brisque_features(y))
        elif family == "gmlog":
            parts.append(gmlog_features(y))
        elif family == "higrade_grad":
            lab = yuv_to_lab(y, u, v, bt709=bt709)
            parts.append(higrade_grad_features(*lab, on_degenerate="sentinel"))
        else:
            raise ValueError(f"unknown spatial family {family!r}")
    return concat_vectors(parts)


def extract_chunk_vectors(
    frames: list[FrameTriple], fps: float, families=ALL_FAMILIES, bt709: bool = False
) -> list[FeatureVector]:
    """Per-chunk feature vectors (pooled spatial block + motion block)."""
    spatial = [f for f in families if f in SPATIAL_FAMILIES]
    want_lcf = "tlvqm_lcf" in families
    if not spatial and not want_lcf:
        raise ValueError("no chunk-level families enabled")
    vectors = []
    for chunk in chunk_frames(frames, fps):
        sampled = chunk[::2]  # spatial features run on every second frame
        parts = []
        if spatial:
            frame_vectors = [spatial_frame_vector(f, spatial, bt709=bt709) for f in sampled]
            parts.append(chunk_pool(frame_vectors))
        if want_lcf:
            lumas = [f[0] for f in sampled]
            pairs = list(zip(lumas[:-1], lumas[1:]))
            if not pairs:
                # single-sample chunk: fall back to a static self-pair
                pairs = [(lumas[0], lumas[0])]
            parts.append(lcf_features(pairs))
        vectors.append(concat_vectors(parts) if len(parts) > 1 else parts[0])
    return vectors


def extract_video_features(
    frames: list[FrameTriple], fps: float, families=ALL_FAMILIES, bt709: bool = False
) -> tuple[FeatureVector, list[FeatureVector]]:
    """(video-level vector, per-chunk vectors) for the enabled families."""
    unknown = [f for f in families if f not in ALL_FAMILIES]
    if unknown:
        raise ValueError(f"unknown families: {unknown}")
    chunk_level = [f for f in families if f != "tlvqm_hcf"]
    parts = []
    chunk_vectors: list[FeatureVector] = []
    if chunk_level:
        chunk_vectors = extract_chunk_vectors(frames, fps, chunk_level, bt709=bt709)
        parts.append(video_aggregate(chunk_vectors))
    if "tlvqm_hcf" in families:
        hcf_frames = [frames[i] for i in sample_indices(len(frames), fps, "one_per_second")]
        parts.append(hcf_features(hcf_frames))
    if not parts:
        raise ValueError("no families enabled")
    video_vector = concat_vectors(parts) if len(parts) > 1 else parts[0]
    return video_vector, chunk_vectors
