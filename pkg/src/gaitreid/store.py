"""Dataset model and embedding file formats.

An embedding file is UTF-8 CSV with LF line endings. The first line is a
metadata header::

    #meta,backbone=<name>,q=<int>,p=<int>,level=<clip|footage>

followed by one data row per record:

* clip level:    ``runner_id,rp,clip_index,v0,...,v{p-1}``
* footage level: ``runner_id,rp,v0,...,v{p-1}``

Values are decimal text (scientific notation permitted) and round-trip at
full float64 precision. Clip-level files are pooled into per-footage
vectors at load time; the engine itself only ever stores footage vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateRecord,
    EmptyInput,
    InvalidSchedule,
    IoError,
    MixedIdentity,
    NonFiniteValue,
    ParseError,
)

HEADER_PREFIX = "#meta"
_LEVELS = ("clip", "footage")


@dataclass(frozen=True)
class BackboneMeta:
    """Identity of the feature extractor that produced a file.

    ``frames_per_clip`` is the number of frames the extractor consumes per
    prediction; ``feature_dim`` is the width of each emitted vector.
    """

    name: str
    frames_per_clip: int
    feature_dim: int

    def __post_init__(self) -> None:
        if not self.name:
            raise ParseError("backbone name must be non-empty")
        if "," in self.name or "\n" in self.name:
            raise ParseError(f"backbone name {self.name!r} contains a reserved character")
        if self.frames_per_clip < 1:
            raise ParseError("frames_per_clip must be >= 1")
        if self.feature_dim < 1:
            raise ParseError("feature_dim must be >= 1")


@dataclass
class ClipEmbedding:
    """One extractor output vector for one clip of one runner at one recording point."""

    runner_id: str
    recording_point: int
    clip_index: int
    vector: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClipEmbedding):
            return NotImplemented
        return (
            self.runner_id == other.runner_id
            and self.recording_point == other.recording_point
            and self.clip_index == other.clip_index
            and np.array_equal(self.vector, other.vector)
        )


@dataclass
class FootageEmbedding:
    """Clip-averaged vector for one (runner, recording point)."""

    runner_id: str
    recording_point: int
    vector: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FootageEmbedding):
            return NotImplemented
        return (
            self.runner_id == other.runner_id
            and self.recording_point == other.recording_point
            and np.array_equal(self.vector, other.vector)
        )


@dataclass
class Dataset:
    """Validated, canonically ordered collection of footage embeddings.

    Records are sorted by (runner_id, recording_point) at construction so
    that downstream seeded procedures are independent of file row order.
    The instance is treated as immutable after construction and is safe to
    share read-only across workers.
    """

    meta: BackboneMeta
    records: list[FootageEmbedding]
    identity_index: dict[str, set[int]] = field(init=False)

    def __post_init__(self) -> None:
        seen: set[tuple[str, int]] = set()
        index: dict[str, set[int]] = {}
        for rec in self.records:
            key = (rec.runner_id, rec.recording_point)
            if key in seen:
                raise DuplicateRecord(f"duplicate footage record for {key}")
            seen.add(key)
            vec = np.asarray(rec.vector, dtype=np.float64)
            if vec.ndim != 1 or vec.shape[0] != self.meta.feature_dim:
                raise DimensionMismatch(
                    f"record {key}: expected {self.meta.feature_dim} values, got {vec.shape}"
                )
            if not np.isfinite(vec).all():
                raise NonFiniteValue(f"record {key} contains a non-finite value")
            rec.vector = vec
            index.setdefault(rec.runner_id, set()).add(rec.recording_point)
        self.records.sort(key=lambda r: (r.runner_id, r.recording_point))
        self.identity_index = index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.meta == other.meta and self.records == other.records

    def get(self, runner_id: str, recording_point: int) -> FootageEmbedding:
        for rec in self.records:
            if rec.runner_id == runner_id and rec.recording_point == recording_point:
                return rec
        raise KeyError((runner_id, recording_point))

    def at_recording_point(self, recording_point: int) -> list[FootageEmbedding]:
        return [r for r in self.records if r.recording_point == recording_point]

    @property
    def identities(self) -> list[str]:
        return sorted(self.identity_index)


def clip_schedule(
    total_frames: int, frames_per_clip: int, num_clips: int
) -> list[tuple[int, int]]:
    """Evenly spaced clip windows over a stretch of footage.

    Returns ``num_clips`` windows of ``frames_per_clip`` frames each, as
    (start, length) pairs. The first window starts at frame 0 and the last
    ends at or before ``total_frames``; interior starts are placed at
    ``round(i * (total - q) / (n - 1))``.
    """
    if total_frames < 1 or frames_per_clip < 1 or num_clips < 1:
        raise InvalidSchedule("total_frames, frames_per_clip and num_clips must be positive")
    if total_frames < frames_per_clip:
        raise InvalidSchedule(
            f"footage of {total_frames} frames cannot fit a {frames_per_clip}-frame window"
        )
    if num_clips == 1:
        return [(0, frames_per_clip)]
    span = total_frames - frames_per_clip
    starts = [round(i * span / (num_clips - 1)) for i in range(num_clips)]
    return [(s, frames_per_clip) for s in starts]


def pool_clips(clips: list[ClipEmbedding]) -> FootageEmbedding:
    """Average clip vectors into one footage vector, all clips weighted equally.

    Clips are averaged in clip_index order so the result does not depend on
    the order of the input list.
    """
    if not clips:
        raise EmptyInput("cannot pool an empty clip list")
    first = clips[0]
    for clip in clips[1:]:
        if (
            clip.runner_id != first.runner_id
            or clip.recording_point != first.recording_point
        ):
            raise MixedIdentity(
                f"clip ({clip.runner_id}, {clip.recording_point}) does not match "
                f"({first.runner_id}, {first.recording_point})"
            )
        if clip.vector.shape != first.vector.shape:
            raise DimensionMismatch("clips have differing dimensions")
    ordered = sorted(clips, key=lambda c: c.clip_index)
    stacked = np.stack([c.vector for c in ordered]).astype(np.float64)
    return FootageEmbedding(first.runner_id, first.recording_point, stacked.mean(axis=0))


def dataset_from_clips(meta: BackboneMeta, clips: list[ClipEmbedding]) -> Dataset:
    """Group clips by (runner, recording point) and pool each group."""
    groups: dict[tuple[str, int], list[ClipEmbedding]] = {}
    for clip in clips:
        key = (clip.runner_id, clip.recording_point)
        bucket = groups.setdefault(key, [])
        if any(c.clip_index == clip.clip_index for c in bucket):
            raise DuplicateRecord(f"duplicate clip {key + (clip.clip_index,)}")
        bucket.append(clip)
    records = [pool_clips(group) for group in groups.values()]
    return Dataset(meta, records)


def _format_value(x: float) -> str:
    # repr() of a Python float is the shortest text that parses back exactly.
    return repr(float(x))


def _parse_value(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError as exc:
        raise ParseError(f"{where}: {text!r} is not a number") from exc
    if not math.isfinite(value):
        raise NonFiniteValue(f"{where}: non-finite value {text!r}")
    return value


def _parse_int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ParseError(f"{where}: {text!r} is not an integer") from exc


def _check_runner_id(runner_id: str) -> str:
    if not runner_id:
        raise ParseError("runner_id must be non-empty")
    if "," in runner_id or "\n" in runner_id:
        raise ParseError(f"runner_id {runner_id!r} contains a reserved character")
    return runner_id


def _header_line(meta: BackboneMeta, level: str) -> str:
    return (
        f"{HEADER_PREFIX},backbone={meta.name},q={meta.frames_per_clip},"
        f"p={meta.feature_dim},level={level}"
    )


def _parse_header(line: str) -> tuple[BackboneMeta, str]:
    fields = line.rstrip("\n").split(",")
    if not fields or fields[0] != HEADER_PREFIX:
        raise ParseError(f"missing {HEADER_PREFIX} header, got {line[:40]!r}")
    kv: dict[str, str] = {}
    for item in fields[1:]:
        if "=" not in item:
            raise ParseError(f"malformed header field {item!r}")
        key, _, value = item.partition("=")
        kv[key] = value
    for required in ("backbone", "q", "p", "level"):
        if required not in kv:
            raise ParseError(f"header missing {required!r}")
    level = kv["level"]
    if level not in _LEVELS:
        raise ParseError(f"unknown level {level!r}")
    meta = BackboneMeta(
        name=kv["backbone"],
        frames_per_clip=_parse_int(kv["q"], "header q"),
        feature_dim=_parse_int(kv["p"], "header p"),
    )
    return meta, level


def load_dataset(path: str | Path) -> Dataset:
    """Load an embedding file, pooling clip-level rows into footage vectors."""
    meta, level, clips, records = _read_file(path)
    if level == "clip":
        return dataset_from_clips(meta, clips)
    return Dataset(meta, records)


def load_clips(path: str | Path) -> tuple[BackboneMeta, list[ClipEmbedding]]:
    """Load a clip-level embedding file without pooling."""
    meta, level, clips, _ = _read_file(path)
    if level != "clip":
        raise ParseError(f"{path}: expected a clip-level file, got level={level!r}")
    return meta, clips


def _read_file(
    path: str | Path,
) -> tuple[BackboneMeta, str, list[ClipEmbedding], list[FootageEmbedding]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(f"{path}: empty file")
    meta, level = _parse_header(lines[0])
    fixed = 3 if level == "clip" else 2
    clips: list[ClipEmbedding] = []
    records: list[FootageEmbedding] = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        where = f"{path}:{lineno}"
        if len(fields) != fixed + meta.feature_dim:
            raise DimensionMismatch(
                f"{where}: expected {fixed + meta.feature_dim} fields, got {len(fields)}"
            )
        runner_id = _check_runner_id(fields[0])
        rp = _parse_int(fields[1], where)
        vector = np.array(
            [_parse_value(v, where) for v in fields[fixed:]], dtype=np.float64
        )
        if level == "clip":
            clip_index = _parse_int(fields[2], where)
            if clip_index < 0:
                raise ParseError(f"{where}: clip_index must be non-negative")
            clips.append(ClipEmbedding(runner_id, rp, clip_index, vector))
        else:
            records.append(FootageEmbedding(runner_id, rp, vector))
    return meta, level, clips, records


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a footage-level embedding file; load_dataset round-trips it exactly."""
    lines = [_header_line(dataset.meta, "footage")]
    for rec in dataset.records:
        _check_runner_id(rec.runner_id)
        values = ",".join(_format_value(v) for v in rec.vector)
        lines.append(f"{rec.runner_id},{rec.recording_point},{values}")
    _write_lines(path, lines)


def save_clips(meta: BackboneMeta, clips: list[ClipEmbedding], path: str | Path) -> None:
    """Write a clip-level embedding file in canonical row order."""
    ordered = sorted(clips, key=lambda c: (c.runner_id, c.recording_point, c.clip_index))
    lines = [_header_line(meta, "clip")]
    for clip in ordered:
        _check_runner_id(clip.runner_id)
        if clip.vector.shape != (meta.feature_dim,):
            raise DimensionMismatch(
                f"clip ({clip.runner_id}, {clip.recording_point}, {clip.clip_index}) "
                f"has dimension {clip.vector.shape}, expected ({meta.feature_dim},)"
            )
        values = ",".join(_format_value(v) for v in clip.vector)
        lines.append(f"{clip.runner_id},{clip.recording_point},{clip.clip_index},{values}")
    _write_lines(path, lines)


def _write_lines(path: str | Path, lines: list[str]) -> None:
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
