"""Landmark files and dataset manifests.

Two frame formats are supported:

* the points format used by 68-point annotation tools::

    version: 1
    n_points: 68
    {
    x y
    ...
    }

* a plain CSV with one ``x,y`` pair per line and an optional ``x,y`` header.

A manifest is a UTF-8 CSV with the header
``id,subject,label,neutral_path,apex_path``. Paths are relative to the
manifest's directory. An optional first line ``# landmarks=<L>`` sets the
landmark count for the dataset (default 68).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import numpy.typing as npt

from .errors import DimensionError, ManifestError, ParseError
from .labels import ExpressionLabel

logger = logging.getLogger(__name__)

DEFAULT_LANDMARK_COUNT = 68
MANIFEST_HEADER = ("id", "subject", "label", "neutral_path", "apex_path")


@dataclass(frozen=True, eq=False)
class LandmarkFrame:
    """One face's landmark coordinates for a single image.

    Attributes:
        points: Read-only float64 array of shape (L, 2) holding (x, y) pixels.

    Raises:
        DimensionError: If the array is not (L, 2) or is empty.
        ParseError: If any coordinate is NaN or infinite.
    """

    points: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] == 0:
            msg = f"Landmark frame must have shape (L, 2), got {points.shape}"
            raise DimensionError(msg)
        if not np.all(np.isfinite(points)):
            msg = "Landmark coordinates must be finite"
            raise ParseError(msg)
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> LandmarkFrame:
        """Build a frame from (x, y) tuples."""
        return cls(np.array(list(pairs), dtype=np.float64))

    @property
    def landmark_count(self) -> int:
        """Number of landmarks L."""
        return int(self.points.shape[0])

    def translated(self, dx: float, dy: float) -> LandmarkFrame:
        """Return a copy shifted by (dx, dy)."""
        return LandmarkFrame(self.points + np.array([dx, dy]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LandmarkFrame):
            return NotImplemented
        return bool(np.array_equal(self.points, other.points))

    def __hash__(self) -> int:
        return hash(self.points.tobytes())


@dataclass(frozen=True)
class SequenceExample:
    """A labeled neutral/apex frame pair from one expression sequence.

    Attributes:
        id: Unique example identifier.
        subject: Subject identifier (kept for bookkeeping; folds are not
            subject-exclusive).
        label: Expression class of the apex frame.
        neutral: First (neutral) frame.
        apex: Last (peak expression) frame.
    """

    id: str
    subject: str
    label: ExpressionLabel
    neutral: LandmarkFrame = field(repr=False)
    apex: LandmarkFrame = field(repr=False)

    def __post_init__(self) -> None:
        if self.neutral.landmark_count != self.apex.landmark_count:
            msg = (
                f"Example {self.id}: neutral frame has {self.neutral.landmark_count} landmarks "
                f"but apex frame has {self.apex.landmark_count}"
            )
            raise DimensionError(msg)

    @property
    def landmark_count(self) -> int:
        return self.neutral.landmark_count


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest row with paths already resolved."""

    id: str
    subject: str
    label: ExpressionLabel
    neutral_path: Path
    apex_path: Path


@dataclass(frozen=True)
class DatasetManifest:
    """Parsed manifest: entries plus the dataset's landmark count."""

    entries: tuple[ManifestEntry, ...]
    landmark_count: int = DEFAULT_LANDMARK_COUNT


def _decode(data: bytes | str, source: str | None) -> str:
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc}", source=source) from exc


def _parse_float(token: str, source: str | None, line: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric coordinate {token!r}", source, line) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite coordinate {token!r}", source, line)
    return value


def parse_pts_file(data: bytes | str, source: str | None = None) -> LandmarkFrame:
    """Parse a points-format landmark file.

    Args:
        data: File contents.
        source: Optional file name used in error messages.

    Returns:
        Frame with the declared number of points, in file order.

    Raises:
        ParseError: On a malformed header, a point count mismatch, or a
            non-numeric coordinate. The message names the line number.

    Example:
        >>> frame = parse_pts_file(b"version: 1\\nn_points: 2\\n{\\n0 0\\n3 4\\n}\\n")
        >>> frame.landmark_count
        2
    """
    lines = _decode(data, source).splitlines()
    # Header lines are matched after skipping leading blank lines
    numbered = [(n, text.strip()) for n, text in enumerate(lines, 1) if text.strip()]
    if len(numbered) < 3:
        raise ParseError("malformed header: expected version, n_points and '{'", source)

    line_no, text = numbered[0]
    if not text.startswith("version:"):
        raise ParseError(f"malformed header: expected 'version:', got {text!r}", source, line_no)

    line_no, text = numbered[1]
    key, _, value = text.partition(":")
    if key.strip() != "n_points":
        raise ParseError(f"malformed header: expected 'n_points:', got {text!r}", source, line_no)
    try:
        declared = int(value.strip())
    except ValueError:
        raise ParseError(f"malformed n_points value {value.strip()!r}", source, line_no) from None
    if declared <= 0:
        raise ParseError(f"n_points must be positive, got {declared}", source, line_no)

    line_no, text = numbered[2]
    if text != "{":
        raise ParseError(f"malformed header: expected '{{', got {text!r}", source, line_no)

    points: list[tuple[float, float]] = []
    closed = False
    for line_no, text in numbered[3:]:
        if closed:
            raise ParseError(f"unexpected content after '}}': {text!r}", source, line_no)
        if text == "}":
            closed = True
            continue
        tokens = text.split()
        if len(tokens) != 2:
            raise ParseError(f"expected 'x y', got {text!r}", source, line_no)
        points.append(
            (_parse_float(tokens[0], source, line_no), _parse_float(tokens[1], source, line_no))
        )

    if not closed:
        raise ParseError("missing closing '}'", source, len(lines))
    if len(points) != declared:
        msg = f"point count mismatch: n_points is {declared} but {len(points)} points were read"
        raise ParseError(msg, source)
    return LandmarkFrame.from_pairs(points)


def parse_csv_frame(data: bytes | str, source: str | None = None) -> LandmarkFrame:
    """Parse a CSV landmark frame (one ``x,y`` pair per line, optional header).

    Raises:
        ParseError: On a wrong column count, a non-numeric cell, or an empty file.
    """
    text = _decode(data, source)
    points: list[tuple[float, float]] = []
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), 1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", source, line_no)
        x_cell, y_cell = row[0].strip(), row[1].strip()
        # A single x,y header is tolerated before the first point
        if not points and x_cell.lower() == "x" and y_cell.lower() == "y":
            continue
        x = _parse_float(x_cell, source, line_no)
        y = _parse_float(y_cell, source, line_no)
        points.append((x, y))
    if not points:
        raise ParseError("no points", source)
    return LandmarkFrame.from_pairs(points)


def format_pts(frame: LandmarkFrame) -> str:
    """Serialize a frame in the points format with full float precision."""
    lines = ["version: 1", f"n_points: {frame.landmark_count}", "{"]
    lines.extend(f"{x!r} {y!r}" for x, y in frame.points.tolist())
    lines.append("}")
    return "\n".join(lines) + "\n"


def format_csv_frame(frame: LandmarkFrame) -> str:
    """Serialize a frame as ``x,y`` CSV with a header and full float precision."""
    lines = ["x,y"]
    lines.extend(f"{x!r},{y!r}" for x, y in frame.points.tolist())
    return "\n".join(lines) + "\n"


def read_frame(path: Path) -> LandmarkFrame:
    """Read a frame file, choosing the parser by extension (.pts or .csv)."""
    data = path.read_bytes()
    suffix = path.suffix.lower()
    if suffix == ".pts":
        return parse_pts_file(data, source=str(path))
    if suffix == ".csv":
        return parse_csv_frame(data, source=str(path))
    raise ParseError(f"unsupported frame extension {path.suffix!r}; use .pts or .csv", str(path))


def read_manifest(path: Path) -> DatasetManifest:
    """Parse a manifest file without loading the referenced frames.

    Raises:
        ManifestError: If the file is missing, the header is wrong, an id is
            duplicated, a label is unknown, or a referenced file is missing.
    """
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    text = path.read_text(encoding="utf-8-sig")
    lines = text.splitlines()

    landmark_count = DEFAULT_LANDMARK_COUNT
    if lines and lines[0].lstrip().startswith("#"):
        key, _, value = lines[0].lstrip("# \t").partition("=")
        if key.strip() != "landmarks":
            raise ManifestError(f"{path}:1: unknown directive {lines[0]!r}")
        try:
            landmark_count = int(value.strip())
        except ValueError:
            raise ManifestError(f"{path}:1: invalid landmark count {value.strip()!r}") from None
        if landmark_count < 2:
            raise ManifestError(f"{path}:1: landmark count must be at least 2")
        lines = lines[1:]
        first_line = 2
    else:
        first_line = 1

    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(cell.strip() for cell in header) != MANIFEST_HEADER:
        msg = f"{path}:{first_line}: manifest header must be {','.join(MANIFEST_HEADER)}"
        raise ManifestError(msg)

    base = path.parent
    seen: set[str] = set()
    entries: list[ManifestEntry] = []
    for offset, row in enumerate(reader, 1):
        line_no = first_line + offset
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(MANIFEST_HEADER):
            msg = f"{path}:{line_no}: expected {len(MANIFEST_HEADER)} columns, got {len(row)}"
            raise ManifestError(msg)
        example_id, subject, label_text, neutral, apex = (cell.strip() for cell in row)
        if example_id in seen:
            raise ManifestError(f"{path}:{line_no}: duplicate id {example_id!r}")
        seen.add(example_id)
        try:
            label = ExpressionLabel.parse(label_text)
        except ValueError as exc:
            raise ManifestError(f"{path}:{line_no}: {exc}") from None
        neutral_path, apex_path = base / neutral, base / apex
        for frame_path in (neutral_path, apex_path):
            if not frame_path.is_file():
                raise ManifestError(f"{path}:{line_no}: missing file {frame_path}")
        entries.append(ManifestEntry(example_id, subject, label, neutral_path, apex_path))

    return DatasetManifest(entries=tuple(entries), landmark_count=landmark_count)


def load_manifest(path: Path | str) -> list[SequenceExample]:
    """Load every example referenced by a manifest, in manifest order.

    Frames are parsed and checked against the manifest's landmark count.
    Per-class counts are logged.

    Args:
        path: Manifest file.

    Returns:
        Examples in manifest order.

    Raises:
        ManifestError: For manifest-level problems (see read_manifest).
        ParseError: If a frame file cannot be parsed.
        DimensionError: If a frame does not have the declared landmark count.
    """
    manifest = read_manifest(Path(path))
    examples: list[SequenceExample] = []
    for entry in manifest.entries:
        neutral = read_frame(entry.neutral_path)
        apex = read_frame(entry.apex_path)
        for frame, frame_path in ((neutral, entry.neutral_path), (apex, entry.apex_path)):
            if frame.landmark_count != manifest.landmark_count:
                msg = (
                    f"{frame_path}: expected {manifest.landmark_count} landmarks, "
                    f"got {frame.landmark_count}"
                )
                raise DimensionError(msg)
        examples.append(SequenceExample(entry.id, entry.subject, entry.label, neutral, apex))

    counts = class_counts(examples)
    logger.info(
        "Loaded %d examples from %s (%s)",
        len(examples),
        path,
        ", ".join(f"{label.value}={n}" for label, n in counts.items()),
    )
    return examples


def class_counts(examples: Iterable[SequenceExample]) -> dict[ExpressionLabel, int]:
    """Per-class example counts in canonical label order (absent classes count 0)."""
    counter = Counter(example.label for example in examples)
    return {label: counter.get(label, 0) for label in ExpressionLabel.ordered()}


def format_manifest(
    rows: Sequence[tuple[str, str, ExpressionLabel, str, str]],
    landmark_count: int = DEFAULT_LANDMARK_COUNT,
) -> str:
    """Render manifest text for (id, subject, label, neutral, apex) rows.

    Paths are written as given (relative to the manifest directory). The
    landmark directive is only emitted when L differs from the default.
    """
    buffer = io.StringIO()
    if landmark_count != DEFAULT_LANDMARK_COUNT:
        buffer.write(f"# landmarks={landmark_count}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(MANIFEST_HEADER)
    for example_id, subject, label, neutral, apex in rows:
        writer.writerow([example_id, subject, label.value, neutral, apex])
    return buffer.getvalue()
