"""Human-readable and plot-ready descriptions of a selected subset."""

from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ParseError
from .features import Axis, FeatureIndex, FloatArray
from .landmarks import SequenceExample
from .selection import FeatureSubset, SelectionTrace


def describe_subset(subset: FeatureSubset, trace: SelectionTrace | None = None) -> list[str]:
    """One line per feature in subset order, with its accuracy when a trace matches."""
    accuracies: dict[FeatureIndex, float] = {}
    if trace is not None:
        accuracies = {step.feature: step.accuracy for step in trace.steps}
    lines = []
    for number, feature in enumerate(subset, 1):
        line = f"{number}. {feature.describe()}"
        if feature in accuracies:
            line += f"  (accuracy after step: {accuracies[feature]:.4f})"
        lines.append(line)
    return lines


def accuracy_trajectory(trace: SelectionTrace) -> str:
    """``0.0000 -> 0.4286 -> ...`` starting from the empty subset."""
    return " -> ".join(f"{value:.4f}" for value in [0.0, *trace.accuracies])


def mean_neutral_shape(examples: Sequence[SequenceExample]) -> FloatArray:
    """Average neutral landmark layout, used as the backdrop of a plot."""
    return np.mean(np.stack([example.neutral.points for example in examples]), axis=0)


@dataclass(frozen=True, eq=False)
class PlotData:
    """Landmark coordinates and one bar per selected feature.

    Attributes:
        landmarks: (L, 2) coordinates, or None when no shape was supplied.
        bars: Selected features in subset order.
        accuracies: Accuracy after each feature, or None per feature.
    """

    landmarks: FloatArray | None
    bars: tuple[FeatureIndex, ...]
    accuracies: tuple[float | None, ...]


def build_plot_data(
    subset: FeatureSubset,
    trace: SelectionTrace | None = None,
    shape: FloatArray | None = None,
) -> PlotData:
    accuracies = {step.feature: step.accuracy for step in trace.steps} if trace else {}
    return PlotData(
        landmarks=shape,
        bars=tuple(subset.features),
        accuracies=tuple(accuracies.get(feature) for feature in subset.features),
    )


def format_plot_data(data: PlotData) -> str:
    """CSV with ``landmark,k,x,y`` rows followed by ``bar,i,j,axis,accuracy`` rows.

    Horizontal bars are drawn between the landmarks' x coordinates,
    vertical bars between their y coordinates.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["kind", "a", "b", "c", "d"])
    if data.landmarks is not None:
        for k, (x, y) in enumerate(data.landmarks.tolist()):
            writer.writerow(["landmark", k, repr(x), repr(y), ""])
    for feature, accuracy in zip(data.bars, data.accuracies, strict=True):
        cell = "" if accuracy is None else repr(accuracy)
        writer.writerow(["bar", feature.i, feature.j, feature.axis.value, cell])
    return buffer.getvalue()


def parse_plot_data(text: str) -> PlotData:
    """Read text written by format_plot_data.

    Raises:
        ParseError: On an unknown row kind or malformed cells.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["kind", "a", "b", "c", "d"]:
        raise ParseError("plot data header must be kind,a,b,c,d", line=1)
    points: list[tuple[float, float]] = []
    bars: list[FeatureIndex] = []
    accuracies: list[float | None] = []
    for line_no, row in enumerate(reader, 2):
        try:
            kind, a, b, c, d = row
            if kind == "landmark":
                if int(a) != len(points):
                    raise ParseError(f"landmark {a} out of order", line=line_no)
                points.append((float(b), float(c)))
            elif kind == "bar":
                bars.append(FeatureIndex(int(a), int(b), Axis(c)))
                accuracies.append(float(d) if d else None)
            else:
                raise ParseError(f"unknown row kind {kind!r}", line=line_no)
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(f"malformed row {row}: {exc}", line=line_no) from None
    landmarks = np.array(points, dtype=np.float64) if points else None
    return PlotData(landmarks, tuple(bars), tuple(accuracies))
