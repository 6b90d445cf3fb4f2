"""
Polygons: Douglas-Peucker simplification and scanline rasterization.

Polygon vertices are continuous (x, y) coordinates in which pixel (col, row)
has its center at (col + 0.5, row + 0.5).
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from engine.errors import GeometryError, ParameterError
from engine.tensor import LabelMap, UNLABELED

logger = logging.getLogger(__name__)

Vertex = Tuple[float, float]


@dataclass(frozen=True)
class Polygon:
    """Closed polygon (last vertex joins the first) carrying a class id"""
    class_id: int
    vertices: Tuple[Vertex, ...]

    def __post_init__(self):
        vertices = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(vertices) < 3:
            raise GeometryError(f"A polygon needs at least 3 vertices, got {len(vertices)}")
        object.__setattr__(self, 'vertices', vertices)

    @property
    def area(self) -> float:
        """Unsigned shoelace area"""
        pts = np.array(self.vertices)
        x, y = pts[:, 0], pts[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def segment_distances(points: np.ndarray, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    """Distance of each point to the segment start-end"""
    direction = end - start
    length_sq = float(np.dot(direction, direction))
    offsets = points - start
    if length_sq == 0.0:
        return np.sqrt((offsets * offsets).sum(axis=1))
    t = np.clip(offsets @ direction / length_sq, 0.0, 1.0)
    nearest = start + t[:, None] * direction
    delta = points - nearest
    return np.sqrt((delta * delta).sum(axis=1))


def _simplify_open(points: np.ndarray, epsilon: float) -> List[int]:
    """Indices kept by iterative Douglas-Peucker on an open polyline"""
    count = len(points)
    if count <= 2:
        return list(range(count))
    keep = np.zeros(count, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, count - 1)]
    while stack:
        first, last = stack.pop()
        if last - first < 2:
            continue
        distances = segment_distances(points[first + 1:last], points[first], points[last])
        split = int(np.argmax(distances))
        if distances[split] > epsilon:
            index = first + 1 + split
            keep[index] = True
            stack.append((index, last))
            stack.append((first, index))
    return [int(i) for i in np.flatnonzero(keep)]


def _farthest_pair(points: np.ndarray) -> Tuple[int, int]:
    best, pair = -1.0, (0, 0)
    for i in range(len(points) - 1):
        delta = points[i + 1:] - points[i]
        distances = (delta * delta).sum(axis=1)
        j = int(np.argmax(distances))
        if distances[j] > best:
            best, pair = float(distances[j]), (i, i + 1 + j)
    return pair


def _drop_repeats(points: List[Vertex], closed: bool) -> List[Vertex]:
    out: List[Vertex] = []
    for point in points:
        if not out or point != out[-1]:
            out.append(point)
    if closed and len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def douglas_peucker(polyline: Sequence[Vertex], epsilon: float, closed: bool = False) -> List[Vertex]:
    """Simplify a polyline; every removed vertex stays within epsilon of the result.

    Closed curves are first split at their two farthest-apart vertices. The
    output is a subset of the input vertices; epsilon 0 returns the input.
    """
    if epsilon < 0:
        raise ParameterError(f"epsilon must be non-negative, got {epsilon}")
    points = [tuple(p) for p in polyline]
    if epsilon == 0 or len(points) < 3:
        return points

    if not closed:
        array = np.array(points, dtype=np.float64)
        return _drop_repeats([points[i] for i in _simplify_open(array, epsilon)], closed=False)

    if points[0] == points[-1]:
        points = points[:-1]
    if len(points) < 3:
        return points
    array = np.array(points, dtype=np.float64)
    i, j = _farthest_pair(array)
    forward = list(range(i, j + 1))
    backward = list(range(j, len(points))) + list(range(0, i + 1))
    kept_forward = [forward[k] for k in _simplify_open(array[forward], epsilon)]
    kept_backward = [backward[k] for k in _simplify_open(array[backward], epsilon)]
    order = kept_forward + kept_backward[1:-1]
    return _drop_repeats([points[k] for k in order], closed=True)


def _edge_pixels(start: Vertex, end: Vertex) -> List[Tuple[int, int]]:
    """Pixels whose centers lie exactly on the segment (center-aligned endpoints only)"""
    u0, v0 = start[0] - 0.5, start[1] - 0.5
    u1, v1 = end[0] - 0.5, end[1] - 0.5
    ends = (u0, v0, u1, v1)
    if any(abs(c - round(c)) > 1e-9 for c in ends):
        return []
    u0, v0, u1, v1 = (int(round(c)) for c in ends)
    steps = math.gcd(abs(u1 - u0), abs(v1 - v0))
    if steps == 0:
        return [(u0, v0)]
    du, dv = (u1 - u0) // steps, (v1 - v0) // steps
    return [(u0 + k * du, v0 + k * dv) for k in range(steps + 1)]


def polygon_mask(polygon: Polygon, size: Tuple[int, int], include_edges: bool = False) -> np.ndarray:
    """Boolean fill of one polygon by pixel centers.

    Scanline crossings use the half-open rule (an edge covers rows with
    y0 <= yc < y1, a span covers centers with x_left <= xc < x_right).
    With include_edges, centers lying exactly on an edge are added too.
    """
    height, width = size
    mask = np.zeros((height, width), dtype=bool)
    vertices = np.array(polygon.vertices, dtype=np.float64)
    x0, y0 = vertices[:, 0], vertices[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)

    row_lo = max(0, int(math.floor(y0.min() - 0.5)))
    row_hi = min(height - 1, int(math.ceil(y0.max() - 0.5)))
    for row in range(row_lo, row_hi + 1):
        yc = row + 0.5
        crossing = ((y0 <= yc) & (yc < y1)) | ((y1 <= yc) & (yc < y0))
        if not np.any(crossing):
            continue
        xa, ya, xb, yb = x0[crossing], y0[crossing], x1[crossing], y1[crossing]
        xs = np.sort(xa + (yc - ya) * (xb - xa) / (yb - ya))
        for left, right in zip(xs[0::2], xs[1::2]):
            first = max(0, int(math.ceil(left - 0.5)))
            stop = min(width, int(math.ceil(right - 0.5)))
            if stop > first:
                mask[row, first:stop] = True

    if include_edges:
        closed = list(polygon.vertices) + [polygon.vertices[0]]
        for start, end in zip(closed, closed[1:]):
            for col, row in _edge_pixels(start, end):
                if 0 <= row < height and 0 <= col < width:
                    mask[row, col] = True
    return mask


def rasterize(polygons: Sequence[Polygon], size: Tuple[int, int], include_edges: bool = False) -> LabelMap:
    """Fill polygons in order (later ones overwrite); uncovered pixels are UNLABELED"""
    height, width = size
    ids = np.full((height, width), UNLABELED, dtype=np.int64)
    for polygon in polygons:
        ids[polygon_mask(polygon, size, include_edges)] = polygon.class_id
    return LabelMap(ids)
