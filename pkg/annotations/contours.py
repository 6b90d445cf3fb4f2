"""
Outer contours of binary masks by Moore-neighbor tracing.
"""

import logging
from typing import List, Tuple

import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)

Point = Tuple[int, int]

# Clockwise on screen (y down), starting west; entries are (dy, dx)
MOORE_DIRECTIONS: Tuple[Tuple[int, int], ...] = (
    (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1),
)
_DIRECTION_INDEX = {d: i for i, d in enumerate(MOORE_DIRECTIONS)}
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def _trace_component(component: np.ndarray, start: Tuple[int, int]) -> List[Point]:
    """Trace one component (padded by 1) starting at its first raster pixel"""
    sy, sx = start
    contour = [(sy, sx)]
    current = (sy, sx)
    back = 0  # entered from the west: the start's west neighbor is unset
    start_back = back
    second = None
    max_steps = 4 * int(component.sum()) + 16

    for _ in range(max_steps):
        found = None
        for i in range(1, 9):
            d = (back + i) % 8
            ny, nx = current[0] + MOORE_DIRECTIONS[d][0], current[1] + MOORE_DIRECTIONS[d][1]
            if component[ny, nx]:
                found = d
                break
        if found is None:
            break

        step = MOORE_DIRECTIONS[found]
        nxt = (current[0] + step[0], current[1] + step[1])
        previous = MOORE_DIRECTIONS[(found - 1) % 8]
        prev_pixel = (current[0] + previous[0], current[1] + previous[1])
        new_back = _DIRECTION_INDEX[(prev_pixel[0] - nxt[0], prev_pixel[1] - nxt[1])]

        if nxt == (sy, sx) and new_back == start_back:
            break
        if current == (sy, sx) and second is not None and nxt == second:
            if contour[-1] == (sy, sx) and len(contour) > 1:
                contour.pop()
            break
        if second is None:
            second = nxt
        contour.append(nxt)
        current, back = nxt, new_back
    else:
        logger.warning(f"Contour tracing from {start} hit the step limit")

    return contour


def trace_contours(mask: np.ndarray) -> List[List[Point]]:
    """One clockwise outer contour per 4-connected component.

    Vertices are boundary pixels as (x, y); holes are ignored. Components are
    returned in raster order of their first pixel.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return []
    labels, count = ndimage.label(mask, structure=FOUR_CONNECTED)
    padded = np.pad(labels, 1)

    firsts = []
    flat = labels.ravel()
    _, first_index = np.unique(flat, return_index=True)
    for label, index in zip(np.unique(flat), first_index):
        if label == 0:
            continue
        firsts.append((index, label))
    firsts.sort()

    contours = []
    width = mask.shape[1]
    for index, label in firsts:
        y, x = divmod(int(index), width)
        component = padded == label
        traced = _trace_component(component, (y + 1, x + 1))
        contours.append([(px - 1, py - 1) for py, px in traced])
    return contours
