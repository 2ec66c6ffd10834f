from pathlib import Path

import cv2
import numpy as np
import pytest

# BGR colors; same color in two clips must resolve to one identity
RED = (40, 40, 230)
GREEN = (40, 200, 40)
BLUE = (230, 80, 40)


def write_clip(path: Path, n_frames: int, squares, size=(96, 72), fps=8.0):
    """Tiny MJPG clip: colored squares moving linearly over a gray room.

    squares: list of (color_bgr, (x0, y0), (x1, y1)) in pixel coordinates.
    """
    fourcc = cv2.VideoWriter_fourcc(*"MJPG")
    writer = cv2.VideoWriter(str(path), fourcc, fps, size)
    assert writer.isOpened(), "MJPG writer unavailable"
    w, h = size
    for j in range(n_frames):
        frame = np.full((h, w, 3), 128, dtype=np.uint8)
        t = j / max(1, n_frames - 1)
        for color, (x0, y0), (x1, y1) in squares:
            cx = int(x0 + (x1 - x0) * t)
            cy = int(y0 + (y1 - y0) * t)
            cv2.rectangle(frame, (cx - 6, cy - 6), (cx + 6, cy + 6), color, -1)
        writer.write(frame)
    writer.release()
    return path


@pytest.fixture(scope="session")
def clips(tmp_path_factory):
    """Three clips: RED appears in all three, GREEN only in the first,
    BLUE only in the third, and clip two has a person-free prefix."""
    root = tmp_path_factory.mktemp("clips")
    # parallel lanes: squares never overlap, so blobs stay separable
    a = write_clip(
        root / "a.avi", 12,
        [(RED, (20, 18), (70, 18)), (GREEN, (70, 54), (25, 54))],
    )
    b = write_clip(root / "b.avi", 10, [(RED, (15, 40), (80, 40))])
    c = write_clip(
        root / "c.avi", 14,
        [(RED, (20, 14), (75, 14)), (BLUE, (15, 58), (80, 58))],
    )
    return [a, b, c]


@pytest.fixture(scope="session")
def empty_clip(tmp_path_factory):
    root = tmp_path_factory.mktemp("empty")
    return write_clip(root / "empty.avi", 10, [])
