"""Built-in lightweight models behind the adapter's model-id registry.

These are deterministic pixel/text feature extractors, not neural networks:
frame embeddings come from color-grid statistics under a fixed random
projection; text embeddings use character n-gram feature hashing; person
tracking detects saturated color blobs and re-identifies them across videos
by hue signature. Each is addressable by a model identifier so real models
can be swapped in behind the same interfaces.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import cv2
import numpy as np

from feature_adapter import AdapterError

EMBEDDERS = ("grid16-rp-v1",)
TRACKERS = ("blob-hsv-v1",)
CAPTIONERS = ("template-v1",)
TEXT_EMBEDDERS = ("hash-ngram-v1",)


@dataclass(frozen=True)
class AdapterConfig:
    embedder: str = "grid16-rp-v1"
    tracker: str = "blob-hsv-v1"
    captioner: str = "template-v1"
    sample_rate: int = 1  # keep every n-th frame
    dim: int = 32
    device: str = "cpu"

    def __post_init__(self):
        if self.sample_rate < 1:
            raise AdapterError("sample_rate must be >= 1")
        if self.dim < 4:
            raise AdapterError("dim must be >= 4")
        if self.embedder not in EMBEDDERS:
            raise AdapterError(f"cannot load embedder {self.embedder!r}")
        if self.tracker not in TRACKERS:
            raise AdapterError(f"cannot load tracker {self.tracker!r}")
        if self.captioner not in CAPTIONERS:
            raise AdapterError(f"cannot load captioner {self.captioner!r}")


class GridEmbedder:
    """Per-channel 4x4 grid means projected to the target dimension.

    The projection matrix is derived from a fixed seed, so embeddings are
    reproducible across runs and machines.
    """

    GRID = 4

    def __init__(self, dim: int):
        self.dim = dim
        raw_dim = 3 * self.GRID * self.GRID
        seed = int.from_bytes(hashlib.sha256(b"grid16-rp-v1").digest()[:8], "big")
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((raw_dim, dim)) / np.sqrt(raw_dim)

    def embed(self, frame_bgr: np.ndarray) -> np.ndarray:
        g = self.GRID
        small = cv2.resize(frame_bgr, (g, g), interpolation=cv2.INTER_AREA)
        feats = (small.astype(np.float64) / 255.0).reshape(-1)
        vec = feats @ self._projection
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec


class HashTextEmbedder:
    """Character-trigram feature hashing into the target dimension."""

    def __init__(self, dim: int):
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        padded = f"  {text.lower()}  "
        for i in range(len(padded) - 2):
            gram = padded[i : i + 3].encode("utf-8")
            digest = hashlib.sha256(gram).digest()
            slot = int.from_bytes(digest[:4], "big") % self.dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            vec[slot] += sign
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec


@dataclass
class BlobDetection:
    x: float  # normalized centroid
    y: float
    hue: float  # degrees, 0..180 per OpenCV convention


class BlobTracker:
    """Saturated-blob detector with hue-signature re-identification.

    A shared gallery maps hue signatures to stable identity tokens, so the
    same subject keeps one token across videos processed by this tracker.
    """

    MIN_AREA_FRACTION = 0.001
    SAT_THRESHOLD = 120
    HUE_MATCH_DEGREES = 12.0

    def __init__(self):
        self._gallery: list[tuple[float, str]] = []  # (hue, identity)

    def detect(self, frame_bgr: np.ndarray) -> list[BlobDetection]:
        hsv = cv2.cvtColor(frame_bgr, cv2.COLOR_BGR2HSV)
        mask = (hsv[:, :, 1] >= self.SAT_THRESHOLD).astype(np.uint8)
        h, w = mask.shape
        count, labels, stats, centroids = cv2.connectedComponentsWithStats(mask)
        out = []
        for comp in range(1, count):
            area = stats[comp, cv2.CC_STAT_AREA]
            if area < self.MIN_AREA_FRACTION * h * w:
                continue
            cx, cy = centroids[comp]
            blob_mask = labels == comp
            # circular mean: OpenCV hue wraps at 180, and red straddles 0
            angles = hsv[:, :, 0][blob_mask].astype(np.float64) * (2.0 * np.pi / 180.0)
            mean_angle = np.arctan2(np.sin(angles).mean(), np.cos(angles).mean())
            hue = float((mean_angle * 180.0 / (2.0 * np.pi)) % 180.0)
            out.append(BlobDetection(x=cx / w, y=cy / h, hue=hue))
        out.sort(key=lambda b: (b.x, b.y))
        return out

    def _hue_distance(self, a: float, b: float) -> float:
        d = abs(a - b)
        return min(d, 180.0 - d)

    def identify(self, blob: BlobDetection) -> str:
        best = None
        best_d = self.HUE_MATCH_DEGREES
        for hue, ident in self._gallery:
            d = self._hue_distance(hue, blob.hue)
            if d < best_d:
                best, best_d = ident, d
        if best is not None:
            return best
        ident = f"T{len(self._gallery)}"
        self._gallery.append((blob.hue, ident))
        return ident

    def track(self, frame_bgr: np.ndarray) -> list[tuple[float, float, str]]:
        seen: set[str] = set()
        out = []
        for blob in self.detect(frame_bgr):
            ident = self.identify(blob)
            if ident in seen:  # one detection per identity per frame
                continue
            seen.add(ident)
            out.append((min(1.0, max(0.0, blob.x)), min(1.0, max(0.0, blob.y)), ident))
        return out


def caption_detections(identities: list[str], start_index: int, end_index: int) -> str:
    ids = ",".join(sorted(set(identities))) or "none"
    return f"persons {ids} present, frames {start_index}-{end_index}"
