"""Classical 2D interest point detectors on rendered intensity images.

All structure-tensor detectors share one gradient kernel path. Filtering is
separable with reflect-101 borders, and derivatives are written as sums of
pixel *differences*, so adding a constant to an image leaves every response
bit-identical (for exactly representable shifts).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class DetectError(ValueError):
    pass


class ImageTooSmall(DetectError):
    pass


class UnknownDetector(DetectError):
    pass


class DimensionMismatch(DetectError):
    pass


class DetectorId(str, enum.Enum):
    HarrisA = "HarrisA"
    HarrisB = "HarrisB"
    KLT = "KLT"
    FAST = "FAST"
    Rohr = "Rohr"
    Foerstner = "Foerstner"
    Beaudet = "Beaudet"

    @classmethod
    def parse(cls, value) -> "DetectorId":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise UnknownDetector(f"unknown detector {value!r}; choose from "
                                  f"{[d.value for d in cls]}") from None


ALL_DETECTORS = tuple(DetectorId)
HARRIS_K = 0.04
FOERSTNER_MIN_ROUNDNESS = 0.5


@dataclass(frozen=True)
class DetectorParams:
    derivative_sigma: float = 1.0
    integration_sigma: float = 1.5
    # fraction of the image's maximum response
    response_threshold: float = 1e-6
    nms_radius: int = 3
    max_points: int = 500
    fast_arc_threshold: float = 20 / 255
    fast_arc_length: int = 9

    def __post_init__(self):
        if not (self.derivative_sigma > 0 and self.integration_sigma > 0):
            raise ValueError("sigmas must be positive")
        if self.nms_radius < 1:
            raise ValueError(f"nms_radius must be >= 1, got {self.nms_radius}")
        if self.max_points < 1:
            raise ValueError(f"max_points must be >= 1, got {self.max_points}")
        if not 9 <= self.fast_arc_length <= 12:
            raise ValueError(f"fast_arc_length must be in [9, 12], got {self.fast_arc_length}")
        if self.response_threshold < 0:
            raise ValueError("response_threshold must be non-negative")


@dataclass(frozen=True)
class InterestPoint:
    u: int
    v: int
    response: float
    detector: DetectorId


# --- kernels ---

def kernel_radius(sigma: float) -> int:
    return max(1, int(math.ceil(4.0 * sigma)))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized sampled Gaussian, length 2r+1."""
    r = kernel_radius(sigma)
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


def gaussian_derivative_kernel(sigma: float) -> np.ndarray:
    """First-derivative kernel for correlation: zero sum, unit response to a unit ramp."""
    r = kernel_radius(sigma)
    x = np.arange(-r, r + 1, dtype=np.float64)
    d = x * np.exp(-0.5 * (x / sigma) ** 2)
    return d / (x * d).sum()


def gaussian_second_kernel(sigma: float) -> np.ndarray:
    """Second-derivative kernel: zero sum, zero first moment, responds 2 to x^2."""
    r = kernel_radius(sigma)
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    k = (x * x / sigma ** 4 - 1 / sigma ** 2) * g
    k -= k.mean()
    return 2.0 * k / (x * x * k).sum()


def _pad(img: np.ndarray, r: int, axis: int) -> np.ndarray:
    if img.shape[axis] <= r:
        raise ImageTooSmall(f"image extent {img.shape[axis]} <= kernel radius {r}")
    width = [(0, 0), (0, 0)]
    width[axis] = (r, r)
    return np.pad(img, width, mode="reflect")  # numpy 'reflect' is reflect-101


def _shift(p: np.ndarray, r: int, x: int, n: int, axis: int) -> np.ndarray:
    sl = [slice(None), slice(None)]
    sl[axis] = slice(r + x, r + x + n)
    return p[tuple(sl)]


def smooth_axis(img: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    """Correlate with a symmetric kernel along one axis."""
    r = len(k) // 2
    n = img.shape[axis]
    p = _pad(img, r, axis)
    out = k[r] * img
    for x in range(1, r + 1):
        out = out + k[r + x] * (_shift(p, r, x, n, axis) + _shift(p, r, -x, n, axis))
    return out


def derivative_axis(img: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    """Correlate with an antisymmetric kernel along one axis, as weighted differences."""
    r = len(k) // 2
    n = img.shape[axis]
    p = _pad(img, r, axis)
    out = np.zeros_like(img, dtype=np.float64)
    for x in range(1, r + 1):
        out = out + k[r + x] * (_shift(p, r, x, n, axis) - _shift(p, r, -x, n, axis))
    return out


def second_axis(img: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    """Correlate with a zero-sum symmetric kernel along one axis, as weighted differences."""
    r = len(k) // 2
    n = img.shape[axis]
    p = _pad(img, r, axis)
    out = np.zeros_like(img, dtype=np.float64)
    for x in range(1, r + 1):
        out = out + k[r + x] * ((_shift(p, r, x, n, axis) - img) + (_shift(p, r, -x, n, axis) - img))
    return out


def _as_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DetectError(f"expected a 2D intensity image, got shape {img.shape}")
    return img


def gradients(image, derivative_sigma: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-derivative gradients (Ix along columns/u, Iy along rows/v)."""
    img = _as_image(image)
    g = gaussian_kernel(derivative_sigma)
    d = gaussian_derivative_kernel(derivative_sigma)
    ix = smooth_axis(derivative_axis(img, d, 1), g, 0)
    iy = smooth_axis(derivative_axis(img, d, 0), g, 1)
    return ix, iy


def sobel_gradients(image) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel, scaled by 1/8 so a unit ramp gives a unit gradient."""
    img = _as_image(image)
    d = np.array([-0.5, 0.0, 0.5])
    s = np.array([0.25, 0.5, 0.25])
    return smooth_axis(derivative_axis(img, d, 1), s, 0), smooth_axis(derivative_axis(img, d, 0), s, 1)


def hessian(image, derivative_sigma: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    img = _as_image(image)
    g = gaussian_kernel(derivative_sigma)
    d = gaussian_derivative_kernel(derivative_sigma)
    d2 = gaussian_second_kernel(derivative_sigma)
    ixx = smooth_axis(second_axis(img, d2, 1), g, 0)
    iyy = smooth_axis(second_axis(img, d2, 0), g, 1)
    ixy = derivative_axis(derivative_axis(img, d, 1), d, 0)
    return ixx, iyy, ixy


def _window(window) -> np.ndarray:
    return gaussian_kernel(window) if np.isscalar(window) else np.asarray(window, dtype=np.float64)


def structure_tensor(ix, iy, integration_sigma=1.5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A, B, C) with M = [[A, C], [C, B]], windowed by a Gaussian of ``integration_sigma``
    (or by an explicit 1D separable window)."""
    ix = np.asarray(ix, dtype=np.float64)
    iy = np.asarray(iy, dtype=np.float64)
    if ix.shape != iy.shape:
        raise DimensionMismatch(f"gradient shapes differ: {ix.shape} vs {iy.shape}")
    w = _window(integration_sigma)

    def blur(x):
        return smooth_axis(smooth_axis(x, w, 1), w, 0)

    return blur(ix * ix), blur(iy * iy), blur(ix * iy)


# --- responses ---

def _tensor_for(img, detector, params):
    if detector is DetectorId.HarrisB:
        ix, iy = sobel_gradients(img)
        return structure_tensor(ix, iy, np.full(5, 0.2))
    ix, iy = gradients(img, params.derivative_sigma)
    return structure_tensor(ix, iy, params.integration_sigma)


def response_map(image, detector, params: DetectorParams = DetectorParams()) -> np.ndarray:
    detector = DetectorId.parse(detector)
    img = _as_image(image)
    if detector is DetectorId.FAST:
        return fast_score_map(img, params.fast_arc_threshold, params.fast_arc_length)
    if detector is DetectorId.Beaudet:
        ixx, iyy, ixy = hessian(img, params.derivative_sigma)
        return np.abs(ixx * iyy - ixy * ixy)
    a, b, c = _tensor_for(img, detector, params)
    det = a * b - c * c
    tr = a + b
    if detector in (DetectorId.HarrisA, DetectorId.HarrisB):
        return det - HARRIS_K * tr * tr
    if detector is DetectorId.KLT:
        return (tr - np.sqrt((a - b) ** 2 + 4 * c * c)) / 2
    if detector is DetectorId.Rohr:
        return det
    # Foerstner: weight det/tr, gated by roundness
    out = np.zeros_like(det)
    ok = tr > 1e-12
    w = np.where(ok, det / np.where(ok, tr, 1.0), 0.0)
    q = np.where(ok, 4 * det / np.where(ok, tr * tr, 1.0), 0.0)
    keep = ok & (q >= FOERSTNER_MIN_ROUNDNESS)
    out[keep] = w[keep]
    return out


# --- FAST ---

# Bresenham circle of radius 3 as (du, dv), clockwise from 12 o'clock
FAST_CIRCLE = ((0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
               (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3))


def _longest_circular_run(flags) -> int:
    flags = list(flags)
    if all(flags):
        return len(flags)
    best = run = 0
    for f in flags + flags:
        run = run + 1 if f else 0
        best = max(best, run)
    return best


def fast_segment_test(patch, t: float, n: int = 9) -> bool:
    """Segment test on a 7x7 patch centred on the candidate pixel."""
    p = np.asarray(patch, dtype=np.float64)
    if p.shape != (7, 7):
        raise DetectError(f"FAST patch must be 7x7, got {p.shape}")
    diffs = [p[3 + dv, 3 + du] - p[3, 3] for du, dv in FAST_CIRCLE]
    return (_longest_circular_run(d > t for d in diffs) >= n
            or _longest_circular_run(d < -t for d in diffs) >= n)


def fast_score_map(image, t: float, n: int = 9) -> np.ndarray:
    """Per-pixel FAST score: the largest sum of |I_circle - I_centre| over any
    n-long contiguous arc that passes the segment test; 0 for non-corners."""
    img = _as_image(image)
    h, w = img.shape
    out = np.zeros_like(img)
    if h < 7 or w < 7:
        return out
    centre = img[3:h - 3, 3:w - 3]
    diffs = np.stack([img[3 + dv:h - 3 + dv, 3 + du:w - 3 + du] - centre for du, dv in FAST_CIRCLE])
    absd = np.abs(diffs)
    best = np.zeros_like(centre)
    for flags in (diffs > t, diffs < -t):
        for s in range(16):
            idx = [(s + k) % 16 for k in range(n)]
            ok = flags[idx].all(axis=0)
            if ok.any():
                score = absd[idx[0]].copy()
                for k in idx[1:]:
                    score += absd[k]
                best = np.where(ok & (score > best), score, best)
    out[3:h - 3, 3:w - 3] = best
    return out


# --- selection ---

def nms_mask(resp: np.ndarray, radius: int) -> np.ndarray:
    """True where the response is strictly greater than every other value in
    its (2r+1)^2 Chebyshev neighbourhood."""
    h, w = resp.shape
    p = np.pad(resp, radius, mode="constant", constant_values=-np.inf)
    neigh = np.full_like(resp, -np.inf)
    for dv in range(-radius, radius + 1):
        for du in range(-radius, radius + 1):
            if du or dv:
                np.maximum(neigh, p[radius + dv:radius + dv + h, radius + du:radius + du + w], out=neigh)
    return resp > neigh


def select_points(resp: np.ndarray, detector: DetectorId, params: DetectorParams) -> list[InterestPoint]:
    top = float(resp.max()) if resp.size else 0.0
    if not top > 0:
        return []
    threshold = params.response_threshold * top
    keep = nms_mask(resp, params.nms_radius) & (resp > 0) & (resp >= threshold)
    vs, us = np.nonzero(keep)
    r = resp[vs, us]
    order = np.lexsort((us, vs, -r))[: params.max_points]
    return [InterestPoint(int(us[i]), int(vs[i]), float(r[i]), detector) for i in order]


def detect(image, detector, params: DetectorParams = DetectorParams()) -> list[InterestPoint]:
    """Detect interest points, strongest first (ties by row then column)."""
    detector = DetectorId.parse(detector)
    img = _as_image(image)
    if img.shape[0] < 32 or img.shape[1] < 32:
        raise ImageTooSmall(f"detection needs at least 32x32, got {img.shape[1]}x{img.shape[0]}")
    return select_points(response_map(img, detector, params), detector, params)


def write_detections_csv(points, dest) -> None:
    """Write ``detector,u,v,response`` rows to a path or an open text stream."""
    import csv

    def emit(fh):
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["detector", "u", "v", "response"])
        for p in points:
            wr.writerow([p.detector.value, p.u, p.v, repr(p.response)])

    if hasattr(dest, "write"):
        emit(dest)
    else:
        with open(dest, "w", newline="") as fh:
            emit(fh)
