"""Depth evaluation metrics, threshold error distributions, and loss formulas.

Standard depth metrics over the jointly valid, masked, cropped, range-gated
pixel selection:

    abs_rel  = mean |p - g| / g
    sq_rel   = mean (p - g)^2 / g
    rmse     = sqrt(mean (p - g)^2)
    rmse_log = sqrt(mean (ln p - ln g)^2)
    delta_k  = fraction with max(p/g, g/p) < 1.25^k,  k in {1, 2, 3}

Error distributions report the fraction of pixels within +/-5% and +/-10%
relative error.  All reductions use a fixed summation order so results are
bit-stable.  Predictions at a different resolution than the ground truth are
bilinearly upsampled over their valid regions first.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .depthmap import DepthMap
from .errors import DimensionMismatchError, EvaluationError
from .segmentation import Mask

DEFAULT_MIN_DEPTH_M = 1e-3
DEFAULT_MAX_DEPTH_M = 80.0

# Conventional evaluation sub-rectangle fractions for KITTI-shaped frames
# (rows top/bottom, cols left/right), applied by integer truncation.
_CROP_TOP = 0.40810811
_CROP_BOTTOM = 0.99189189
_CROP_LEFT = 0.03594771
_CROP_RIGHT = 0.96405229


@dataclass(frozen=True)
class CropRect:
    """Half-open pixel rectangle: rows [top, bottom), cols [left, right)."""

    top: int
    bottom: int
    left: int
    right: int

    def to_mask(self, height: int, width: int) -> np.ndarray:
        m = np.zeros((height, width), dtype=bool)
        m[self.top : self.bottom, self.left : self.right] = True
        return m


def garg_crop(width: int, height: int) -> CropRect:
    """The conventional evaluation crop for a width x height frame."""
    if width < 1 or height < 1:
        raise EvaluationError(f"degenerate image {width}x{height}")
    rect = CropRect(
        top=int(_CROP_TOP * height),
        bottom=int(_CROP_BOTTOM * height),
        left=int(_CROP_LEFT * width),
        right=int(_CROP_RIGHT * width),
    )
    if rect.bottom <= rect.top or rect.right <= rect.left:
        raise EvaluationError(f"crop is empty for a {width}x{height} image")
    return rect


@dataclass(frozen=True)
class MetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class ErrorDistribution:
    pct_within_5: float
    pct_within_10: float
    n_pixels: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorDistribution":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def resize_bilinear(depth: DepthMap, width: int, height: int) -> DepthMap:
    """Validity-aware bilinear resize; output pixels with no valid support are invalid."""
    if (depth.height, depth.width) == (height, width):
        return depth
    src_v = depth.valid.astype(np.float64)
    src_x = depth.values * src_v
    # Align pixel centers across resolutions.
    rows = (np.arange(height) + 0.5) * depth.height / height - 0.5
    cols = (np.arange(width) + 0.5) * depth.width / width - 0.5
    r0 = np.clip(np.floor(rows).astype(int), 0, depth.height - 1)
    c0 = np.clip(np.floor(cols).astype(int), 0, depth.width - 1)
    r1 = np.clip(r0 + 1, 0, depth.height - 1)
    c1 = np.clip(c0 + 1, 0, depth.width - 1)
    fr = np.clip(rows - r0, 0.0, 1.0)[:, None]
    fc = np.clip(cols - c0, 0.0, 1.0)[None, :]

    def gather(grid):
        return (
            grid[np.ix_(r0, c0)] * (1 - fr) * (1 - fc)
            + grid[np.ix_(r0, c1)] * (1 - fr) * fc
            + grid[np.ix_(r1, c0)] * fr * (1 - fc)
            + grid[np.ix_(r1, c1)] * fr * fc
        )

    num = gather(src_x)
    den = gather(src_v)
    valid = den > 1e-9
    values = np.zeros((height, width))
    values[valid] = num[valid] / den[valid]
    return DepthMap.create(values, valid)


def _selection(
    pred: DepthMap,
    gt: DepthMap,
    mask: Mask | None,
    min_d: float | None = None,
    max_d: float | None = None,
    crop: CropRect | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    if (pred.height, pred.width) != (gt.height, gt.width):
        pred = resize_bilinear(pred, gt.width, gt.height)
    sel = pred.valid & gt.valid
    if mask is not None:
        if mask.data.shape != gt.values.shape:
            raise DimensionMismatchError(
                f"mask {mask.data.shape} does not match ground truth {gt.values.shape}"
            )
        sel &= mask.data
    if crop is not None:
        sel &= crop.to_mask(gt.height, gt.width)
    if min_d is not None:
        sel &= gt.values >= min_d
    if max_d is not None:
        sel &= gt.values <= max_d
    return pred.values[sel], gt.values[sel]


def depth_metrics(
    pred: DepthMap,
    gt: DepthMap,
    mask: Mask | None = None,
    min_d: float = DEFAULT_MIN_DEPTH_M,
    max_d: float = DEFAULT_MAX_DEPTH_M,
    crop: CropRect | None = None,
    median_scale: bool = False,
) -> MetricsReport:
    """Standard metric suite over the evaluable selection.

    median_scale rescales predictions by median(gt)/median(pred) first; it is
    a diagnostic only and off by default (the pipeline is metric).
    """
    if min_d >= max_d:
        raise EvaluationError(f"min_d must be < max_d, got {min_d} >= {max_d}")
    p, g = _selection(pred, gt, mask, min_d, max_d, crop)
    if p.size == 0:
        raise EvaluationError("no evaluable pixels (empty selection)")
    if median_scale:
        p = p * (np.median(g) / np.median(p))
    if np.any(p <= 0):
        raise EvaluationError("predictions must be positive on the evaluated selection")
    err = p - g
    ratio = np.maximum(p / g, g / p)
    return MetricsReport(
        abs_rel=float(np.mean(np.abs(err) / g)),
        sq_rel=float(np.mean(err * err / g)),
        rmse=float(np.sqrt(np.mean(err * err))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
        n_pixels=int(p.size),
    )


def error_distribution(pred: DepthMap, gt: DepthMap, mask: Mask | None = None) -> ErrorDistribution:
    """Fractions of pixels within +/-5% and +/-10% of the ground truth."""
    p, g = _selection(pred, gt, mask)
    keep = g > 0
    p, g = p[keep], g[keep]
    if p.size == 0:
        raise EvaluationError("no evaluable pixels (empty selection)")
    rel = np.abs(p - g) / g
    return ErrorDistribution(
        pct_within_5=float(np.mean(rel <= 0.05)),
        pct_within_10=float(np.mean(rel <= 0.10)),
        n_pixels=int(p.size),
    )


def silog_loss(pred, gt) -> float:
    """Scale-invariant logarithmic loss; zero when pred is any multiple of gt."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    g = np.asarray(gt, dtype=np.float64).reshape(-1)
    if p.shape != g.shape or p.size == 0:
        raise EvaluationError(f"pred/gt must be equal-length and non-empty, got {p.size} vs {g.size}")
    if np.any(p <= 0) or np.any(g <= 0):
        raise EvaluationError("silog_loss requires strictly positive values")
    d = np.log(g) - np.log(p)
    n = d.size
    return float(np.sum(d * d) / n - (np.sum(d) / n) ** 2)


@dataclass(frozen=True)
class LatentParams:
    """Mean and standard deviation of a diagonal-Gaussian latent."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        sigma = np.atleast_1d(np.asarray(self.sigma, dtype=np.float64))
        if mu.shape != sigma.shape:
            raise EvaluationError(f"mu/sigma shapes differ: {mu.shape} vs {sigma.shape}")
        if np.any(sigma <= 0):
            raise EvaluationError("sigma must be positive elementwise")
        mu = mu.copy()
        sigma = sigma.copy()
        mu.flags.writeable = False
        sigma.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


def kl_loss(params: LatentParams, reduce: str = "mean") -> float:
    """KL divergence from N(mu, sigma^2) to N(0, 1), per dimension:

        -ln(sigma) + (sigma^2 + mu^2) / 2 - 1/2

    averaged over dimensions by default ("sum" to sum instead).
    """
    if reduce not in ("mean", "sum"):
        raise ValueError(f"reduce must be 'mean' or 'sum', got {reduce!r}")
    per_dim = -np.log(params.sigma) + (params.sigma**2 + params.mu**2) / 2.0 - 0.5
    return float(per_dim.mean() if reduce == "mean" else per_dim.sum())


def reparameterize(params: LatentParams, eps) -> np.ndarray:
    """Differentiable Gaussian sample: z = mu + eps * sigma, elementwise."""
    eps = np.atleast_1d(np.asarray(eps, dtype=np.float64))
    if eps.shape != params.mu.shape:
        raise EvaluationError(f"eps shape {eps.shape} does not match mu {params.mu.shape}")
    return params.mu + eps * params.sigma


class MetricsAccumulator:
    """Exact pixel-pooled metrics across frames (fixed accumulation order)."""

    def __init__(self):
        self.n = 0
        self.sum_abs_rel = 0.0
        self.sum_sq_rel = 0.0
        self.sum_sq = 0.0
        self.sum_sq_log = 0.0
        self.n_d1 = 0
        self.n_d2 = 0
        self.n_d3 = 0
        self.n_w5 = 0
        self.n_w10 = 0

    def add(self, pred: DepthMap, gt: DepthMap, mask: Mask | None = None,
            min_d: float = DEFAULT_MIN_DEPTH_M, max_d: float = DEFAULT_MAX_DEPTH_M,
            crop: CropRect | None = None) -> None:
        p, g = _selection(pred, gt, mask, min_d, max_d, crop)
        if p.size == 0:
            return
        if np.any(p <= 0):
            raise EvaluationError("predictions must be positive on the evaluated selection")
        err = p - g
        rel = np.abs(err) / g
        ratio = np.maximum(p / g, g / p)
        self.n += int(p.size)
        self.sum_abs_rel += float(np.sum(rel))
        self.sum_sq_rel += float(np.sum(err * err / g))
        self.sum_sq += float(np.sum(err * err))
        self.sum_sq_log += float(np.sum((np.log(p) - np.log(g)) ** 2))
        self.n_d1 += int(np.sum(ratio < 1.25))
        self.n_d2 += int(np.sum(ratio < 1.25**2))
        self.n_d3 += int(np.sum(ratio < 1.25**3))
        self.n_w5 += int(np.sum(rel <= 0.05))
        self.n_w10 += int(np.sum(rel <= 0.10))

    def report(self) -> MetricsReport:
        if self.n == 0:
            raise EvaluationError("no evaluable pixels were accumulated")
        n = self.n
        return MetricsReport(
            abs_rel=self.sum_abs_rel / n,
            sq_rel=self.sum_sq_rel / n,
            rmse=float(np.sqrt(self.sum_sq / n)),
            rmse_log=float(np.sqrt(self.sum_sq_log / n)),
            delta1=self.n_d1 / n,
            delta2=self.n_d2 / n,
            delta3=self.n_d3 / n,
            n_pixels=n,
        )

    def distribution(self) -> ErrorDistribution:
        if self.n == 0:
            raise EvaluationError("no evaluable pixels were accumulated")
        return ErrorDistribution(
            pct_within_5=self.n_w5 / self.n,
            pct_within_10=self.n_w10 / self.n,
            n_pixels=self.n,
        )
