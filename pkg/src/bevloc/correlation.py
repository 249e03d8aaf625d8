"""Deterministic semantic embeddings and the dense correlation "warehouse".

embed_features replaces the learned Siamese encoder with a fixed recipe:
per input pixel [road mask, building mask, truncated signed-distance
feature per channel, Gaussian-blurred mask per channel], 4x4 average-pooled
to the feature stride and L2-normalized per cell. The distance feature is
(clip(sdt / 10 m, -1, 1) - 1) / 2, i.e. -1 deep inside structure, -0.5 at a
boundary, 0 at and beyond the truncation radius, so cells with no structure
in reach have all-zero descriptors and correlate with nothing: matching
nothing against nothing is no evidence.

The volume is built once per localization; iterations only read local
windows out of it (and its 2x2-pooled half-resolution variant).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt, gaussian_filter

from .errors import BadShape, DimensionMismatch
from .grids import RasterGrid

FEATURE_STRIDE = 4
DESCRIPTOR_DIM = 6
SDT_TRUNCATION_M = 10.0
BLUR_SIGMA_PX = 2.0

_build_counter = 0


def build_count() -> int:
    """Process-global number of correlation volumes built so far."""
    return _build_counter


@dataclass(frozen=True)
class FeatureGrid:
    values: np.ndarray  # (d, H', W'), per-cell L2 norm 1 (or exactly 0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise BadShape(f"feature grid must be (d, H, W), got {v.shape}")
        norms = np.sqrt((v * v).sum(axis=0))
        off = norms[(norms > 1e-12) & (np.abs(norms - 1.0) > 1e-6)]
        if off.size:
            raise ValueError("feature cells must be L2-normalized or exactly zero")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class CorrelationVolume:
    full: np.ndarray  # (H', W', H', W') float32, >= 0
    half: np.ndarray  # (H', W', H'/2, W'/2) float32, 2x2 mean of full

    @property
    def bev_shape(self) -> tuple[int, int]:
        return self.full.shape[0], self.full.shape[1]

    @property
    def map_shape(self) -> tuple[int, int]:
        return self.full.shape[2], self.full.shape[3]


@dataclass(frozen=True)
class CorrelationWindow:
    """Per-cell square correlation patches at full and half map resolution."""

    full: np.ndarray  # (H', W', 2r+1, 2r+1) float32
    half: np.ndarray  # (H', W', 2r+1, 2r+1) float32, sampled in half-res cells
    radius: int


def _signed_distance_feature(mask: np.ndarray, resolution_mpp: float) -> np.ndarray:
    """Truncated signed-distance feature in [-1, 0]; empty masks give 0."""
    inside = mask > 0.5
    if not inside.any():
        return np.zeros_like(mask, dtype=np.float64)
    dist_out = distance_transform_edt(~inside)
    dist_in = distance_transform_edt(inside)
    sdt_m = (dist_out - dist_in) * resolution_mpp
    return (np.clip(sdt_m / SDT_TRUNCATION_M, -1.0, 1.0) - 1.0) / 2.0


def embed_features(mask: RasterGrid, d: int = DESCRIPTOR_DIM) -> FeatureGrid:
    """Build the 6-channel descriptor grid at 1/4 of the input resolution."""
    if d != DESCRIPTOR_DIM:
        raise ValueError(f"only the d={DESCRIPTOR_DIM} descriptor recipe is implemented")
    c, h, w = mask.channels.shape
    if c != 2:
        raise BadShape(f"expected 2 channels, got {c}")
    if h % FEATURE_STRIDE or w % FEATURE_STRIDE:
        raise BadShape(f"grid dims {h}x{w} not divisible by {FEATURE_STRIDE}")

    res = mask.spec.resolution_mpp
    road = mask.channels[0].astype(np.float64)
    building = mask.channels[1].astype(np.float64)
    planes = np.stack(
        [
            road,
            building,
            _signed_distance_feature(road, res),
            _signed_distance_feature(building, res),
            gaussian_filter(road, sigma=BLUR_SIGMA_PX, mode="constant", cval=0.0),
            gaussian_filter(building, sigma=BLUR_SIGMA_PX, mode="constant", cval=0.0),
        ]
    )
    pooled = planes.reshape(
        DESCRIPTOR_DIM, h // FEATURE_STRIDE, FEATURE_STRIDE, w // FEATURE_STRIDE, FEATURE_STRIDE
    ).mean(axis=(2, 4))

    norms = np.sqrt((pooled * pooled).sum(axis=0, keepdims=True))
    normalized = np.divide(pooled, norms, out=np.zeros_like(pooled), where=norms > 0)
    return FeatureGrid(normalized)


def build_volume(f_bev: FeatureGrid, f_map: FeatureGrid) -> CorrelationVolume:
    """Dense ReLU dot-product volume plus its 2x2 average-pooled variant.

    Accumulation runs in float64; storage is float32.
    """
    if f_bev.d != f_map.d:
        raise DimensionMismatch(f"descriptor dims differ: {f_bev.d} vs {f_map.d}")
    if (f_bev.height, f_bev.width) != (f_map.height, f_map.width):
        raise DimensionMismatch(
            f"spatial sizes differ: {(f_bev.height, f_bev.width)} vs {(f_map.height, f_map.width)}"
        )
    if f_map.height % 2 or f_map.width % 2:
        raise DimensionMismatch("map feature grid must have even dims for half pooling")

    hb, wb = f_bev.height, f_bev.width
    hm, wm = f_map.height, f_map.width
    n_bev, n_map = hb * wb, hm * wm
    a = f_bev.values.reshape(f_bev.d, n_bev)
    b = f_map.values.reshape(f_map.d, n_map)
    # channel-ordered float64 accumulation: bit-identical to a naive
    # per-pair loop (numpy ufuncs do not fuse multiply-add), unlike dgemm.
    # Blocked over BEV cells so the f64 accumulator stays cache-resident.
    full = np.empty((n_bev, n_map), dtype=np.float32)
    block = 256
    acc = np.empty((min(block, n_bev), n_map))
    tmp = np.empty_like(acc)
    for lo in range(0, n_bev, block):
        hi = min(lo + block, n_bev)
        acc_v = acc[: hi - lo]
        tmp_v = tmp[: hi - lo]
        np.multiply(a[0, lo:hi][:, None], b[0][None, :], out=acc_v)
        for c in range(1, f_bev.d):
            np.multiply(a[c, lo:hi][:, None], b[c][None, :], out=tmp_v)
            acc_v += tmp_v
        np.maximum(acc_v, 0.0, out=acc_v)
        full[lo:hi] = acc_v
    full = full.reshape(hb, wb, hm, wm)
    half = (
        full.reshape(hb, wb, hm // 2, 2, wm // 2, 2)
        .mean(axis=(3, 5), dtype=np.float64)
        .astype(np.float32)
    )
    global _build_counter
    _build_counter += 1
    return CorrelationVolume(full=full, half=half)


def _gather_windows(planes: np.ndarray, coords: np.ndarray, r: int) -> np.ndarray:
    """Bilinear windows around per-cell coords with zero padding.

    planes: (N, Hm, Wm) float32, one map plane per cell; coords: (N, 2) as
    (u, v). All integer offsets in [-r, r]^2 share the cell's fractional
    part, so one (2r+2)^2 integer patch per cell feeds all taps.
    """
    n, hm, wm = planes.shape
    side = 2 * r + 2
    uv = np.where(np.isfinite(coords), coords, -1e9)
    u0 = np.floor(uv[:, 0])
    v0 = np.floor(uv[:, 1])
    fu = (uv[:, 0] - u0).astype(np.float32)[:, None, None]
    fv = (uv[:, 1] - v0).astype(np.float32)[:, None, None]

    off = np.arange(side, dtype=np.int32) - r
    vi = np.clip(v0, -(r + 2), hm + r + 2).astype(np.int32)[:, None, None] + off[None, :, None]
    ui = np.clip(u0, -(r + 2), wm + r + 2).astype(np.int32)[:, None, None] + off[None, None, :]
    valid = (vi >= 0) & (vi < hm) & (ui >= 0) & (ui < wm)
    flat_idx = (
        np.arange(n, dtype=np.int64)[:, None, None] * (hm * wm)
        + np.clip(vi, 0, hm - 1).astype(np.int64) * wm
        + np.clip(ui, 0, wm - 1)
    )
    patch = planes.reshape(-1).take(flat_idx)
    patch *= valid

    w00 = (1.0 - fu) * (1.0 - fv)
    w01 = fu * (1.0 - fv)
    w10 = (1.0 - fu) * fv
    w11 = fu * fv
    return (
        w00 * patch[:, :-1, :-1]
        + w01 * patch[:, :-1, 1:]
        + w10 * patch[:, 1:, :-1]
        + w11 * patch[:, 1:, 1:]
    )


def sample_windows(
    vol: CorrelationVolume, coords: np.ndarray, r: int, include_half: bool = True
) -> CorrelationWindow:
    """Extract (2r+1)^2 bilinear windows centered on each cell's projected point.

    coords is (H', W', 2) in full-resolution map-feature pixels; half-volume
    windows are taken at the corresponding half-resolution location
    (coords - 0.5) / 2 since half cell (k, l) is centered at full coordinate
    (2k + 0.5, 2l + 0.5). Samples outside the volume are exactly 0. With
    include_half=False the half patches are all zero (skipped for speed when
    the caller will not use them).
    """
    if r < 1:
        raise ValueError("window radius must be >= 1")
    hb, wb = vol.bev_shape
    if coords.shape != (hb, wb, 2):
        raise DimensionMismatch(f"coords shape {coords.shape} != {(hb, wb, 2)}")

    n = hb * wb
    flat_full = vol.full.reshape(n, *vol.map_shape)
    c = coords.reshape(n, 2)

    side = 2 * r + 1
    win_full = _gather_windows(flat_full, c, r)
    if include_half:
        flat_half = vol.half.reshape(n, vol.half.shape[2], vol.half.shape[3])
        win_half = _gather_windows(flat_half, (c - 0.5) / 2.0, r)
        win_half = win_half.reshape(hb, wb, side, side)
    else:
        win_half = np.zeros((hb, wb, side, side), dtype=np.float32)
    return CorrelationWindow(
        full=win_full.reshape(hb, wb, side, side),
        half=win_half,
        radius=r,
    )
