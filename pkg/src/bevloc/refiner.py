"""Iterative homography-guided pose refinement.

One localization embeds both grids once, builds the correlation volume once,
and then runs K iterations of: project the BEV feature cells through the
current homography, sample correlation windows around the projected
coordinates, decode a corner displacement (soft-argmax flow + confidence-
weighted planar fit), and compose the DLT update onto the homography. The
pose read out of each iterate is homography-constrained by construction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .correlation import (
    FEATURE_STRIDE,
    CorrelationWindow,
    build_count,
    build_volume,
    embed_features,
    sample_windows,
)
from .errors import DimensionMismatch
from .grids import RasterGrid
from .homography import (
    CornerDisplacement,
    Homography33,
    apply_homography,
    corners_to_homography,
    grid_corners,
    pose_from_homography,
)
from .pose import Pose3DoF

FIT_MODELS = ("rigid_fixed_scale", "similarity")


@dataclass(frozen=True)
class RefinerConfig:
    iterations: int = 6
    radius: int = 4
    softargmax_temperature: float = 0.1
    step_damping: float = 1.0
    confidence_floor: float = 1e-6
    dv_px: float = 10.0
    fit_model: str = "rigid_fixed_scale"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.softargmax_temperature <= 0:
            raise ValueError("softargmax temperature must be positive")
        if not 0.0 < self.step_damping <= 1.0:
            raise ValueError("step damping must lie in (0, 1]")
        if self.confidence_floor < 0:
            raise ValueError("confidence floor must be >= 0")
        if self.dv_px <= 0:
            raise ValueError("dv_px must be positive")
        if self.fit_model not in FIT_MODELS:
            raise ValueError(f"fit_model must be one of {FIT_MODELS}")

    def to_json_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "radius": self.radius,
            "softargmax_temperature": self.softargmax_temperature,
            "step_damping": self.step_damping,
            "confidence_floor": self.confidence_floor,
            "dv_px": self.dv_px,
            "fit_model": self.fit_model,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RefinerConfig":
        return cls(**{k: d[k] for k in d})


@dataclass
class IterationStep:
    homography: Homography33  # BEV input px -> map input px
    pose: Pose3DoF
    mean_flow_px: float  # mean decoded flow magnitude, map feature px
    mean_confidence: float
    insufficient_evidence: bool = False


@dataclass
class LocalizationResult:
    final_pose: Pose3DoF
    trace: list[IterationStep]
    config: RefinerConfig
    wall_time_s: float = 0.0
    setup_time_s: float = 0.0
    iteration_times_s: list[float] = field(default_factory=list)
    volume_builds: int = 0
    flags: list[str] = field(default_factory=list)

    def trace_json(self) -> list[dict]:
        return [
            {
                "pose": t.pose.as_dict(),
                "mean_flow_px": t.mean_flow_px,
                "mean_confidence": t.mean_confidence,
                "insufficient_evidence": t.insufficient_evidence,
            }
            for t in self.trace
        ]


def _stride_matrices() -> tuple[np.ndarray, np.ndarray]:
    """Feature px -> input px affine and its inverse (stride 4, offset 1.5)."""
    s = np.array([[4.0, 0.0, 1.5], [0.0, 4.0, 1.5], [0.0, 0.0, 1.0]])
    s_inv = np.array([[0.25, 0.0, -0.375], [0.0, 0.25, -0.375], [0.0, 0.0, 1.0]])
    return s, s_inv


def feature_space_homography(h: Homography33) -> Homography33:
    """Rescale an input-pixel homography to feature-grid pixels."""
    s, s_inv = _stride_matrices()
    return Homography33(s_inv @ h.h @ s)


def input_space_homography(h_feat: Homography33) -> Homography33:
    s, s_inv = _stride_matrices()
    return Homography33(s @ h_feat.h @ s_inv)


def project_coords(h: Homography33, feature_shape: tuple[int, int]) -> np.ndarray:
    """Project every BEV feature cell center into map feature pixels.

    `h` is the current input-pixel homography; the feature stride is folded
    in so that both source and result live on the /4 feature grids. Returns
    (H', W', 2) with (u, v) per cell.
    """
    hf, wf = feature_shape
    h_feat = feature_space_homography(h)
    vv, uu = np.meshgrid(np.arange(hf, dtype=np.float64), np.arange(wf, dtype=np.float64), indexing="ij")
    cells = np.stack([uu, vv], axis=-1)
    return apply_homography(h_feat, cells)


def _soft_argmax(windows: np.ndarray, tau: float, mode_flow: bool = False):
    """Soft-argmax statistics per cell: offset, max, contrast, covariance.

    windows: (H', W', S, S) with S = 2r+1. The covariance of the softmax
    distribution is the window's structure tensor: along a correlation
    ridge or plateau it is large (the offset is uninformative in that
    direction), across a sharp edge it is small. Returned as (cuu, cuv,
    cvv) per cell. Contrast (max - mean) is zero for flat windows.

    With mode_flow the offset is the window argmax refined by the softmax
    centroid of its 3x3 neighborhood: full-magnitude votes for the capture
    phase, where the plain expectation would be dragged toward the window
    center. Without it the offset is the full-window expectation: smoother
    and, combined with the covariance weighting, better for precision.
    """
    hb, wb, s, _ = windows.shape
    r = (s - 1) // 2
    n = hb * wb
    flat = windows.reshape(n, s * s)
    peak = flat.max(axis=-1)
    contrast = peak - flat.mean(axis=-1)
    weights = np.exp((flat - peak[:, None]) / tau)
    weights /= weights.sum(axis=-1, keepdims=True)
    offs = np.arange(s, dtype=np.float64) - r

    # covariance of the full-window softmax: the window's structure tensor
    w_grid = weights.reshape(n, s, s)
    pv = w_grid.sum(axis=2)
    pu = w_grid.sum(axis=1)
    mu = pu @ offs
    mv = pv @ offs
    cuu = pu @ (offs * offs) - mu * mu
    cvv = pv @ (offs * offs) - mv * mv
    cuv = np.einsum("nab,a,b->n", w_grid, offs, offs) - mu * mv

    if mode_flow:
        mode = flat.argmax(axis=-1)
        ma, mb = mode // s, mode % s
        na = ma[:, None, None] + np.arange(-1, 2)[None, :, None]
        nb = mb[:, None, None] + np.arange(-1, 2)[None, None, :]
        valid = (na >= 0) & (na < s) & (nb >= 0) & (nb < s)
        e = w_grid[np.arange(n)[:, None, None], np.clip(na, 0, s - 1), np.clip(nb, 0, s - 1)]
        e = e * valid
        norm = e.sum(axis=(1, 2))
        dv = (e.sum(axis=2) @ np.arange(-1.0, 2.0)) / norm + (ma - r)
        du = (e.sum(axis=1) @ np.arange(-1.0, 2.0)) / norm + (mb - r)
    else:
        du, dv = mu, mv

    delta = np.stack([du, dv], axis=-1).reshape(hb, wb, 2)
    cov = np.stack([cuu, cuv, cvv], axis=-1).reshape(hb, wb, 3)
    return delta, peak.reshape(hb, wb).astype(np.float64), contrast.reshape(hb, wb).astype(np.float64), cov


def _anisotropic_fit(
    x: np.ndarray,
    y: np.ndarray,
    prec: np.ndarray,
    fit_model: str,
    fixed_scale: float,
    rounds: int = 8,
) -> tuple[float, float, np.ndarray]:
    """Weighted least squares of y ~ s R(alpha) x + t with 2x2 cell weights.

    prec holds per-cell symmetric precision matrices as (p11, p12, p22):
    directions in which a cell's window was flat carry no weight, so ridge
    cells constrain only their cross direction (aperture problem). Solved by
    Gauss-Newton on the linearized rotation with a Huber reweight per round
    to reject votes inconsistent with the consensus transform.
    Returns (s, alpha, t).
    """
    estimate_scale = fit_model == "similarity"
    alpha = 0.0
    scale = fixed_scale
    t = np.zeros(2)
    robust = np.ones(len(x))
    p11, p12, p22 = prec[:, 0].copy(), prec[:, 1].copy(), prec[:, 2].copy()
    # annealed Huber threshold (in units of the median residual): generous
    # while the consensus is still forming, tight at the end so near-
    # converged fits reject structured outliers
    kappas = np.linspace(8.0, 1.5, rounds)

    for rnd in range(rounds):
        c, s = np.cos(alpha), np.sin(alpha)
        rx = np.stack([c * x[:, 0] - s * x[:, 1], s * x[:, 0] + c * x[:, 1]], axis=-1)
        # d/d_omega of R(alpha + omega) x at omega=0
        b = scale * np.stack([-rx[:, 1], rx[:, 0]], axis=-1)
        a0 = scale * rx - y

        q11, q12, q22 = robust * p11, robust * p12, robust * p22
        pb = np.stack([q11 * b[:, 0] + q12 * b[:, 1], q12 * b[:, 0] + q22 * b[:, 1]], axis=-1)
        pa = np.stack([q11 * a0[:, 0] + q12 * a0[:, 1], q12 * a0[:, 0] + q22 * a0[:, 1]], axis=-1)

        if estimate_scale:
            pc = np.stack([q11 * rx[:, 0] + q12 * rx[:, 1], q12 * rx[:, 0] + q22 * rx[:, 1]], axis=-1)
            n = 4
            mat = np.empty((n, n))
            rhs = np.empty(n)
            mat[0, 0] = (b * pb).sum()
            mat[0, 1] = mat[1, 0] = (rx * pb).sum()
            mat[1, 1] = (rx * pc).sum()
            mat[0, 2] = mat[2, 0] = pb[:, 0].sum()
            mat[0, 3] = mat[3, 0] = pb[:, 1].sum()
            mat[1, 2] = mat[2, 1] = pc[:, 0].sum()
            mat[1, 3] = mat[3, 1] = pc[:, 1].sum()
            mat[2, 2] = q11.sum()
            mat[2, 3] = mat[3, 2] = q12.sum()
            mat[3, 3] = q22.sum()
            rhs[0] = -(b * pa).sum()
            rhs[1] = -(rx * pa).sum()
            rhs[2] = -pa[:, 0].sum()
            rhs[3] = -pa[:, 1].sum()
        else:
            mat = np.empty((3, 3))
            rhs = np.empty(3)
            mat[0, 0] = (b * pb).sum()
            mat[0, 1] = mat[1, 0] = pb[:, 0].sum()
            mat[0, 2] = mat[2, 0] = pb[:, 1].sum()
            mat[1, 1] = q11.sum()
            mat[1, 2] = mat[2, 1] = q12.sum()
            mat[2, 2] = q22.sum()
            rhs[0] = -(b * pa).sum()
            rhs[1] = -pa[:, 0].sum()
            rhs[2] = -pa[:, 1].sum()

        try:
            sol = np.linalg.solve(mat, rhs)
        except np.linalg.LinAlgError:
            break
        alpha += float(sol[0])
        if estimate_scale:
            scale = max(scale + float(sol[1]), 1e-6)
            t = sol[2:4]
        else:
            t = sol[1:3]

        # Huber reweight on euclidean residuals against the new consensus
        c, s = np.cos(alpha), np.sin(alpha)
        pred = scale * np.stack(
            [c * x[:, 0] - s * x[:, 1], s * x[:, 0] + c * x[:, 1]], axis=-1
        ) + t
        # Huber on the Mahalanobis residual: disagreement is only measured in
        # directions where the cell's window was informative, so a ridge
        # vote sliding along its flat direction is not an outlier
        r_err = y - pred
        res = np.sqrt(
            np.maximum(
                p11 * r_err[:, 0] ** 2 + 2.0 * p12 * r_err[:, 0] * r_err[:, 1] + p22 * r_err[:, 1] ** 2,
                0.0,
            )
        )
        live = res[res > 1e-9]
        sigma = max(float(np.median(live)) if live.size else 1.0, 1e-6)
        robust = np.minimum(1.0, float(kappas[rnd]) * sigma / np.maximum(res, 1e-12))

    return float(scale), float(alpha), t


def iteration_radius(base_radius: int, k: int, prev_flow_px: float | None) -> int:
    """Coarse-to-fine window radius for iteration k (0-based).

    The first iteration looks three times as far as the base radius so that
    priors tens of meters off still see their match; afterwards the radius
    tracks the consensus step decoded in the previous iteration: while the
    fitted motion is still large the match lies far out and the window stays
    wide, once it settles the small precise window takes over. Depends only
    on past iterations, so a K-iteration run is a prefix of any longer run.
    """
    if k == 0 or prev_flow_px is None:
        return 4 * base_radius
    if k == 1:
        return 2 * base_radius
    if k < 4 and prev_flow_px > 2.0:
        return 2 * base_radius
    return base_radius


def decode_displacement(
    win: CorrelationWindow,
    coords: np.ndarray,
    cfg: RefinerConfig,
    fixed_scale: float = 0.5,
    radius: int | None = None,
    capture_phase: bool = False,
    window_centers: np.ndarray | None = None,
) -> tuple[CornerDisplacement, dict]:
    """Corner displacement from correlation windows.

    Per cell: soft-argmax flow from the full-resolution window, combined
    50/50 with the x2-scaled half-resolution flow; confidence is the larger
    of the two window maxima, floored at the config floor. A confidence-
    weighted planar fit (rotation+translation; scale fixed to the BEV/map
    resolution ratio unless fit_model="similarity") turns per-cell targets
    into a consistent transform, and the displacement is the damped move of
    the four feature-grid corner cells toward that transform's prediction.
    """
    expected = cfg.radius if radius is None else radius
    if win.radius != expected:
        raise DimensionMismatch(f"window radius {win.radius} != expected radius {expected}")
    if window_centers is None:
        window_centers = coords
    hb, wb = win.full.shape[:2]

    d_full, peak_full, con_full, cov_full = _soft_argmax(
        win.full, cfg.softargmax_temperature, mode_flow=capture_phase
    )
    d_half, peak_half, con_half, cov_half = _soft_argmax(
        win.half, cfg.softargmax_temperature, mode_flow=capture_phase
    )
    # coarse-to-fine selection: trust the full-resolution window wherever its
    # best match is as good as anything the wider half window can see; fall
    # back to the x2-scaled half-resolution flow only where the match lies
    # beyond the full window's reach (half offsets and covariances live on a
    # 2x coarser lattice, hence the x2 / x4 rescale).
    use_full = (peak_full >= 0.8 * peak_half)[..., None]
    flow = np.where(use_full, d_full, 2.0 * d_half)
    cov = np.where(use_full, cov_full, 4.0 * cov_half)
    conf = np.maximum(np.where(use_full[..., 0], con_full, con_half), cfg.confidence_floor)

    n_cells = hb * wb
    stats = {
        "mean_flow_px": float(np.hypot(flow[..., 0], flow[..., 1]).mean()),
        "mean_confidence": float(conf.mean()),
        "step_px": 0.0,
        "insufficient_evidence": False,
    }
    if conf.sum() < 4.0 * cfg.confidence_floor * n_cells:
        stats["insufficient_evidence"] = True
        stats["mean_flow_px"] = 0.0
        return CornerDisplacement.zero(), stats

    # per-cell precision: confidence-scaled inverse of the (regularized)
    # softmax covariance; flat window directions contribute nothing
    c11 = cov[..., 0] + 0.05
    c12 = cov[..., 1]
    c22 = cov[..., 2] + 0.05
    det = c11 * c22 - c12 * c12
    f = (conf / det).reshape(-1)
    prec = np.stack(
        [f * c22.reshape(-1), -f * c12.reshape(-1), f * c11.reshape(-1)], axis=-1
    )

    vv, uu = np.meshgrid(np.arange(hb, dtype=np.float64), np.arange(wb, dtype=np.float64), indexing="ij")
    x = np.stack([uu, vv], axis=-1).reshape(-1, 2)
    y = (window_centers + flow).reshape(-1, 2)
    scale, alpha, t = _anisotropic_fit(x, y, prec, cfg.fit_model, fixed_scale)

    corners = grid_corners(wb, hb)
    c, s = np.cos(alpha), np.sin(alpha)
    rot = np.array([[c, -s], [s, c]])
    target = corners @ (scale * rot).T + t
    base = coords[[0, 0, hb - 1, hb - 1], [0, wb - 1, wb - 1, 0]]
    stats["step_px"] = float(np.hypot(*(target - base).T).mean())
    delta = cfg.step_damping * (target - base)

    # sanity clamp: no corner moves farther than the feature-grid diagonal
    diag = float(np.hypot(wb, hb))
    norms = np.hypot(delta[:, 0], delta[:, 1])
    over = norms > diag
    if over.any():
        delta[over] *= (diag / norms[over])[:, None]
    return CornerDisplacement(delta), stats


def localize(
    bev: RasterGrid,
    map_patch: RasterGrid,
    h0: Homography33,
    cfg: RefinerConfig = RefinerConfig(),
) -> LocalizationResult:
    """Refine the initial homography hypothesis and read out the pose.

    `h0` maps BEV input pixels to map-patch input pixels (typically
    homography_from_pose of the noisy prior). Only the geometry of the BEV
    spec is used; its center pose is never read.
    """
    t_start = time.perf_counter()
    f_bev = embed_features(bev)
    f_map = embed_features(map_patch)
    if (f_bev.height, f_bev.width) != (f_map.height, f_map.width):
        raise DimensionMismatch("BEV and map feature grids must have equal spatial size")
    builds_before = build_count()
    vol = build_volume(f_bev, f_map)
    setup_time = time.perf_counter() - t_start

    fixed_scale = bev.spec.resolution_mpp / map_patch.spec.resolution_mpp
    feat_shape = (f_bev.height, f_bev.width)
    h_current = h0
    trace: list[IterationStep] = []
    iter_times: list[float] = []
    flags: list[str] = []

    prev_flow: float | None = None
    for k in range(cfg.iterations):
        t_iter = time.perf_counter()
        radius = iteration_radius(cfg.radius, k, prev_flow)
        # windows are centered on the integer lattice so every sample is an
        # exact volume value; the sub-cell part of the motion is carried by
        # the decoded flow, avoiding bilinear interpolation skew in the votes
        coords = project_coords(h_current, feat_shape)
        centers = np.rint(coords)
        windows = sample_windows(vol, centers, radius)
        delta, stats = decode_displacement(
            windows,
            coords,
            cfg,
            fixed_scale,
            radius=radius,
            capture_phase=radius != cfg.radius,
            window_centers=centers,
        )
        prev_flow = stats["step_px"]

        if stats["insufficient_evidence"]:
            flags.append(f"insufficient_evidence@{k + 1}")
        else:
            base = coords[[0, 0, feat_shape[0] - 1, feat_shape[0] - 1],
                          [0, feat_shape[1] - 1, feat_shape[1] - 1, 0]]
            update_feat = corners_to_homography(base, delta)
            h_feat = update_feat.compose(feature_space_homography(h_current))
            h_current = input_space_homography(h_feat)

        pose = pose_from_homography(h_current, bev.spec, map_patch.spec, cfg.dv_px)
        trace.append(
            IterationStep(
                homography=h_current,
                pose=pose,
                mean_flow_px=stats["mean_flow_px"],
                mean_confidence=stats["mean_confidence"],
                insufficient_evidence=stats["insufficient_evidence"],
            )
        )
        iter_times.append(time.perf_counter() - t_iter)

    return LocalizationResult(
        final_pose=trace[-1].pose,
        trace=trace,
        config=cfg,
        wall_time_s=time.perf_counter() - t_start,
        setup_time_s=setup_time,
        iteration_times_s=iter_times,
        volume_builds=build_count() - builds_before,
        flags=flags,
    )
