"""Synthetic benchmark: sample generation, metrics, orchestration.

Samples are ground-truth crops of the bundled vector map with GPS-style
pose noise: the BEV grid is cut at the true pose (64 m at 0.25 m/px, with
optional degradations), the map patch at the perturbed prior (128 m at
0.5 m/px, undegraded). Localization quality is reported as Recall@{1,2,5,10}
m / degrees, APE and AOE, plus per-iteration aggregates.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyResults, OutOfCoverage
from .grids import RasterGrid
from .homography import homography_from_pose
from .osm_map import VectorMap, crop_patch
from .pose import Pose3DoF, angle_diff, wrap_angle
from .refiner import LocalizationResult, RefinerConfig, localize

BEV_SIZE_M = 64.0
BEV_RESOLUTION_MPP = 0.25
MAP_SIZE_M = 128.0
MAP_RESOLUTION_MPP = 0.5
COVERAGE_MARGIN_M = 96.0

POSITION_THRESHOLDS_M = (1.0, 2.0, 5.0, 10.0)
ORIENTATION_THRESHOLDS_DEG = (1.0, 2.0, 5.0, 10.0)


@dataclass(frozen=True)
class NoiseModel:
    max_trans_m: float = 30.0
    max_rot_deg: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.max_trans_m < 0 or self.max_rot_deg < 0:
            raise ValueError("noise bounds must be >= 0")

    def to_json_dict(self) -> dict:
        return {"max_trans_m": self.max_trans_m, "max_rot_deg": self.max_rot_deg, "seed": self.seed}


@dataclass(frozen=True)
class DegradationSpec:
    dropout_patch_count: int = 0
    dropout_patch_size_px: int = 12
    mask_flip_rate: float = 0.0
    dilation_px: int = 0
    occlusion_sector_deg: float = 0.0
    occlusion_sector_start_deg: float | None = None  # None: random per sample

    def __post_init__(self):
        if not 0.0 <= self.mask_flip_rate <= 1.0:
            raise ValueError("mask_flip_rate must lie in [0, 1]")
        if self.dropout_patch_count < 0 or self.dropout_patch_size_px < 0 or self.dilation_px < 0:
            raise ValueError("degradation sizes must be >= 0")
        if not 0.0 <= self.occlusion_sector_deg <= 360.0:
            raise ValueError("occlusion sector must lie in [0, 360] degrees")

    @property
    def is_clean(self) -> bool:
        return (
            self.dropout_patch_count == 0
            and self.mask_flip_rate == 0.0
            and self.dilation_px == 0
            and self.occlusion_sector_deg == 0.0
        )

    def to_json_dict(self) -> dict:
        return {
            "dropout_patch_count": self.dropout_patch_count,
            "dropout_patch_size_px": self.dropout_patch_size_px,
            "mask_flip_rate": self.mask_flip_rate,
            "dilation_px": self.dilation_px,
            "occlusion_sector_deg": self.occlusion_sector_deg,
            "occlusion_sector_start_deg": self.occlusion_sector_start_deg,
        }


@dataclass
class BenchmarkReport:
    recall_position: dict[float, float]
    recall_orientation: dict[float, float]
    ape_mean_m: float
    ape_median_m: float
    aoe_mean_deg: float
    aoe_median_deg: float
    per_iteration: list[dict]  # [{iteration, ape_median_m, aoe_median_deg, ...}]
    ape_histogram: dict  # {"edges_m": [...], "counts": [...]}
    sample_count: int
    config_hash: str

    def to_json_dict(self) -> dict:
        return {
            "recall_position_m": {str(k): v for k, v in self.recall_position.items()},
            "recall_orientation_deg": {str(k): v for k, v in self.recall_orientation.items()},
            "ape_mean_m": self.ape_mean_m,
            "ape_median_m": self.ape_median_m,
            "aoe_mean_deg": self.aoe_mean_deg,
            "aoe_median_deg": self.aoe_median_deg,
            "per_iteration": self.per_iteration,
            "ape_histogram": self.ape_histogram,
            "sample_count": self.sample_count,
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "BenchmarkReport":
        return cls(
            recall_position={float(k): v for k, v in d["recall_position_m"].items()},
            recall_orientation={float(k): v for k, v in d["recall_orientation_deg"].items()},
            ape_mean_m=d["ape_mean_m"],
            ape_median_m=d["ape_median_m"],
            aoe_mean_deg=d["aoe_mean_deg"],
            aoe_median_deg=d["aoe_median_deg"],
            per_iteration=d["per_iteration"],
            ape_histogram=d["ape_histogram"],
            sample_count=d["sample_count"],
            config_hash=d["config_hash"],
        )


def perturb_pose(pose: Pose3DoF, nm: NoiseModel, rng: np.random.Generator | None = None) -> Pose3DoF:
    """Uniform per-axis translation and uniform rotation offset (GPS noise)."""
    rng = np.random.default_rng(nm.seed) if rng is None else rng
    dx = float(rng.uniform(-nm.max_trans_m, nm.max_trans_m))
    dy = float(rng.uniform(-nm.max_trans_m, nm.max_trans_m))
    dth = math.radians(float(rng.uniform(-nm.max_rot_deg, nm.max_rot_deg)))
    return Pose3DoF(pose.x_m + dx, pose.y_m + dy, wrap_angle(pose.theta_rad + dth))


def _apply_degradations(bev: RasterGrid, deg: DegradationSpec, rng: np.random.Generator) -> RasterGrid:
    if deg.is_clean:
        return bev
    channels = bev.channels.copy()
    h, w = channels.shape[1:]

    if deg.dilation_px > 0:
        from scipy.ndimage import grey_dilation

        size = 2 * deg.dilation_px + 1
        for c in range(channels.shape[0]):
            channels[c] = grey_dilation(channels[c], size=(size, size))

    if deg.mask_flip_rate > 0.0:
        flips = rng.random(channels.shape) < deg.mask_flip_rate
        channels = np.where(flips, 1.0 - channels, channels).astype(np.float32)

    for _ in range(deg.dropout_patch_count):
        size = deg.dropout_patch_size_px
        if size <= 0:
            break
        top = int(rng.integers(0, max(1, h - size)))
        left = int(rng.integers(0, max(1, w - size)))
        channels[:, top : top + size, left : left + size] = 0.0

    if deg.occlusion_sector_deg > 0.0:
        start = (
            float(rng.uniform(0.0, 360.0))
            if deg.occlusion_sector_start_deg is None
            else deg.occlusion_sector_start_deg
        )
        vv, uu = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        cu, cv = (w - 1) / 2.0, (h - 1) / 2.0
        ang = (np.degrees(np.arctan2(vv - cv, uu - cu)) - start) % 360.0
        wedge = ang < deg.occlusion_sector_deg
        channels[:, wedge] = 0.0

    return RasterGrid(bev.spec, channels)


def make_sample(
    vm: VectorMap,
    true_pose: Pose3DoF,
    nm: NoiseModel,
    deg: DegradationSpec = DegradationSpec(),
    rng: np.random.Generator | None = None,
) -> tuple[RasterGrid, RasterGrid, Pose3DoF, Pose3DoF]:
    """Build (bev, map_patch, prior, gt) for one benchmark sample.

    The BEV is degraded per `deg`; the map patch, centered and oriented at
    the noisy prior, stays clean. Requires 96 m of map coverage around the
    true pose.
    """
    bounds = vm.bounds()
    if bounds is None:
        raise OutOfCoverage("vector map is empty")
    lo_e, lo_n, hi_e, hi_n = bounds
    if not (
        lo_e + COVERAGE_MARGIN_M <= true_pose.x_m <= hi_e - COVERAGE_MARGIN_M
        and lo_n + COVERAGE_MARGIN_M <= true_pose.y_m <= hi_n - COVERAGE_MARGIN_M
    ):
        raise OutOfCoverage(
            f"pose ({true_pose.x_m:.0f}, {true_pose.y_m:.0f}) closer than "
            f"{COVERAGE_MARGIN_M:.0f} m to the map boundary"
        )

    rng = np.random.default_rng(nm.seed) if rng is None else rng
    prior = perturb_pose(true_pose, nm, rng)
    bev = crop_patch(vm, true_pose, BEV_SIZE_M, BEV_RESOLUTION_MPP)
    bev = _apply_degradations(bev, deg, rng)
    map_patch = crop_patch(vm, prior, MAP_SIZE_M, MAP_RESOLUTION_MPP)
    return bev, map_patch, prior, true_pose


def sample_road_pose(vm: VectorMap, rng: np.random.Generator, max_tries: int = 1000) -> Pose3DoF:
    """Draw a pose on the road network (length-weighted) with random heading."""
    segs = []
    for road in vm.roads:
        pts = road.points
        for i in range(len(pts) - 1):
            segs.append((pts[i], pts[i + 1]))
    if not segs:
        raise OutOfCoverage("vector map has no roads to sample from")
    lengths = np.array([np.hypot(*(b - a)) for a, b in segs])
    weights = lengths / lengths.sum()
    bounds = vm.bounds()
    lo_e, lo_n, hi_e, hi_n = bounds

    for _ in range(max_tries):
        idx = int(rng.choice(len(segs), p=weights))
        a, b = segs[idx]
        t = float(rng.uniform(0.0, 1.0))
        p = a + t * (b - a)
        theta = float(rng.uniform(-math.pi, math.pi))
        if (
            lo_e + COVERAGE_MARGIN_M <= p[0] <= hi_e - COVERAGE_MARGIN_M
            and lo_n + COVERAGE_MARGIN_M <= p[1] <= hi_n - COVERAGE_MARGIN_M
        ):
            return Pose3DoF(float(p[0]), float(p[1]), theta)
    raise OutOfCoverage("could not draw an on-road pose satisfying the coverage margin")


def pose_errors(est: Pose3DoF, gt: Pose3DoF) -> tuple[float, float]:
    """(position error m, orientation error deg), wrap-aware."""
    ape = math.hypot(est.x_m - gt.x_m, est.y_m - gt.y_m)
    aoe = abs(math.degrees(angle_diff(est.theta_rad, gt.theta_rad)))
    return ape, aoe


@dataclass
class SampleResult:
    sample_id: int
    result: LocalizationResult
    gt: Pose3DoF
    prior: Pose3DoF

    @property
    def ape_m(self) -> float:
        return pose_errors(self.result.final_pose, self.gt)[0]

    @property
    def aoe_deg(self) -> float:
        return pose_errors(self.result.final_pose, self.gt)[1]

    def to_json_dict(self) -> dict:
        ape, aoe = pose_errors(self.result.final_pose, self.gt)
        return {
            "sample_id": self.sample_id,
            "pose_est": self.result.final_pose.as_dict(),
            "pose_gt": self.gt.as_dict(),
            "pose_prior": self.prior.as_dict(),
            "ape_m": ape,
            "aoe_deg": aoe,
            "trace": self.result.trace_json(),
            "flags": self.result.flags,
        }


def compute_metrics(results: list[SampleResult], config_hash: str = "") -> BenchmarkReport:
    """Recalls, APE/AOE aggregates, and per-iteration medians."""
    if not results:
        raise EmptyResults("no localization results to aggregate")
    apes = np.array([r.ape_m for r in results])
    aoes = np.array([r.aoe_deg for r in results])

    recall_pos = {t: float((apes < t).mean()) for t in POSITION_THRESHOLDS_M}
    recall_ori = {t: float((aoes < t).mean()) for t in ORIENTATION_THRESHOLDS_DEG}

    iters = max(len(r.result.trace) for r in results)
    per_iteration = []
    for k in range(iters):
        step_apes, step_aoes = [], []
        for r in results:
            if k < len(r.result.trace):
                a, o = pose_errors(r.result.trace[k].pose, r.gt)
                step_apes.append(a)
                step_aoes.append(o)
        per_iteration.append(
            {
                "iteration": k + 1,
                "ape_median_m": float(np.median(step_apes)),
                "ape_mean_m": float(np.mean(step_apes)),
                "aoe_median_deg": float(np.median(step_aoes)),
                "aoe_mean_deg": float(np.mean(step_aoes)),
                "recall_1m": float((np.array(step_apes) < 1.0).mean()),
            }
        )

    edges = [0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 80.0]
    counts, _ = np.histogram(apes, bins=edges)
    return BenchmarkReport(
        recall_position=recall_pos,
        recall_orientation=recall_ori,
        ape_mean_m=float(apes.mean()),
        ape_median_m=float(np.median(apes)),
        aoe_mean_deg=float(aoes.mean()),
        aoe_median_deg=float(np.median(aoes)),
        per_iteration=per_iteration,
        ape_histogram={"edges_m": edges, "counts": [int(c) for c in counts]},
        sample_count=len(results),
        config_hash=config_hash,
    )


@dataclass
class BenchmarkConfig:
    samples: int = 500
    seed: int = 0
    workers: int = 1
    noise: NoiseModel = field(default_factory=NoiseModel)
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    refiner: RefinerConfig = field(default_factory=RefinerConfig)

    def to_json_dict(self) -> dict:
        return {
            "samples": self.samples,
            "seed": self.seed,
            "workers": self.workers,
            "noise": self.noise.to_json_dict(),
            "degradation": self.degradation.to_json_dict(),
            "refiner": self.refiner.to_json_dict(),
            "bev": {"size_m": BEV_SIZE_M, "resolution_mpp": BEV_RESOLUTION_MPP},
            "map_patch": {"size_m": MAP_SIZE_M, "resolution_mpp": MAP_RESOLUTION_MPP},
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "BenchmarkConfig":
        noise_d = dict(d.get("noise", {}))
        noise_d.setdefault("seed", d.get("seed", 0))
        nm = NoiseModel(
            max_trans_m=noise_d.get("max_trans_m", 30.0),
            max_rot_deg=noise_d.get("max_rot_deg", 30.0),
            seed=noise_d.get("seed", 0),
        )
        deg_d = d.get("degradation", {})
        deg = DegradationSpec(**deg_d) if deg_d else DegradationSpec()
        ref = RefinerConfig.from_json_dict(d["refiner"]) if "refiner" in d else RefinerConfig()
        return cls(
            samples=d.get("samples", 500),
            seed=d.get("seed", 0),
            workers=d.get("workers", 1),
            noise=nm,
            degradation=deg,
            refiner=ref,
        )

    def content_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_json_dict(), sort_keys=True).encode()
        ).hexdigest()[:16]


def run_sample(vm: VectorMap, cfg: BenchmarkConfig, sample_id: int) -> SampleResult:
    """Generate and localize one benchmark sample (deterministic per id)."""
    rng = np.random.default_rng((cfg.seed, sample_id))
    gt = sample_road_pose(vm, rng)
    bev, map_patch, prior, gt = make_sample(vm, gt, cfg.noise, cfg.degradation, rng)
    h0 = homography_from_pose(prior, bev.spec, map_patch.spec)
    result = localize(bev, map_patch, h0, cfg.refiner)
    return SampleResult(sample_id=sample_id, result=result, gt=gt, prior=prior)


def _run_sample_star(args) -> SampleResult:
    return run_sample(*args)


def run_benchmark(
    vm: VectorMap,
    cfg: BenchmarkConfig,
    out_dir: str | Path | None = None,
    progress: bool = False,
) -> tuple[BenchmarkReport, list[SampleResult]]:
    """Run the full synthetic benchmark; optionally write results.jsonl etc."""
    t0 = time.time()
    tasks = [(vm, cfg, i) for i in range(cfg.samples)]
    results: list[SampleResult] = []
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for res in pool.map(_run_sample_star, tasks, chunksize=4):
                results.append(res)
                if progress and len(results) % 50 == 0:
                    print(f"  {len(results)}/{cfg.samples} samples, {time.time() - t0:.0f}s", flush=True)
    else:
        for task in tasks:
            results.append(_run_sample_star(task))
            if progress and len(results) % 50 == 0:
                print(f"  {len(results)}/{cfg.samples} samples, {time.time() - t0:.0f}s", flush=True)

    results.sort(key=lambda r: r.sample_id)
    report = compute_metrics(results, config_hash=cfg.content_hash())

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_results_jsonl(out_dir / "results.jsonl", results)
        from .report import emit_report

        emit_report(report, out_dir)
    return report, results


def write_results_jsonl(path: str | Path, results: list[SampleResult]) -> None:
    lines = [json.dumps(r.to_json_dict(), sort_keys=True) for r in results]
    Path(path).write_text("\n".join(lines) + "\n")
