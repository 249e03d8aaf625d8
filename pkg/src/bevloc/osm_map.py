"""OpenStreetMap XML ingestion and binary rasterization.

Only the two retained semantic classes survive parsing: ways tagged
`highway=*` become road polylines, ways/relations tagged `building=*`
become building polygons. Everything else in the extract is discarded.

Rasterization is a binary pixel-center coverage test (no anti-aliasing):
buildings are scanline-filled, roads are stroked as capsules of metric
width lanes * 3.5 m. The predicate is exactly "pixel center within the
shape", so a brute-force per-pixel oracle reproduces grids bit for bit.
"""

from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .errors import DanglingNodeRef, MalformedXml
from .geodesy import EnuFrame, GeodeticPoint, wgs84_to_local
from .grids import CHANNEL_BUILDING, CHANNEL_ROAD, GridSpec, RasterGrid
from .pose import Pose3DoF

log = logging.getLogger(__name__)

LANE_WIDTH_M = 3.5
DEFAULT_LANES = 2


@dataclass
class Road:
    points: np.ndarray  # (N, 2) east/north meters, N >= 2
    lanes: int = DEFAULT_LANES

    @property
    def width_m(self) -> float:
        return max(1, self.lanes) * LANE_WIDTH_M


@dataclass
class Building:
    points: np.ndarray  # (M, 2) closed ring: first == last, >= 3 distinct


@dataclass
class VectorMap:
    roads: list[Road] = field(default_factory=list)
    buildings: list[Building] = field(default_factory=list)
    frame: EnuFrame | None = None

    def bounds(self) -> tuple[float, float, float, float] | None:
        """(min_e, min_n, max_e, max_n) over all vertices, or None if empty."""
        pts = [r.points for r in self.roads] + [b.points for b in self.buildings]
        if not pts:
            return None
        allp = np.vstack(pts)
        return (
            float(allp[:, 0].min()),
            float(allp[:, 1].min()),
            float(allp[:, 0].max()),
            float(allp[:, 1].max()),
        )

    def to_json_dict(self) -> dict:
        return {
            "frame": (self.frame or EnuFrame(GeodeticPoint(0.0, 0.0, 0.0))).to_json_dict(),
            "roads": [
                {"points": r.points.tolist(), "lanes": r.lanes} for r in self.roads
            ],
            "buildings": [{"points": b.points.tolist()} for b in self.buildings],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "VectorMap":
        return cls(
            roads=[
                Road(np.asarray(r["points"], dtype=np.float64), int(r.get("lanes", DEFAULT_LANES)))
                for r in d["roads"]
            ],
            buildings=[Building(np.asarray(b["points"], dtype=np.float64)) for b in d["buildings"]],
            frame=EnuFrame.from_json_dict(d["frame"]),
        )


def _byte_offset(data: bytes, line: int, column: int) -> int:
    lines = data.split(b"\n")
    return sum(len(l) + 1 for l in lines[: line - 1]) + column


def _parse_lanes(tags: dict) -> int:
    raw = tags.get("lanes")
    if raw is None:
        return DEFAULT_LANES
    try:
        return max(1, int(float(raw)))
    except ValueError:
        return DEFAULT_LANES


def _dedup(points: np.ndarray) -> np.ndarray:
    if len(points) < 2:
        return points
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.any(points[1:] != points[:-1], axis=1)
    return points[keep]


def _close_ring(points: np.ndarray) -> np.ndarray | None:
    """Return a closed ring with >= 3 distinct vertices, or None if degenerate."""
    pts = _dedup(points)
    if len(pts) >= 2 and np.array_equal(pts[0], pts[-1]):
        pts = pts[:-1]
    if len(pts) < 3:
        return None
    return np.vstack([pts, pts[:1]])


def parse_osm_xml(data: bytes, frame: EnuFrame) -> VectorMap:
    """Parse an OSM XML extract into ENU-meter vector primitives.

    Raises MalformedXml on unparseable input and DanglingNodeRef when a way
    references a node id missing from the extract.
    """
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, col = exc.position
        off = _byte_offset(data, line, col)
        raise MalformedXml(f"unparseable OSM XML at byte offset {off}: {exc}", off) from exc

    nodes: dict[str, np.ndarray] = {}
    for el in root.iter("node"):
        p = GeodeticPoint(float(el.get("lat")), float(el.get("lon")), 0.0)
        enu = wgs84_to_local(p, frame)
        nodes[el.get("id")] = np.array([enu.east_m, enu.north_m])

    ways: dict[str, tuple[list[str], dict]] = {}
    for el in root.iter("way"):
        refs = [nd.get("ref") for nd in el.findall("nd")]
        tags = {t.get("k"): t.get("v") for t in el.findall("tag")}
        ways[el.get("id")] = (refs, tags)

    def way_points(way_id: str, refs: list[str]) -> np.ndarray:
        pts = []
        for ref in refs:
            if ref not in nodes:
                raise DanglingNodeRef(f"way {way_id} references missing node {ref}")
            pts.append(nodes[ref])
        return np.array(pts, dtype=np.float64).reshape(-1, 2)

    vm = VectorMap(frame=frame)
    for way_id, (refs, tags) in ways.items():
        if "highway" in tags:
            pts = _dedup(way_points(way_id, refs))
            if len(pts) >= 2:
                vm.roads.append(Road(pts, _parse_lanes(tags)))
        if "building" in tags:
            ring = _close_ring(way_points(way_id, refs))
            if ring is None:
                log.warning("building way %s degenerate, skipped", way_id)
            else:
                vm.buildings.append(Building(ring))

    for el in root.iter("relation"):
        tags = {t.get("k"): t.get("v") for t in el.findall("tag")}
        if "building" not in tags:
            continue
        outer_ids = [
            m.get("ref")
            for m in el.findall("member")
            if m.get("type") == "way" and m.get("role") in ("outer", "", None)
        ]
        for ring in _stitch_rings(el.get("id"), outer_ids, ways, way_points):
            vm.buildings.append(Building(ring))

    return vm


def _stitch_rings(rel_id, member_ids, ways, way_points) -> list[np.ndarray]:
    """Assemble closed outer rings from relation member ways (inner rings ignored)."""
    segments = []
    for wid in member_ids:
        if wid not in ways:
            log.warning("relation %s references missing way %s, skipped", rel_id, wid)
            continue
        pts = _dedup(way_points(wid, ways[wid][0]))
        if len(pts) >= 2:
            segments.append(pts)

    rings, used = [], [False] * len(segments)
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        chain = segments[start]
        while not np.array_equal(chain[0], chain[-1]):
            extended = False
            for j, seg in enumerate(segments):
                if used[j]:
                    continue
                if np.array_equal(seg[0], chain[-1]):
                    chain = np.vstack([chain, seg[1:]])
                elif np.array_equal(seg[-1], chain[-1]):
                    chain = np.vstack([chain, seg[::-1][1:]])
                else:
                    continue
                used[j] = True
                extended = True
                break
            if not extended:
                log.warning("relation %s: open ring could not be closed, skipped", rel_id)
                chain = None
                break
        if chain is not None:
            ring = _close_ring(chain)
            if ring is not None:
                rings.append(ring)
    return rings


def _fill_polygon(plane: np.ndarray, poly_uv: np.ndarray) -> None:
    """Scanline even-odd fill of a closed ring given in pixel coordinates.

    A pixel center (u=j, v=i) is covered when the half-open crossing rule
    admits it: edges are active for ylo <= i < yhi and a row's sorted
    crossing pair [xL, xR) covers columns ceil(xL) .. ceil(xR)-1.
    """
    h, w = plane.shape
    x1, y1 = poly_uv[:-1, 0], poly_uv[:-1, 1]
    x2, y2 = poly_uv[1:, 0], poly_uv[1:, 1]
    keep = y1 != y2
    if not keep.any():
        return
    x1, y1, x2, y2 = x1[keep], y1[keep], x2[keep], y2[keep]

    lo = max(0, int(math.ceil(min(y1.min(), y2.min()))))
    hi = min(h - 1, int(math.floor(max(y1.max(), y2.max()))))
    if lo > hi:
        return
    rows = np.arange(lo, hi + 1, dtype=np.float64)

    ylo, yhi = np.minimum(y1, y2), np.maximum(y1, y2)
    active = (rows[:, None] >= ylo[None, :]) & (rows[:, None] < yhi[None, :])
    with np.errstate(invalid="ignore"):
        t = (rows[:, None] - y1[None, :]) / (y2 - y1)[None, :]
    xc = np.where(active, x1[None, :] + t * (x2 - x1)[None, :], np.inf)
    xc.sort(axis=1)

    n_rows = len(rows)
    diff = np.zeros((n_rows, w + 1), dtype=np.int32)
    row_idx = np.arange(n_rows)
    for k in range(0, xc.shape[1] - 1, 2):
        xl, xr = xc[:, k], xc[:, k + 1]
        valid = np.isfinite(xr)
        if not valid.any():
            break
        jl = np.clip(np.ceil(xl[valid]), 0, w).astype(np.int64)
        jr = np.clip(np.ceil(xr[valid]), 0, w).astype(np.int64)
        r = row_idx[valid]
        np.add.at(diff, (r, jl), 1)
        np.add.at(diff, (r, jr), -1)
    covered = np.cumsum(diff[:, :-1], axis=1) > 0
    plane[lo : hi + 1][covered] = 1.0


def _stroke_segment(plane: np.ndarray, a: np.ndarray, b: np.ndarray, half_width_px: float) -> None:
    """Mark pixel centers within half_width_px of segment ab (capsule test)."""
    h, w = plane.shape
    lo_u = max(0, int(math.floor(min(a[0], b[0]) - half_width_px)) )
    hi_u = min(w - 1, int(math.ceil(max(a[0], b[0]) + half_width_px)))
    lo_v = max(0, int(math.floor(min(a[1], b[1]) - half_width_px)))
    hi_v = min(h - 1, int(math.ceil(max(a[1], b[1]) + half_width_px)))
    if lo_u > hi_u or lo_v > hi_v:
        return
    us = np.arange(lo_u, hi_u + 1, dtype=np.float64)[None, :]
    vs = np.arange(lo_v, hi_v + 1, dtype=np.float64)[:, None]
    du, dv = b[0] - a[0], b[1] - a[1]
    seg_len2 = du * du + dv * dv
    if seg_len2 == 0.0:
        d2 = (us - a[0]) ** 2 + (vs - a[1]) ** 2
    else:
        t = np.clip(((us - a[0]) * du + (vs - a[1]) * dv) / seg_len2, 0.0, 1.0)
        d2 = (us - (a[0] + t * du)) ** 2 + (vs - (a[1] + t * dv)) ** 2
    hit = d2 <= half_width_px * half_width_px
    sub = plane[lo_v : hi_v + 1, lo_u : hi_u + 1]
    sub[hit] = 1.0


def rasterize(vm: VectorMap, spec: GridSpec) -> RasterGrid:
    """Render the vector map into a 2-channel binary grid for `spec`.

    Polygons whose projected area is under one pixel are skipped (counted in
    a warning, not fatal). Deterministic: identical input gives a
    bit-identical grid.
    """
    channels = np.zeros((2, spec.height_px, spec.width_px), dtype=np.float32)
    skipped = 0

    for b in vm.buildings:
        uv = spec.metric_to_pixel(b.points)
        area_px = 0.5 * abs(
            float(np.sum(uv[:-1, 0] * uv[1:, 1] - uv[1:, 0] * uv[:-1, 1]))
        )
        if area_px < 1.0:
            skipped += 1
            continue
        _fill_polygon(channels[CHANNEL_BUILDING], uv)

    for r in vm.roads:
        uv = spec.metric_to_pixel(r.points)
        hw_px = (r.width_m / 2.0) / spec.resolution_mpp
        for i in range(len(uv) - 1):
            _stroke_segment(channels[CHANNEL_ROAD], uv[i], uv[i + 1], hw_px)

    if skipped:
        log.warning("rasterize: skipped %d sub-pixel polygons", skipped)
    return RasterGrid(spec, channels)


def crop_patch(vm: VectorMap, center: Pose3DoF, size_m: float, resolution_mpp: float) -> RasterGrid:
    """Rasterize a square patch of side size_m centered and oriented at `center`."""
    if size_m <= 0:
        raise ValueError("patch size must be positive")
    px = int(round(size_m / resolution_mpp))
    return rasterize(vm, GridSpec(px, px, resolution_mpp, center))
