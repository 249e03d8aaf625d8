#!/usr/bin/env python3
"""Generate the bundled 500 m x 500 m OSM test extract (deterministic, seeded).

Writes tests/data/extract.osm: an irregular street grid with jittered
spacings, rotated rectangular and L-shaped buildings, one multipolygon
building relation whose outer ring is split across two member ways, and
distractor elements (waterway/landuse/leisure/barrier) that the parser must
discard. Coordinates are WGS84 around a Boston-ish origin; ENU placement is
inverted through the local tangent plane (sub-mm at this extent).
"""

import math
from pathlib import Path

import numpy as np

LAT0, LON0 = 42.3365, -71.0578
A = 6378137.0
F = 1.0 / 298.257223563
E2 = F * (2.0 - F)


def enu_to_latlon(e: float, n: float) -> tuple[float, float]:
    lat = math.radians(LAT0)
    m = A * (1 - E2) / (1 - E2 * math.sin(lat) ** 2) ** 1.5
    nn = A / math.sqrt(1 - E2 * math.sin(lat) ** 2)
    return (
        LAT0 + math.degrees(n / m),
        LON0 + math.degrees(e / (nn * math.cos(lat))),
    )


class OsmWriter:
    def __init__(self):
        self.node_id = 1000000000
        self.way_id = 200000000
        self.rel_id = 300000000
        self.nodes: list[str] = []
        self.ways: list[str] = []
        self.rels: list[str] = []

    def add_node(self, e: float, n: float) -> int:
        self.node_id += 1
        lat, lon = enu_to_latlon(e, n)
        self.nodes.append(
            f'  <node id="{self.node_id}" version="1" lat="{lat:.9f}" lon="{lon:.9f}"/>'
        )
        return self.node_id

    def add_way(self, points, tags: dict) -> int:
        self.way_id += 1
        refs = [self.add_node(e, n) for e, n in points]
        body = "".join(f'\n    <nd ref="{r}"/>' for r in refs)
        body += "".join(f'\n    <tag k="{k}" v="{v}"/>' for k, v in tags.items())
        self.ways.append(f'  <way id="{self.way_id}" version="1">{body}\n  </way>')
        return self.way_id

    def add_relation(self, members, tags: dict) -> int:
        self.rel_id += 1
        body = "".join(
            f'\n    <member type="way" ref="{r}" role="{role}"/>' for r, role in members
        )
        body += "".join(f'\n    <tag k="{k}" v="{v}"/>' for k, v in tags.items())
        self.rels.append(f'  <relation id="{self.rel_id}" version="1">{body}\n  </relation>')
        return self.rel_id

    def dump(self) -> str:
        minlat, minlon = enu_to_latlon(-250, -250)
        maxlat, maxlon = enu_to_latlon(250, 250)
        parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            '<osm version="0.6" generator="bevloc-extract">',
            f'  <bounds minlat="{minlat:.9f}" minlon="{minlon:.9f}" '
            f'maxlat="{maxlat:.9f}" maxlon="{maxlon:.9f}"/>',
            *self.nodes,
            *self.ways,
            *self.rels,
            "</osm>",
        ]
        return "\n".join(parts) + "\n"


def rect(cx, cy, w, h, angle):
    c, s = math.cos(angle), math.sin(angle)
    pts = []
    for dx, dy in [(-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)]:
        pts.append((cx + c * dx - s * dy, cy + s * dx + c * dy))
    return pts + [pts[0]]


def lshape(cx, cy, w, h, angle):
    c, s = math.cos(angle), math.sin(angle)
    raw = [
        (-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, 0.0),
        (0.0, 0.0), (0.0, h / 2), (-w / 2, h / 2),
    ]
    pts = [(cx + c * dx - s * dy, cy + s * dx + c * dy) for dx, dy in raw]
    return pts + [pts[0]]


def main():
    rng = np.random.default_rng(20240817)
    w = OsmWriter()
    highway_types = ["residential", "secondary", "tertiary", "primary", "unclassified"]

    # east-west arterials with jittered spacing and gentle wiggle
    ew_norths = []
    n = -210.0 + rng.uniform(0, 20)
    while n < 215.0:
        ew_norths.append(n)
        n += rng.uniform(52, 88)
    for base_n in ew_norths:
        es = np.linspace(-245, 245, int(rng.integers(4, 7)))
        pts = [(float(e), float(base_n + rng.uniform(-6, 6))) for e in es]
        lanes = int(rng.integers(1, 5))
        tags = {"highway": str(rng.choice(highway_types)), "name": f"EW {int(base_n)}"}
        if lanes != 2:
            tags["lanes"] = str(lanes)
        w.add_way(pts, tags)

    # north-south streets
    ns_easts = []
    e = -215.0 + rng.uniform(0, 20)
    while e < 215.0:
        ns_easts.append(e)
        e += rng.uniform(48, 92)
    for base_e in ns_easts:
        ns = np.linspace(-245, 245, int(rng.integers(4, 7)))
        pts = [(float(base_e + rng.uniform(-6, 6)), float(n)) for n in ns]
        lanes = int(rng.integers(1, 4))
        tags = {"highway": str(rng.choice(highway_types)), "name": f"NS {int(base_e)}"}
        if lanes != 2:
            tags["lanes"] = str(lanes)
        w.add_way(pts, tags)

    # two diagonal connectors
    w.add_way(
        [(-240.0, -200.0), (-90.0, -60.0), (40.0, 55.0), (190.0, 205.0)],
        {"highway": "secondary", "lanes": "3", "name": "Diag NE"},
    )
    w.add_way(
        [(-230.0, 180.0), (-40.0, 30.0), (120.0, -110.0), (235.0, -215.0)],
        {"highway": "tertiary", "name": "Diag SE"},
    )

    # buildings scattered irregularly in the blocks between roads
    n_buildings = 0
    for _ in range(900):
        cx = float(rng.uniform(-235, 235))
        cy = float(rng.uniform(-235, 235))
        near_road = min(
            min(abs(cy - rn) for rn in ew_norths),
            min(abs(cx - re) for re in ns_easts),
        )
        if near_road < 13.0:
            continue
        ww = float(rng.uniform(10, 38))
        hh = float(rng.uniform(8, 30))
        ang = float(rng.uniform(-0.4, 0.4)) + (0.0 if rng.random() < 0.65 else math.pi / 4)
        shape = lshape if rng.random() < 0.3 else rect
        tags = {"building": str(rng.choice(["yes", "house", "apartments", "commercial"]))}
        if rng.random() < 0.3:
            tags["building:levels"] = str(int(rng.integers(1, 9)))
        w.add_way(shape(cx, cy, ww, hh, ang), tags)
        n_buildings += 1
        if n_buildings >= 260:
            break

    # one multipolygon building: outer ring split across two untagged member ways
    ring = rect(105.0, -140.0, 46.0, 34.0, 0.18)
    half_a = w.add_way(ring[:3], {})
    half_b = w.add_way(ring[2:], {})
    w.add_relation(
        [(half_a, "outer"), (half_b, "outer")],
        {"type": "multipolygon", "building": "industrial"},
    )

    # distractors the parser must drop
    w.add_way([(-240, -30), (-140, 10), (-20, -20), (90, 25), (230, -5)], {"waterway": "stream"})
    w.add_way([(-60, 220), (30, 235), (110, 210)], {"waterway": "ditch"})
    w.add_way(rect(-160.0, 150.0, 70.0, 50.0, 0.0), {"landuse": "grass"})
    w.add_way(rect(170.0, 120.0, 60.0, 45.0, 0.1), {"leisure": "park"})
    w.add_way([(60.0, 60.0), (95.0, 62.0), (130.0, 58.0)], {"barrier": "fence"})
    for _ in range(5):
        w.add_node(float(rng.uniform(-200, 200)), float(rng.uniform(-200, 200)))

    out = Path(__file__).resolve().parents[1] / "tests" / "data" / "extract.osm"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(w.dump())
    print(f"wrote {out}")
    print(f"ew roads={len(ew_norths)} ns roads={len(ns_easts)} diagonals=2 buildings={n_buildings} (+1 relation)")


if __name__ == "__main__":
    main()
