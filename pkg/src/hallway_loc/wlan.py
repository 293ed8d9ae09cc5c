"""RSS fingerprint database and weighted-kNN coarse localization.

The coarse estimate gates the vision matcher: a floor-plan center plus a
search radius that never drops below the 10 m accuracy floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RSS_MIN = -120.0
RSS_MAX = 0.0
DEFAULT_MISSING_PENALTY = 15.0
DEFAULT_RADIUS_FLOOR = 10.0
DEFAULT_K = 4
_DEDUP_DIST = 0.1


class IngestError(ValueError):
    """Fingerprint ingestion failure, carrying the offending row number."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class Fingerprint:
    position: tuple[float, float]
    readings: dict[str, float]


@dataclass(frozen=True)
class RssScan:
    readings: dict[str, float]
    timestamp: str = ""

    def __post_init__(self):
        if not self.readings:
            raise ValueError("scan must carry at least one reading")
        for ap, rss in self.readings.items():
            if not RSS_MIN <= rss <= RSS_MAX:
                raise ValueError(f"RSS {rss} dBm for {ap} outside [{RSS_MIN}, {RSS_MAX}]")


@dataclass(frozen=True)
class CoarseEstimate:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")


@dataclass
class FingerprintDb:
    fingerprints: list[Fingerprint] = field(default_factory=list)

    @property
    def ap_universe(self) -> set[str]:
        aps: set[str] = set()
        for fp in self.fingerprints:
            aps.update(fp.readings)
        return aps

    def __len__(self) -> int:
        return len(self.fingerprints)


def ingest_fingerprints(rows: list[tuple[float, float, str, str | float]]) -> FingerprintDb:
    """Build a db from (x_m, y_m, ap_id, rss_dbm) rows.

    Rows within 0.1 m of an existing position collapse into one fingerprint
    with per-AP readings averaged.  Row numbers in errors are 1-based.
    """
    if not rows:
        raise IngestError("no fingerprint rows")
    positions: list[tuple[float, float]] = []
    acc: list[dict[str, list[float]]] = []
    for idx, row in enumerate(rows, start=1):
        try:
            x, y = float(row[0]), float(row[1])
        except (TypeError, ValueError, IndexError) as e:
            raise IngestError(f"missing or bad position: {e}", row=idx) from e
        try:
            ap = str(row[2])
            rss = float(row[3])
        except (TypeError, ValueError, IndexError) as e:
            raise IngestError(f"missing or bad AP reading: {e}", row=idx) from e
        if not RSS_MIN <= rss <= RSS_MAX:
            raise IngestError(
                f"RSS {rss} dBm outside [{RSS_MIN}, {RSS_MAX}]", row=idx
            )
        for j, (px, py) in enumerate(positions):
            if np.hypot(px - x, py - y) <= _DEDUP_DIST:
                acc[j].setdefault(ap, []).append(rss)
                break
        else:
            positions.append((x, y))
            acc.append({ap: [rss]})
    db = FingerprintDb()
    for pos, readings in zip(positions, acc):
        db.fingerprints.append(Fingerprint(
            position=pos,
            readings={ap: float(np.mean(v)) for ap, v in readings.items()},
        ))
    return db


def signal_distance(scan: RssScan, fp: Fingerprint,
                    missing_penalty: float = DEFAULT_MISSING_PENALTY) -> float:
    """RMS RSS difference over the union of AP ids, in dB.

    An AP seen on only one side contributes missing_penalty; symmetric.
    """
    aps = set(scan.readings) | set(fp.readings)
    sq = 0.0
    for ap in aps:
        a = scan.readings.get(ap)
        b = fp.readings.get(ap)
        d = missing_penalty if a is None or b is None else a - b
        sq += d * d
    return float(np.sqrt(sq / len(aps)))


def knn_locate(scan: RssScan, db: FingerprintDb, k: int = DEFAULT_K,
               missing_penalty: float = DEFAULT_MISSING_PENALTY,
               radius_floor: float = DEFAULT_RADIUS_FLOOR) -> CoarseEstimate:
    """Weighted k-nearest-fingerprints position with dispersion-grown radius.

    Weight 1/(distance + 1 dB); radius = max(radius_floor, 2x the weighted
    std of the selected positions about the center).  Distance ties break by
    fingerprint insertion order.
    """
    if not db.fingerprints:
        raise ValueError("empty fingerprint database")
    if k < 1:
        raise ValueError("k must be >= 1")
    dists = np.array([signal_distance(scan, fp, missing_penalty)
                      for fp in db.fingerprints])
    order = np.argsort(dists, kind="stable")[: min(k, len(dists))]
    pos = np.array([db.fingerprints[i].position for i in order])
    w = 1.0 / (dists[order] + 1.0)
    center = (pos * w[:, None]).sum(axis=0) / w.sum()
    spread = np.sqrt((w * ((pos - center) ** 2).sum(axis=1)).sum() / w.sum())
    return CoarseEstimate(center=(float(center[0]), float(center[1])),
                          radius=float(max(radius_floor, 2.0 * spread)))
