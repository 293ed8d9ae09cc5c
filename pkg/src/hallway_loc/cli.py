"""Command-line front end and the single-endpoint localization service.

Exit codes for `locate`: 0 ok, 2 degraded, 1 input error.  The service
speaks HTTP/1.1, POST /locate with a JSON body {image_ppm_b64, scan, seed};
pipeline degradation is a 200 with a degraded status, never an HTTP error.
"""

from __future__ import annotations

import argparse
import base64
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import corners as corners_mod
from . import fuse, illum, segment, synth
from .config import Config, ConfigError
from .geometry import Pose2D
from .image import PixelCoord, RgbImage, annotate, decode_ppm, encode_ppm
from .wlan import IngestError, RssScan, ingest_fingerprints, knn_locate

log = logging.getLogger("hallway_loc")

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_DEGRADED = 2


class InputError(RuntimeError):
    pass


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e


def _load_image(path: str) -> RgbImage:
    try:
        return decode_ppm(_read_bytes(path))
    except ValueError as e:
        raise InputError(f"{path}: {e}") from e


def _load_scan(path: str) -> RssScan:
    readings = {}
    try:
        with open(path, encoding="utf-8") as f:
            reader = csv.DictReader(f)
            for row in reader:
                readings[row["ap_id"]] = float(row["rss_dbm"])
        return RssScan(readings=readings)
    except (OSError, KeyError, ValueError) as e:
        raise InputError(f"{path}: bad scan file: {e}") from e


def _load_db(path: str):
    try:
        rows = []
        with open(path, encoding="utf-8") as f:
            for row in csv.DictReader(f):
                rows.append((row["x_m"], row["y_m"], row["ap_id"], row["rss_dbm"]))
        return ingest_fingerprints(rows)
    except (OSError, KeyError, IngestError) as e:
        raise InputError(f"{path}: bad fingerprint file: {e}") from e


def _load_plan(path: str) -> fuse.FloorPlan:
    try:
        return fuse.FloorPlan.from_json(_read_bytes(path).decode("utf-8"))
    except (ValueError, KeyError) as e:
        raise InputError(f"{path}: bad floor plan: {e}") from e


def result_document(result: fuse.LocalizationResult, include_timings: bool = False) -> str:
    """Serialize a result with a fixed field order so outputs are stable."""
    doc = {
        "status": result.status,
        "pose": {
            "x_m": result.pose.x,
            "y_m": result.pose.y,
            "theta_rad": result.pose.theta,
        },
        "heading_valid": result.heading_valid,
        "inliers": result.inliers,
        "rms_m": result.rms if np.isfinite(result.rms) else None,
        "iterations": result.iterations,
        "coarse": {
            "x_m": result.coarse.center[0],
            "y_m": result.coarse.center[1],
            "radius_m": result.coarse.radius,
        },
        "counts": {
            k: result.diagnostics.get(k)
            for k in ("regions", "corners", "micro_corners", "ground_points",
                      "candidates")
        },
    }
    if include_timings:
        doc["timings"] = result.diagnostics.get("timings", {})
    return json.dumps(doc, indent=2) + "\n"


def _run_locate_pipeline(img: RgbImage, scan: RssScan | None, db, plan,
                         cfg: Config, seed: int | None = None) -> fuse.LocalizationResult:
    ransac_cfg = cfg.ransac if seed is None else replace(cfg.ransac, seed=seed)
    return fuse.locate(
        img, scan, db, plan, cfg.camera.model(), ransac_cfg,
        wlan_cfg=cfg.wlan.kwargs(),
        seg_cfg=cfg.segmentation.filter_kwargs(),
        corner_cfg=cfg.corners.kwargs(),
    )


def cmd_locate(args) -> int:
    cfg = Config.load(args.config) if args.config else Config()
    img = _load_image(args.image)
    plan = _load_plan(args.plan or cfg.paths.plan)
    db = scan = None
    if args.fingerprints or cfg.paths.fingerprints:
        db = _load_db(args.fingerprints or cfg.paths.fingerprints)
    if args.scan:
        scan = _load_scan(args.scan)
    result = _run_locate_pipeline(img, scan, db, plan, cfg, args.seed)
    doc = result_document(result, include_timings=args.timings)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as f:
            f.write(doc)
    sys.stdout.write(doc)
    return EXIT_OK if result.status == fuse.STATUS_OK else EXIT_DEGRADED


def _vision_features(img: RgbImage, cfg: Config):
    est = illum.estimate_illuminant(img)
    return illum.normalize_illumination(img, est)


def cmd_stage(args) -> int:
    cfg = Config.load(args.config) if args.config else Config()
    out = args.output or f"{args.stage}_out"
    if args.stage == "knn":
        db = _load_db(args.fingerprints or cfg.paths.fingerprints)
        scan = _load_scan(args.scan)
        est = knn_locate(scan, db, **cfg.wlan.kwargs())
        doc = json.dumps({"x_m": est.center[0], "y_m": est.center[1],
                          "radius_m": est.radius}, indent=2) + "\n"
        sys.stdout.write(doc)
        return EXIT_OK

    img = _load_image(args.image)
    if args.stage == "iic-dump":
        with open(out + ".csv", "w", encoding="utf-8") as f:
            f.write("x,y\n")
            for x, y in illum.iic_project(img, args.channel):
                f.write(f"{x},{y}\n")
        return EXIT_OK

    features = _vision_features(img, cfg)
    filtered = segment.mean_shift_filter(features, **{
        k: v for k, v in cfg.segmentation.filter_kwargs().items()
        if k != "min_region_size"})
    seg = segment.label_segments(filtered, h_r=cfg.segmentation.h_r,
                                 min_region_size=cfg.segmentation.min_region_size)
    if args.stage == "segment":
        with open(out + ".ppm", "wb") as f:
            f.write(encode_ppm(segment.label_palette_image(seg)))
        print(f"{seg.region_count} regions -> {out}.ppm")
        return EXIT_OK
    if args.stage == "detect-corners":
        contours = segment.extract_boundaries(seg)
        detected = corners_mod.detect_corners(
            contours, image_size=(img.width, img.height), **cfg.corners.kwargs())
        with open(out + ".csv", "w", encoding="utf-8") as f:
            f.write("u,v,score,contour\n")
            for c in detected:
                f.write(f"{c.coord.u},{c.coord.v},{c.cornerity:.6f},{c.contour_id}\n")
        overlay = annotate(img, [c.coord for c in detected])
        with open(out + ".ppm", "wb") as f:
            f.write(encode_ppm(overlay))
        print(f"{len(detected)} corners -> {out}.csv, {out}.ppm")
        return EXIT_OK
    raise InputError(f"unknown stage {args.stage!r}")


def cmd_synth(args) -> int:
    pose = Pose2D(x=args.x, y=args.y, theta=args.theta)
    spec = synth.make_testbed_scene(pose, seed=args.seed)
    if args.preset:
        spec = synth.preset_defects(args.preset, spec)
    cfg = Config.load(args.config) if args.config else Config()
    img, truth = synth.render_hallway(spec, cfg.camera.model())
    prefix = args.output
    with open(prefix + ".ppm", "wb") as f:
        f.write(encode_ppm(img))
    with open(prefix + "_truth.csv", "w", encoding="utf-8") as f:
        f.write("u,v,floor,landmark_id,x_m,y_m\n")
        for c in truth.corners:
            f.write(f"{c.u:.3f},{c.v:.3f},{int(c.floor)},{c.landmark_id},"
                    f"{c.ground[0]:.4f},{c.ground[1]:.4f}\n")
    with open(prefix + "_plan.json", "w", encoding="utf-8") as f:
        f.write(synth.make_testbed_plan().to_json())
    print(f"wrote {prefix}.ppm, {prefix}_truth.csv, {prefix}_plan.json")
    return EXIT_OK


class _LocateHandler(BaseHTTPRequestHandler):
    server_version = "hallway-loc/0.1"
    context: dict = {}

    def log_message(self, fmt, *args):
        log.debug("service: " + fmt, *args)

    def _reply(self, code: int, body: str):
        payload = body.encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_POST(self):
        if self.path != "/locate":
            self._reply(404, json.dumps({"error": "unknown endpoint"}) + "\n")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            if not raw:
                raise ValueError("empty body")
            doc = json.loads(raw)
            img = decode_ppm(base64.b64decode(doc["image_ppm_b64"]))
            scan = None
            if doc.get("scan"):
                scan = RssScan(readings={e["ap"]: float(e["rss"])
                                         for e in doc["scan"]})
            seed = doc.get("seed")
        except (KeyError, ValueError, TypeError) as e:
            self._reply(400, json.dumps({"error": str(e)}) + "\n")
            return
        ctx = self.context
        result = _run_locate_pipeline(img, scan, ctx["db"], ctx["plan"],
                                      ctx["cfg"], seed)
        self._reply(200, result_document(result))


def make_server(cfg: Config, plan, db, port: int = 0) -> ThreadingHTTPServer:
    handler = type("Handler", (_LocateHandler,),
                   {"context": {"cfg": cfg, "plan": plan, "db": db}})
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def cmd_serve(args) -> int:
    cfg = Config.load(args.config) if args.config else Config()
    plan = _load_plan(args.plan or cfg.paths.plan)
    db = None
    if args.fingerprints or cfg.paths.fingerprints:
        db = _load_db(args.fingerprints or cfg.paths.fingerprints)
    server = make_server(cfg, plan, db, args.port)
    print(f"listening on 127.0.0.1:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hallway-loc",
                                description="Hybrid WLAN/camera hallway localization")
    p.add_argument("--config", help="path to JSON config")
    sub = p.add_subparsers(dest="command", required=True)

    loc = sub.add_parser("locate", help="run the full pipeline on one bundle")
    loc.add_argument("--image", required=True)
    loc.add_argument("--scan")
    loc.add_argument("--plan")
    loc.add_argument("--fingerprints")
    loc.add_argument("--seed", type=int)
    loc.add_argument("--output")
    loc.add_argument("--timings", action="store_true",
                     help="include wall-clock stage timings in the document")
    loc.set_defaults(func=cmd_locate)

    for stage in ("segment", "detect-corners", "iic-dump", "knn"):
        sp = sub.add_parser(stage, help=f"run the {stage} stage only")
        sp.add_argument("--image")
        sp.add_argument("--scan")
        sp.add_argument("--fingerprints")
        sp.add_argument("--channel", default="r", choices=("r", "g", "b"))
        sp.add_argument("--output")
        sp.set_defaults(func=cmd_stage, stage=stage)

    sy = sub.add_parser("synth", help="render a synthetic testbed bundle")
    sy.add_argument("--x", type=float, default=5.0)
    sy.add_argument("--y", type=float, default=synth.TESTBED_CENTER_Y)
    sy.add_argument("--theta", type=float, default=0.0)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--preset", choices=synth.PRESET_NAMES)
    sy.add_argument("--output", default="scene")
    sy.set_defaults(func=cmd_synth)

    sv = sub.add_parser("serve", help="run the localization service")
    sv.add_argument("--port", type=int, default=8080)
    sv.add_argument("--plan")
    sv.add_argument("--fingerprints")
    sv.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HALLWAY_LOC_LOG", "WARNING"))
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
