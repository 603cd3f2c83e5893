"""``vcbench`` command-line entry point.

Exit codes: 0 success, 2 input error, 3 analysis error.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys

from . import audio as aq
from .endpoints import classify_topology, discover_endpoints
from .errors import AnalysisError, InputError
from .lag import OnsetDetectorConfig, lag_distribution, measure_lag
from .rate import payload_rate, rate_summary
from .report import aggregate, emit_cdf, stamp
from .simulator import SimConfig, simulate
from .trace import INBOUND, OUTBOUND, parse_capture
from .video import PreprocessSpec, align_temporal, detect_padding, preprocess, read_video, sequence_score
from .video.quality import trim_to_offset

log = logging.getLogger("vcbench")

EXIT_INPUT = 2
EXIT_ANALYSIS = 3
DIRECTION_ALIASES = {"up": OUTBOUND, "down": INBOUND, OUTBOUND: OUTBOUND, INBOUND: INBOUND}


def _read_trace(path, local_addr=None):
    with open(path, "rb") as fh:
        return parse_capture(fh.read(), local_addr=local_addr)


def _session(args) -> dict | None:
    meta = {k: getattr(args, k) for k in ("session_id", "platform", "n", "scenario") if getattr(args, k, None) is not None}
    return meta or None


def _write_json(path, doc: dict):
    text = json.dumps(stamp(doc), indent=2, sort_keys=True)
    if path in (None, "-"):
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _pair(text: str, sep: str, n: int, name: str):
    try:
        parts = [int(p) for p in text.lower().split(sep)]
    except ValueError:
        parts = []
    if len(parts) != n:
        raise InputError(f"bad {name} {text!r}")
    return parts


# --- commands ---------------------------------------------------------------

def cmd_lag(args):
    cfg = OnsetDetectorConfig(args.threshold, args.quiescence, args.period)
    pairing = measure_lag(_read_trace(args.sender, args.sender_addr), _read_trace(args.receiver, args.receiver_addr),
                          cfg, receiver_offset=args.offset_receiver)
    dist = lag_distribution(pairing.samples)
    ms = [s.lag_us / 1000 for s in pairing.samples]
    median = dist.median * 1000
    _write_json(args.out, {
        "kind": "lag",
        "session": _session(args),
        "samples": ms,
        "median_ms": median,
        "p10_ms": dist.percentile(10) * 1000,
        "p90_ms": dist.percentile(90) * 1000,
        "unmatched_sender": pairing.unmatched_sender,
        "unmatched_receiver": pairing.unmatched_receiver,
        "metrics": {"lag_median_ms": median, "lag_count": len(ms)},
    })


def cmd_endpoints(args):
    trace = _read_trace(args.trace, args.local_addr)
    found = discover_endpoints(trace, args.min_packets)
    _write_json(args.out, {
        "kind": "endpoints",
        "session": _session(args),
        "local_addr": trace.local_addr,
        "endpoints": [e.to_dict() for e in found],
        "metrics": {"endpoint_count": len(found)},
    })


def cmd_topology(args):
    with open(args.roster) as fh:
        roster = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    traces = []
    for path in args.traces:
        with open(path, "rb") as fh:
            data = fh.read()
        trace = parse_capture(data)
        if trace.local_addr not in roster:
            # fall back to the roster member that appears in the capture
            seen = {r.src_addr for r in trace.records} | {r.dst_addr for r in trace.records}
            match = [a for a in roster if a in seen]
            if len(match) == 1:
                trace = parse_capture(data, local_addr=match[0])
        traces.append((None, trace))
    model = classify_topology(traces, roster)
    _write_json(args.out, {"kind": "topology", "session": _session(args), **model.to_dict()})


def cmd_rate(args):
    direction = DIRECTION_ALIASES.get(args.direction)
    if direction is None:
        raise InputError(f"unknown direction {args.direction!r}")
    series = payload_rate(_read_trace(args.trace, args.local_addr), direction, args.bin)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["start_s", "bps"])
        for start, bps in series.bins:
            w.writerow([f"{start:.6f}", repr(bps)])
    if args.summary:
        s = rate_summary(series, args.warmup)
        key = "upload" if direction == OUTBOUND else "download"
        _write_json(args.summary, {
            "kind": "rate", "session": _session(args), "direction": direction, **s.to_dict(),
            "metrics": {f"{key}_mean_bps": s.mean_bps, f"{key}_stddev_bps": s.stddev_bps},
        })


def cmd_vqa(args):
    dims = tuple(_pair(args.dims, "x", 2, "dims")) if args.dims else None
    ref = read_video(args.ref, dims)
    deg = read_video(args.deg, dims)
    if not len(ref) or not len(deg):
        raise InputError("empty video input")
    h, w = deg.shape
    if args.crop:
        crop = tuple(_pair(args.crop, ",", 4, "crop"))
    elif args.auto_crop:
        crop = detect_padding(deg[0])
    else:
        crop = (0, 0, w, h)
    target = tuple(_pair(args.resize, "x", 2, "resize")) if args.resize else (ref.shape[1], ref.shape[0])
    deg = preprocess(deg, PreprocessSpec(crop, target))
    offset = align_temporal(ref, deg, args.max_offset, step=args.step)
    ref_t, deg_t = trim_to_offset(ref, deg, offset)
    scores = {}
    for name in args.metrics.split(","):
        q = sequence_score(ref_t, deg_t, name.strip())
        scores[q.metric] = q.to_dict(with_frames=not args.no_frames)
    _write_json(args.out, {
        "kind": "vqa", "session": _session(args), "offset_frames": offset, "crop": list(crop),
        "resize": list(target), "frames": len(ref_t), "scores": scores,
        "metrics": {m: s["aggregate"] for m, s in scores.items()},
    })


def cmd_aqa(args):
    ref = aq.read_wav(args.ref)
    deg = aq.read_wav(args.deg)
    ref_n = aq.normalize_loudness(ref, args.target_lufs)
    deg_n = aq.normalize_loudness(deg, args.target_lufs)
    offset = aq.find_offset(ref_n.audio, deg_n.audio, args.max_offset)
    ref_a, deg_a = aq.trim_align(ref_n.audio, deg_n.audio, offset)
    paths = aq.export_pair(ref_a, deg_a, args.out_prefix)
    metrics = {"audio_offset_s": offset}
    if args.mos_lqo is not None:
        metrics["mos_lqo"] = aq.validate_mos(args.mos_lqo)
    _write_json(args.report, {
        "kind": "aqa", "session": _session(args),
        "reference": {"input_lufs": ref_n.input_loudness, "gain_db": ref_n.gain_db, "clipped": ref_n.clipped},
        "degraded": {"input_lufs": deg_n.input_loudness, "gain_db": deg_n.gain_db, "clipped": deg_n.clipped},
        "target_lufs": args.target_lufs, "offset_s": offset, "aligned_seconds": ref_a.duration,
        "files": list(paths), "metrics": metrics,
    })


def cmd_simulate(args):
    try:
        with open(args.config) as fh:
            cfg = SimConfig.from_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.config}: {exc}") from exc
    result = simulate(cfg)
    for path in result.write(args.out_dir):
        log.info("wrote %s", path)


def cmd_report(args):
    paths = []
    for pattern in args.inputs:
        paths.extend(sorted(glob.glob(pattern)) or [pattern])
    docs = []
    for path in paths:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: {exc}") from exc
        if doc.get("session") is None:
            doc["session"] = {"session_id": os.path.splitext(os.path.basename(path))[0]}
        docs.append(doc)
    group_by = [g.strip() for g in args.group_by.split(",") if g.strip()]
    report = aggregate(docs, group_by)
    out = report.to_dict()
    if args.cdf_dir:
        os.makedirs(args.cdf_dir, exist_ok=True)
        cdfs = {}
        for key, samples in report.lag_samples.items():
            if samples:
                name = "lag_" + "_".join(str(k) for k in key) + ".csv" if key else "lag_all.csv"
                emit_cdf(samples, os.path.join(args.cdf_dir, name))
                cdfs[name] = len(samples)
        out["cdfs"] = cdfs
    _write_json(args.out, {"kind": "report", **out})


# --- parser -----------------------------------------------------------------

def _add_session_args(p):
    g = p.add_argument_group("session metadata")
    g.add_argument("--session-id")
    g.add_argument("--platform", choices=["zoom", "webex", "meet", "unknown"])
    g.add_argument("--n", type=int, help="participant count")
    g.add_argument("--scenario", help="free-form scenario label, e.g. low-motion")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vcbench", description="Videoconferencing QoE benchmark analysis")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lag", help="streaming lag from sender/receiver captures")
    p.add_argument("--sender", required=True)
    p.add_argument("--receiver", required=True)
    p.add_argument("--sender-addr")
    p.add_argument("--receiver-addr")
    p.add_argument("--threshold", type=int, default=200)
    p.add_argument("--quiescence", type=float, default=1.0)
    p.add_argument("--period", type=float, default=2.0)
    p.add_argument("--offset-receiver", type=float, default=0.0)
    p.add_argument("--out")
    _add_session_args(p)
    p.set_defaults(func=cmd_lag)

    p = sub.add_parser("endpoints", help="discover media endpoints in a capture")
    p.add_argument("--trace", required=True)
    p.add_argument("--local-addr")
    p.add_argument("--min-packets", type=int, default=50)
    p.add_argument("--out")
    _add_session_args(p)
    p.set_defaults(func=cmd_endpoints)

    p = sub.add_parser("topology", help="classify the relay topology of a session")
    p.add_argument("--roster", required=True, help="file with one client address per line")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--out")
    _add_session_args(p)
    p.set_defaults(func=cmd_topology)

    p = sub.add_parser("rate", help="Layer-7 data rate series")
    p.add_argument("--trace", required=True)
    p.add_argument("--direction", required=True, help="up|down")
    p.add_argument("--local-addr")
    p.add_argument("--bin", type=float, default=1.0)
    p.add_argument("--warmup", type=float, default=5.0)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", help="also write a JSON summary here")
    _add_session_args(p)
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("vqa", help="full-reference video quality")
    p.add_argument("--ref", required=True)
    p.add_argument("--deg", required=True)
    p.add_argument("--dims", help="WxH for raw luma inputs without a sidecar")
    p.add_argument("--crop", help="x,y,w,h")
    p.add_argument("--auto-crop", action="store_true")
    p.add_argument("--resize", help="WxH (default: reference dimensions)")
    p.add_argument("--metrics", default="psnr,ssim,msssim,vifp")
    p.add_argument("--max-offset", type=int, default=90)
    p.add_argument("--step", type=int, default=5)
    p.add_argument("--no-frames", action="store_true", help="omit per-frame values")
    p.add_argument("--out")
    _add_session_args(p)
    p.set_defaults(func=cmd_vqa)

    p = sub.add_parser("aqa", help="audio normalization, alignment and export")
    p.add_argument("--ref", required=True)
    p.add_argument("--deg", required=True)
    p.add_argument("--target-lufs", type=float, default=-23.0)
    p.add_argument("--max-offset", type=float, default=10.0)
    p.add_argument("--out-prefix", default="aligned_")
    p.add_argument("--mos-lqo", type=float, help="score returned by an external scorer")
    p.add_argument("--report")
    _add_session_args(p)
    p.set_defaults(func=cmd_aqa)

    p = sub.add_parser("simulate", help="generate synthetic session captures")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="aggregate per-session results")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--group-by", default="platform,n")
    p.add_argument("--out")
    p.add_argument("--cdf-dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (InputError, OSError, ValueError) as exc:
        print(f"vcbench: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AnalysisError as exc:
        print(f"vcbench: analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    return 0


if __name__ == "__main__":
    sys.exit(main())
