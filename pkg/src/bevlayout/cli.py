"""Command-line pipeline: scenes -> QA -> responses -> scores -> tables."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import zlib
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Sequence

from . import client as client_mod
from . import cot, mapeval, oracle, qa as qa_mod, rewards, scene as scene_mod, synth
from .geometry import LayoutMap
from .report import BenchReport
from .tasks import FRAME_COUNTS, TaskType

log = logging.getLogger("bevlayout")


class CLIError(Exception):
    """Fatal user-facing error; printed and mapped to exit code 1."""


# -- io helpers --------------------------------------------------------------


def read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise CLIError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return rows


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    Path(path).write_text("".join(json.dumps(r) + "\n" for r in rows))


def _scene_files(paths: Sequence[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.json")))
        else:
            files.append(p)
    return files


def load_scenes(paths: Sequence[str]) -> dict[str, scene_mod.SceneRecord]:
    """Scenes from ``.json`` files, directories of them, or ``.jsonl`` stores."""
    scenes: dict[str, scene_mod.SceneRecord] = {}
    for f in _scene_files(paths):
        try:
            if f.suffix == ".jsonl":
                loaded = [scene_mod.scene_from_dict(d) for d in read_jsonl(f)]
            else:
                loaded = [scene_mod.load_scene_file(f)]
        except (OSError, scene_mod.SceneError) as exc:
            raise CLIError(f"{f}: {exc}") from None
        for s in loaded:
            scenes[s.scene_id] = s
    return scenes


def reward_config(args) -> rewards.RewardConfig:
    kw = {}
    if getattr(args, "alpha", None) is not None:
        kw["alpha"] = args.alpha
    if getattr(args, "thresholds", None):
        kw["thresholds"] = tuple(float(x) for x in args.thresholds.split(","))
    try:
        return rewards.RewardConfig(**kw)
    except ValueError as exc:
        raise CLIError(str(exc)) from None


def parse_quota(items: Sequence[str] | None, n_lengths: int) -> dict[TaskType, int]:
    if not items:
        return {t: n_lengths for t in TaskType}
    quota = {}
    for item in items:
        name, _, count = item.partition("=")
        try:
            quota[TaskType.parse(name)] = int(count)
        except ValueError as exc:
            raise CLIError(f"bad --quota {item!r}: {exc}") from None
    return quota


def parse_lengths(text: str) -> list[int]:
    try:
        lengths = sorted({int(x) for x in text.split(",") if x.strip()})
    except ValueError:
        raise CLIError(f"bad --lengths {text!r}") from None
    bad = [n for n in lengths if n not in FRAME_COUNTS]
    if bad or not lengths:
        raise CLIError(f"--lengths must be drawn from {FRAME_COUNTS}")
    return lengths


def _scene_seed(seed: int, scene_id: str) -> int:
    return (seed * 1_000_003 + zlib.crc32(scene_id.encode())) & 0xFFFFFFFF


class _PreparedScenes:
    """Resampled scenes and their visibility tables, computed once each."""

    def __init__(self, scenes: dict[str, scene_mod.SceneRecord], fps: float, min_area: float):
        self.scenes, self.fps, self.min_area = scenes, fps, min_area
        self._cache: dict[str, tuple] = {}

    def get(self, scene_id: str):
        if scene_id not in self._cache:
            if scene_id not in self.scenes:
                raise CLIError(f"missing scene {scene_id!r}")
            rs = scene_mod.resample_scene(self.scenes[scene_id], self.fps)
            self._cache[scene_id] = (rs, scene_mod.visibility_table(rs, self.min_area))
        return self._cache[scene_id]


def _layout_from_row(row: dict) -> LayoutMap:
    if "map" in row:
        m = row["map"]
        return cot.parse_map(m if isinstance(m, str) else json.dumps(m))
    raw = row.get("raw", "")
    resp = cot.parse_response(raw)
    return resp.map if resp.map is not None else LayoutMap(())


# -- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        s = synth.make_scene(args.seed + i, source_fps=args.source_fps)
        (out / f"{s.scene_id}.json").write_text(scene_mod.serialize_scene(s))
    print(f"wrote {args.n} scenes to {out}")
    return 0


def cmd_ingest(args) -> int:
    files = _scene_files(args.scenes)
    if not files:
        raise CLIError("no scene files given")
    good, bad = [], []
    for f in files:
        try:
            good.append(scene_mod.load_scene_file(f))
        except (OSError, scene_mod.SceneError) as exc:
            bad.append(f"{f}: {exc}")
    for msg in bad:
        print(f"invalid scene {msg}", file=sys.stderr)
    if args.out and not bad:
        write_jsonl(args.out, (scene_mod.scene_to_dict(s) for s in good))
    print(f"{len(good)} valid, {len(bad)} invalid")
    return 1 if bad else 0


def cmd_gen_qa(args) -> int:
    scenes = load_scenes(args.scenes)
    if not scenes:
        raise CLIError("no scenes given")
    lengths = parse_lengths(args.lengths)
    quota = parse_quota(args.quota, len(lengths))
    prepared = _PreparedScenes(scenes, args.fps, args.min_area)
    offsets: dict[TaskType, int] = {}
    letters: Counter = Counter()
    items: list[qa_mod.QAPair] = []
    for sid in sorted(scenes):
        rs, vis = prepared.get(sid)
        seed = _scene_seed(args.seed, sid)
        try:
            seqs = scene_mod.sample_sequences(rs, lengths, args.per_length, seed, visibility=vis)
            items += qa_mod.generate_qa(
                rs, seqs, quota, seed, visibility=vis, cell_offsets=offsets, letter_counts=letters
            )
        except (scene_mod.SceneError, qa_mod.QuotaError) as exc:
            raise CLIError(f"scene {sid}: {exc}") from None
    Path(args.out).write_text(qa_mod.dumps_jsonl(items))
    hist = Counter((q.task, q.sequence.length) for q in items)
    width = max(len(t.value) for t in TaskType)
    print("task".ljust(width) + "".join(f"{n:>6}" for n in lengths))
    for t in TaskType:
        if any(hist[(t, n)] for n in lengths):
            print(t.value.ljust(width) + "".join(f"{hist[(t, n)]:>6}" for n in lengths))
    print(f"wrote {len(items)} QA pairs to {args.out}")
    return 0


def cmd_oracle_answer(args) -> int:
    items = [qa_mod.QAPair.from_dict(d) for d in read_jsonl(args.qa)]
    prepared = _PreparedScenes(load_scenes(args.scenes), args.fps, args.min_area)
    rows = []
    for q in items:
        rs, vis = prepared.get(q.scene_id)
        rows.append({"qa_id": q.qa_id, "raw": oracle.oracle_response(q, rs, vis)})
    write_jsonl(args.out, rows)
    print(f"wrote {len(rows)} oracle responses to {args.out}")
    return 0


def score_items(
    items: Sequence[qa_mod.QAPair], responses: Sequence[dict], cfg: rewards.RewardConfig
) -> tuple[list[dict], BenchReport]:
    by_id = {q.qa_id: q for q in items}
    raw_by_id = {}
    for r in responses:
        if "qa_id" not in r or "raw" not in r:
            raise CLIError("response rows need 'qa_id' and 'raw'")
        raw_by_id[r["qa_id"]] = r["raw"]
    unknown = sorted(set(raw_by_id) - set(by_id))
    if unknown:
        raise CLIError("responses for unknown qa_ids: " + ", ".join(unknown))
    scored = []
    for q in items:
        if q.qa_id not in raw_by_id:
            continue
        b = rewards.score_response(q, raw_by_id[q.qa_id], cfg)
        scored.append(
            {"qa_id": q.qa_id, **b.as_dict(), "task": q.task.value, "n_frames": q.sequence.length}
        )
    report = BenchReport.from_rows((TaskType.parse(s["task"]), s["n_frames"], s["r_task"]) for s in scored)
    return scored, report


def _emit_report(report: BenchReport, args) -> None:
    print(report.to_text(), end="")
    if getattr(args, "csv", None):
        Path(args.csv).write_text(report.to_csv())
    if getattr(args, "svg", None):
        Path(args.svg).write_text(report.to_svg())


def cmd_score(args) -> int:
    items = [qa_mod.QAPair.from_dict(d) for d in read_jsonl(args.qa)]
    responses = read_jsonl(args.responses)
    if not responses:
        raise CLIError(f"{args.responses}: no responses")
    scored, report = score_items(items, responses, reward_config(args))
    missing = len(items) - len(scored)
    if missing:
        log.warning("%d QA items have no response and were not scored", missing)
    write_jsonl(args.out, scored)
    _emit_report(report, args)
    return 0


def cmd_report(args) -> int:
    rows = read_jsonl(args.scored)
    if not rows:
        raise CLIError(f"{args.scored}: empty")
    report = BenchReport.from_rows((TaskType.parse(r["task"]), int(r["n_frames"]), float(r["r_task"])) for r in rows)
    _emit_report(report, args)
    return 0


def cmd_eval_map(args) -> int:
    cfg = reward_config(args)
    gt = {r["qa_id"]: r for r in read_jsonl(args.gt)}
    out = []
    for row in read_jsonl(args.pred):
        qid = row.get("qa_id")
        if qid not in gt:
            raise CLIError(f"no ground-truth map for qa_id {qid!r}")
        try:
            pred_map = _layout_from_row(row)
        except cot.ResponseFormatError:
            pred_map = LayoutMap(())
        try:
            gt_map = _layout_from_row(gt[qid])
        except cot.ResponseFormatError as exc:
            raise CLIError(f"ground truth {qid}: {exc}") from None
        out.append({"qa_id": qid, **mapeval.evaluate_map(pred_map, gt_map, cfg).as_dict()})
    write_jsonl(args.out, out)
    if out:
        keys = ("size_acc", "distance_acc", "angle_acc", "overall")
        means = {k: sum(r[k] for r in out) / len(out) for k in keys}
        print("  ".join(f"{k}={100 * v:.2f}" for k, v in means.items()) + f"  n={len(out)}")
    return 0


def cmd_rasterize(args) -> int:
    out = []
    for row in read_jsonl(args.maps):
        try:
            layout = _layout_from_row(row)
        except cot.ResponseFormatError as exc:
            raise CLIError(f"{row.get('qa_id')}: {exc}") from None
        grid = mapeval.rasterize(layout, args.grid_m)
        out.append({"qa_id": row.get("qa_id"), "grid": grid.to_dict()})
    write_jsonl(args.out, out)
    print(f"rasterized {len(out)} maps at {args.grid_m}x{args.grid_m}")
    return 0


def cmd_advantage(args) -> int:
    cfg = reward_config(args)
    groups: dict[str, list[dict]] = defaultdict(list)
    for r in read_jsonl(args.input):
        key = r.get("query_id", r.get("qa_id"))
        if key is None:
            raise CLIError("rows need a 'query_id'")
        groups[key].append(r)
    out = []
    for qid, rows in groups.items():
        rewards_ = [float(r.get("reward", r.get("r_total"))) for r in rows]
        g = rewards.GroupRollout(qid, rewards=rewards_)
        try:
            g.compute_advantages(cfg)
            rec = {"query_id": qid, "rewards": g.rewards, "advantages": g.advantages}
            if all("ratio" in r for r in rows):
                g.ratios = [float(r["ratio"]) for r in rows]
                rec["objective"] = g.objective(cfg)
        except ValueError as exc:
            raise CLIError(f"group {qid}: {exc}") from None
        out.append(rec)
    write_jsonl(args.out, out)
    print(f"wrote advantages for {len(out)} groups")
    return 0


def cmd_query(args) -> int:
    items = [qa_mod.QAPair.from_dict(d) for d in read_jsonl(args.qa)]
    template = Path(args.template).read_text() if args.template else client_mod.DEFAULT_TEMPLATE
    overrides = {"temperature": args.temperature, "max_parallel": args.max_parallel}
    if args.base_url:
        overrides["base_url"] = args.base_url
    try:
        cfg = client_mod.ClientConfig.from_env(args.model, **overrides)
        records = client_mod.run_batch(
            items, cfg, template, out_path=args.out, dry_run=args.dry_run, image_pattern=args.image_pattern
        )
    except client_mod.ClientConfigError as exc:
        raise CLIError(str(exc)) from None
    failed = sum(r.status != "ok" for r in records)
    print(f"{len(records)} records, {failed} failed")
    return 0


# -- parser ------------------------------------------------------------------


def _reward_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=None, help="format-reward weight (default 0.1)")
    p.add_argument("--thresholds", default=None, help="comma-separated confidence thresholds")


def _scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fps", type=float, default=scene_mod.DEFAULT_FPS, help="resampling rate")
    p.add_argument("--min-area", type=float, default=scene_mod.DEFAULT_MIN_AREA_FRACTION)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bevlayout", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write procedural scenes")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--source-fps", type=float, default=30.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate scene files")
    p.add_argument("scenes", nargs="+")
    p.add_argument("--out", help="write valid scenes to a JSONL store")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("gen-qa", help="generate QA pairs")
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--quota", action="append", metavar="TASK=N", help="per-scene items per task")
    p.add_argument("--lengths", default=",".join(map(str, FRAME_COUNTS)))
    p.add_argument("--per-length", type=int, default=3, help="sequences sampled per length")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _scene_flags(p)
    p.set_defaults(func=cmd_gen_qa)

    p = sub.add_parser("oracle-answer", help="ground-truth structured responses")
    p.add_argument("--qa", required=True)
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--out", required=True)
    _scene_flags(p)
    p.set_defaults(func=cmd_oracle_answer)

    p = sub.add_parser("score", help="score responses against QA")
    p.add_argument("--qa", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--svg")
    _reward_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="render tables from scored JSONL")
    p.add_argument("--scored", required=True)
    p.add_argument("--csv")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval-map", help="cognitive-map accuracy")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    _reward_flags(p)
    p.set_defaults(func=cmd_eval_map)

    p = sub.add_parser("rasterize", help="grid-map baseline")
    p.add_argument("--maps", required=True)
    p.add_argument("--grid-m", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("advantage", help="GRPO group advantages")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _reward_flags(p)
    p.set_defaults(func=cmd_advantage)

    p = sub.add_parser("query", help="collect model responses")
    p.add_argument("--qa", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default="model")
    p.add_argument("--base-url")
    p.add_argument("--template")
    p.add_argument("--image-pattern", help="e.g. frames/{scene_id}/{frame:05d}.jpg")
    p.add_argument("--temperature", type=float, default=0.01)
    p.add_argument("--max-parallel", type=int, default=4)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=cmd_query)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
