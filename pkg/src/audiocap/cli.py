"""Command-line entry point: ingest, filter, run, stats, split, eval, serve.

Exit codes: 0 success, 1 validation failure, 2 IO or network failure,
3 configuration error. A workspace holds clips.jsonl, verdicts.jsonl,
clues.jsonl, captions.jsonl, ledger.jsonl and reports/; an advisory .lock
file keeps two writing commands out of the same workspace.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import requests

from . import filtering, gateway, metrics, prompts, store
from .records import (
    CaptionRecord,
    ClipRecord,
    ManifestError,
    ValidationError,
    parse_manifest,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_CONFIG = 3

WORKSPACE_FILES = {
    "clips": "clips.jsonl",
    "verdicts": "verdicts.jsonl",
    "clues": "clues.jsonl",
    "captions": "captions.jsonl",
    "ledger": "ledger.jsonl",
}


class CliError(Exception):
    def __init__(self, exit_code: int, message: str):
        self.exit_code = exit_code
        super().__init__(message)


@dataclass
class RunConfig:
    workspace_dir: Path
    seed: int = 0
    backend: str = "replay"
    fixtures_dir: Path | None = None
    endpoints: list[gateway.ToolEndpointConfig] = field(default_factory=list)
    label_cfg: filtering.LabelFilterConfig = field(
        default_factory=filtering.LabelFilterConfig)
    sync_cfg: filtering.SyncFilterConfig = field(
        default_factory=filtering.SyncFilterConfig)
    template_version: str = "v1"
    parallelism: int = 4
    inaudible_lexicon: Path | None = None
    place_lexicon: Path | None = None

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise CliError(EXIT_CONFIG, "parallelism must be >= 1")
        if not self.workspace_dir.is_dir():
            raise CliError(EXIT_CONFIG,
                           f"workspace {self.workspace_dir} is not a directory")


def _load_config(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise CliError(EXIT_CONFIG, f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_CONFIG, f"config is not valid JSON: {exc}")
    workspace = Path(args.workspace or raw.get("workspace_dir") or ".")
    workspace.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    backend = args.backend or raw.get("backend", "replay")
    fixtures = raw.get("fixtures_dir")
    if getattr(args, "fixtures", None):
        fixtures = args.fixtures
    try:
        endpoints = [gateway.ToolEndpointConfig(**ep)
                     for ep in raw.get("endpoints", [])]
        label_cfg = filtering.LabelFilterConfig(
            speech_labels=frozenset(raw.get("speech_labels", ["Speech"])),
            music_labels=frozenset(raw.get("music_labels", ["Music"])))
        sync_cfg = filtering.SyncFilterConfig(
            tolerance_s=_override(args, "tolerance_s", raw, 0.6),
            grid_s=float(raw.get("grid_s", 0.2)),
            correct_eps_s=_override(args, "correct_eps_s", raw, 0.1))
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, f"bad configuration: {exc}")
    return RunConfig(
        workspace_dir=workspace,
        seed=seed,
        backend=backend,
        fixtures_dir=Path(fixtures) if fixtures else None,
        endpoints=endpoints,
        label_cfg=label_cfg,
        sync_cfg=sync_cfg,
        template_version=raw.get("template_version", "v1"),
        parallelism=int(raw.get("parallelism", 4)),
        inaudible_lexicon=Path(raw["inaudible_lexicon"])
        if raw.get("inaudible_lexicon") else None,
        place_lexicon=Path(raw["place_lexicon"])
        if raw.get("place_lexicon") else None,
    )


def _override(args, name, raw, default):
    v = getattr(args, name, None)
    if v is not None:
        return float(v)
    return float(raw.get(name, default))


def _build_gateway(cfg: RunConfig, ledger=None) -> gateway.ToolGateway:
    try:
        return gateway.ToolGateway(
            endpoints=cfg.endpoints,
            backend=cfg.backend,
            fixtures_dir=cfg.fixtures_dir,
            parallelism=cfg.parallelism,
            grid_s=cfg.sync_cfg.grid_s,
            ledger=ledger,
        )
    except gateway.GatewayConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc))


class WorkspaceLock:
    """Advisory write lock; two writing commands must not share a workspace."""

    def __init__(self, workspace: Path):
        self.path = workspace / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CliError(EXIT_IO,
                           f"workspace is locked by another command ({self.path}); "
                           "remove the lock file if that command is gone")
        with os.fdopen(fd, "w") as f:
            f.write(str(os.getpid()))
        return self

    def __exit__(self, *exc_info):
        try:
            self.path.unlink()
        except OSError:
            pass
        return False


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, ensure_ascii=False))
    else:
        print(human)


# -- subcommands ---------------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    source = Path(args.source)
    try:
        data = source.read_bytes()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {source}: {exc}")
    try:
        clips = parse_manifest(data, "clips")
    except ManifestError as exc:
        for line_no, message in exc.failures:
            print(f"{source}:{line_no}: {message}", file=sys.stderr)
        raise CliError(EXIT_VALIDATION,
                       f"{len(exc.failures)} invalid line(s) in {source}")
    with WorkspaceLock(cfg.workspace_dir):
        store.write_manifest(cfg.workspace_dir / WORKSPACE_FILES["clips"], clips)
    if not clips:
        print("warning: source manifest is empty", file=sys.stderr)
    _emit(args, {"ingested": len(clips)}, f"ingested {len(clips)} clips")
    return EXIT_OK


def _load_clips(cfg: RunConfig) -> list[ClipRecord]:
    path = cfg.workspace_dir / WORKSPACE_FILES["clips"]
    if not path.exists():
        raise CliError(EXIT_VALIDATION, f"{path} not found; run ingest first")
    return store.read_manifest(path, "clips")


def _run_filters(cfg: RunConfig, clips, gw):
    def sync_probe(clip, true_offset_s, start_jitter_s, trial_index):
        return gw.check_sync(clip, true_offset_s, start_jitter_s,
                             trial_index).pred_offset_s

    return filtering.run_filters(clips, sync_probe, filtering.FilterRunConfig(
        label=cfg.label_cfg, sync=cfg.sync_cfg, seed=cfg.seed))


def cmd_filter(args) -> int:
    cfg = _load_config(args)
    clips = _load_clips(cfg)
    gw = _build_gateway(cfg)
    with WorkspaceLock(cfg.workspace_dir):
        verdicts = _run_filters(cfg, clips, gw)
        store.write_manifest(cfg.workspace_dir / WORKSPACE_FILES["verdicts"], verdicts)
        removed = sum(1 for v in verdicts if v.final == "removed")
        store.append_ledger(cfg.workspace_dir / WORKSPACE_FILES["ledger"], [{
            "event": "filter", "seed": cfg.seed, "backend": cfg.backend,
            "clips": len(clips), "removed": removed, "timestamp": _now(),
        }])
    _emit(args, {"clips": len(clips), "removed": removed},
          f"filtered {len(clips)} clips, removed {removed}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    clips = _load_clips(cfg)
    ledger_path = cfg.workspace_dir / WORKSPACE_FILES["ledger"]
    llm_events: list[dict] = []
    gw = _build_gateway(cfg, ledger=llm_events.append)
    template = _load_template(cfg)
    lexicon = (prompts.InaudibleLexicon.from_file(cfg.inaudible_lexicon)
               if cfg.inaudible_lexicon else prompts.InaudibleLexicon.default())

    with WorkspaceLock(cfg.workspace_dir):
        verdicts = _run_filters(cfg, clips, gw)
        kept_ids = {v.clip_id for v in verdicts if v.final == "kept"}
        packets = []
        captions = []
        tool_errors: list[dict] = []
        for clip in clips:
            if clip.id not in kept_ids:
                continue
            result = gw.fetch_clues(clip)
            for tool, message in result.errors.items():
                tool_errors.append({"event": "tool_error", "clip_id": clip.id,
                                    "tool": tool, "error": message})
            packets.append(result.packet)
            prompt = prompts.build_prompt(result.packet, template)
            try:
                response = gw.generate_caption(prompt, clip_id=clip.id)
            except gateway.ToolCallError as exc:
                raise CliError(EXIT_IO, f"clip {clip.id}: {exc}")
            captions.append(CaptionRecord(
                clip_id=clip.id,
                caption=response.caption,
                prompt_hash=prompts.prompt_hash(prompt, template),
                llm_model=response.model,
                flags=prompts.qc_caption(response.caption, lexicon),
            ))
        store.write_manifest(cfg.workspace_dir / WORKSPACE_FILES["verdicts"], verdicts)
        store.write_manifest(cfg.workspace_dir / WORKSPACE_FILES["clues"], packets)
        store.write_manifest(cfg.workspace_dir / WORKSPACE_FILES["captions"], captions)
        removed = len(clips) - len(kept_ids)
        store.append_ledger(ledger_path, tool_errors + llm_events + [{
            "event": "run", "seed": cfg.seed, "backend": cfg.backend,
            "template_version": template.version,
            "source": str(cfg.fixtures_dir) if cfg.backend == "replay"
            else sorted(ep.base_url for ep in cfg.endpoints),
            "clips": len(clips), "kept": len(kept_ids), "removed": removed,
            "captions": len(captions), "timestamp": _now(),
        }])
    _emit(args, {"clips": len(clips), "kept": len(kept_ids),
                 "removed": removed, "captions": len(captions)},
          f"{len(clips)} clips: kept {len(kept_ids)}, removed {removed}, "
          f"wrote {len(captions)} captions")
    return EXIT_OK


def _load_template(cfg: RunConfig) -> prompts.PromptTemplate:
    try:
        return prompts.PromptTemplate.load(cfg.template_version)
    except (FileNotFoundError, ValueError) as exc:
        raise CliError(EXIT_CONFIG,
                       f"cannot load template {cfg.template_version}: {exc}")


def cmd_stats(args) -> int:
    cfg = _load_config(args)
    captions_path = cfg.workspace_dir / WORKSPACE_FILES["captions"]
    records = store.latest_captions(store.read_manifest(captions_path, "captions"))
    if not records:
        raise CliError(EXIT_VALIDATION, "no captions in workspace")
    place_lexicon = prompts.load_place_lexicon(cfg.place_lexicon)
    corpus = store.compute_corpus_stats(records, place_lexicon)
    payload: dict = {"corpus": corpus.to_dict()}
    reviewed = [r for r in records if r.review is not None]
    if reviewed:
        payload["manual_check"] = store.compute_manual_check_stats(reviewed).to_dict()
    reports = cfg.workspace_dir / "reports"
    reports.mkdir(exist_ok=True)
    (reports / "stats.json").write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    store.export_word_freq_csv(reports / "word_freq.csv", corpus)
    _emit(args, payload,
          f"{corpus.pair_count} captions, avg length "
          f"{corpus.avg_sentence_len:.1f} words, vocab {corpus.vocab_size}")
    return EXIT_OK


def cmd_split(args) -> int:
    cfg = _load_config(args)
    clips = _load_clips(cfg)
    try:
        split = store.sample_benchmark_split(clips, cfg.seed, args.n_val, args.n_test)
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, str(exc))
    reports = cfg.workspace_dir / "reports"
    reports.mkdir(exist_ok=True)
    payload = {"seed": cfg.seed, "n_val": args.n_val, "n_test": args.n_test, **split}
    (reports / "split.json").write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    _emit(args, payload,
          f"split: {len(split['val_ids'])} val, {len(split['test_ids'])} test")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    reports = cfg.workspace_dir / "reports"
    reports.mkdir(exist_ok=True)
    try:
        if args.kind == "retrieval":
            payload = _eval_retrieval(args)
        elif args.kind == "captioning":
            payload = _eval_captioning(args)
        else:
            payload = _eval_zeroshot(args)
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, f"missing input file: {exc}")
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, str(exc))
    payload["config"] = {"kind": args.kind, "seed": cfg.seed}
    out = reports / f"{args.kind}.json"
    out.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n",
                   encoding="utf-8")
    _emit(args, payload, f"wrote {out}")
    return EXIT_OK


def _eval_retrieval(args) -> dict:
    audio = metrics.load_embeddings(args.audio_emb)
    text = metrics.load_embeddings(args.text_emb)
    gt = metrics.load_gt_map(args.gt)
    ks = [int(k) for k in args.ks.split(",")]
    batch = metrics.EmbeddingBatch(audio=audio, text=text, gt=gt)
    a2t, t2a = metrics.recall_at_k(batch, ks)
    return {"audio_to_text": a2t.to_dict(), "text_to_audio": t2a.to_dict()}


def _eval_captioning(args) -> dict:
    pairs = json.loads(Path(args.pairs).read_text(encoding="utf-8"))
    candidates = [p["candidate"] for p in pairs]
    references = [p["references"] for p in pairs]
    rouge_scores = [metrics.rouge_l(c, r) for c, r in zip(candidates, references)]
    cider_result = metrics.cider(candidates, references)
    payload = {
        "rouge_l": {"per_item": rouge_scores,
                    "mean": sum(rouge_scores) / len(rouge_scores)},
        "cider": {"per_item": cider_result.per_item,
                  "mean": cider_result.corpus_mean},
    }
    if args.spice_scores:
        spice = json.loads(Path(args.spice_scores).read_text(encoding="utf-8"))
        spider_scores = metrics.spider(candidates, references, spice)
        payload["spider"] = {"per_item": spider_scores,
                             "mean": sum(spider_scores) / len(spider_scores)}
    return payload


def _eval_zeroshot(args) -> dict:
    audio = metrics.load_embeddings(args.audio_emb)
    labels = json.loads(Path(args.labels).read_text(encoding="utf-8"))
    prompt_embs = metrics.load_embeddings(args.prompt_emb)
    classes = list(dict.fromkeys(labels))
    if prompt_embs.shape[0] != len(classes):
        raise ValueError(f"{args.prompt_emb} has {prompt_embs.shape[0]} rows but "
                         f"there are {len(classes)} distinct labels")
    template = metrics.ZERO_SHOT_PROMPTS[args.prompt_kind]
    by_prompt = {template.format(label=label): prompt_embs[i]
                 for i, label in enumerate(classes)}
    accuracy = metrics.zero_shot_classify(audio, labels, args.prompt_kind,
                                          by_prompt.__getitem__)
    return {"accuracy": accuracy, "labels": len(labels), "classes": len(classes)}


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _load_config(args)
    app = create_app(cfg.workspace_dir, seed=cfg.seed)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="audiocap",
        description="Audio-caption dataset curation pipeline")
    parser.add_argument("--workspace", help="workspace directory")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--backend", choices=["live", "replay"], default=None)
    parser.add_argument("--json", action="store_true",
                        help="machine-readable JSON output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a source manifest into the workspace")
    p.add_argument("source")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("filter", help="run label and sync filters")
    p.add_argument("--fixtures", help="replay fixtures directory")
    p.add_argument("--tolerance-s", dest="tolerance_s", type=float, default=None)
    p.add_argument("--correct-eps-s", dest="correct_eps_s", type=float, default=None)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("run", help="filter, fetch clues, and generate captions")
    p.add_argument("--fixtures", help="replay fixtures directory")
    p.add_argument("--tolerance-s", dest="tolerance_s", type=float, default=None)
    p.add_argument("--correct-eps-s", dest="correct_eps_s", type=float, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("stats", help="corpus and manual-check statistics")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="sample benchmark validation/test ids")
    p.add_argument("--n-val", type=int, required=True)
    p.add_argument("--n-test", type=int, required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("eval", help="run an evaluation and write a report")
    p.add_argument("kind", choices=["retrieval", "captioning", "zeroshot"])
    p.add_argument("--audio-emb", help="audio embeddings (.f32 + sidecar)")
    p.add_argument("--text-emb", help="text embeddings (.f32 + sidecar)")
    p.add_argument("--gt", help="ground-truth map JSON (audio index -> text indices)")
    p.add_argument("--ks", default="1,5,10", help="comma-separated k values")
    p.add_argument("--pairs", help="captioning pairs JSON "
                                   "[{candidate, references}, ...]")
    p.add_argument("--spice-scores", help="external per-item scene scores JSON")
    p.add_argument("--labels", help="zero-shot labels JSON, one per audio row")
    p.add_argument("--prompt-emb", help="prompt embeddings, one row per class")
    p.add_argument("--prompt-kind", choices=["environment", "generic"],
                   default="generic")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the review service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ManifestError, ValidationError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except gateway.ReplayFixtureMissing as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (gateway.ToolCallError, requests.RequestException, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
