"""``threadloom`` command line."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .autograd import NonFiniteError
from .config import RunConfig, load_config
from .corpus import CorpusError, parse_irc, read_corpus, write_canonical, write_corpus
from .metrics import evaluate_corpus, format_table
from .model import DisentangleModel
from .synth import SynthConfig, generate
from .train import TrainingError, ablate, predict, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

SYNTH_KEYS = {"n_train": 200, "n_test": 40}


class UsageError(Exception):
    pass


def _read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def _config(args) -> RunConfig:
    items = list(args.set or ())
    if getattr(args, "no_hrl", False):
        items += ["use_l2=false", "use_l3=false"]
    try:
        return load_config(getattr(args, "config", None), items)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _data_file(path, split: str) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / f"{split}.jsonl"
    if not p.exists():
        raise CorpusError(f"no such corpus file: {p}")
    return p


def _write_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_ingest(args) -> int:
    dialogue, forest = parse_irc(_read_lines(args.raw), _read_lines(args.ann), dialogue_id=Path(args.raw).stem)
    write_canonical(dialogue, forest, args.out)
    print(f"wrote {len(dialogue)} utterances to {args.out}")
    return EXIT_OK


def _synth_settings(args):
    """Synth config files share the key = value format; unknown keys are SynthConfig fields."""
    values = {}
    items = []
    if args.config:
        for line in _read_lines(args.config):
            line = line.split("#", 1)[0].strip()
            if line:
                items.append(line)
    items += args.set or []
    split = dict(SYNTH_KEYS)
    for item in items:
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        if k not in split and k not in SynthConfig.__dataclass_fields__:
            raise UsageError(f"unknown synth key {k!r}")
        try:
            if k in split:
                split[k] = int(v)
                continue
            default = getattr(SynthConfig, k)
            if isinstance(default, tuple):
                lo, hi = v.strip("()[] ").replace("-", ",").split(",")
                values[k] = (int(lo), int(hi))
            elif isinstance(default, float):
                values[k] = float(v)
            else:
                values[k] = int(v)
        except ValueError as exc:
            raise UsageError(f"bad value for {k}: {v!r}") from exc
    return values, split


def cmd_synth(args) -> int:
    values, split = _synth_settings(args)
    try:
        cfg = SynthConfig(**values)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set = generate(SynthConfig(**{**values, "n_dialogues": split["n_train"]}), prefix="train")
    test_cfg = SynthConfig(**{**values, "n_dialogues": split["n_test"], "seed": cfg.seed + 100_003})
    test_set = generate(test_cfg, prefix="test")
    write_corpus(train_set, out / "train.jsonl")
    write_corpus(test_set, out / "test.jsonl")
    _write_json({"synth": {**cfg.__dict__, **split}}, out / "synth_config.json")
    print(f"wrote {len(train_set)} train / {len(test_set)} test dialogues to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    corpus = read_corpus(_data_file(args.data, "train"))
    result = train(cfg, corpus)
    result.model.save(args.out, extra={"run_config": cfg.to_dict(), "optimizer": cfg.optimizer,
                                       "steps": len(result.log)})
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            for s in result.log:
                fh.write(json.dumps(s.__dict__) + "\n")
    first, last = result.log[0].loss, result.log[-1].loss
    print(f"trained {len(result.log)} steps in {result.seconds:.1f}s, loss {first:.4f} -> {last:.4f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model, meta = DisentangleModel.load(args.ckpt)
    corpus = read_corpus(_data_file(args.data, "test"))
    dialogues = [d for d, _ in corpus]
    preds = predict(model, dialogues, args.decoder, args.window)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus([(d, f) for d, (f, _) in zip(dialogues, preds)], out / "pred.jsonl")
    with open(out / "traces.jsonl", "w", encoding="utf-8") as fh:
        for d, (_, trace) in zip(dialogues, preds):
            for step in trace.steps:
                fh.write(json.dumps({"id": d.id, **step.to_json()}) + "\n")
    _write_json({"run_config": meta.get("run_config"), "decoder": args.decoder,
                 "window": args.window if args.window is not None else model.config.window},
                out / "predict_config.json")
    print(f"predicted {len(dialogues)} dialogues into {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    gold = read_corpus(_data_file(args.gold, "test"))
    pred = read_corpus(_data_file(args.pred, "pred"))
    g_ids = [d.id for d, _ in gold]
    p_ids = [d.id for d, _ in pred]
    if g_ids != p_ids:
        missing = sorted(set(g_ids) ^ set(p_ids)) or [a for a, b in zip(g_ids, p_ids) if a != b]
        raise CorpusError(f"gold and prediction dialogue ids differ: {missing}")
    for (d, g), (_, p) in zip(gold, pred):
        if g is None or p is None:
            raise CorpusError(f"dialogue {d.id!r} has no reply annotation")
        if len(g) != len(p):
            raise CorpusError(f"dialogue {d.id!r}: {len(g)} gold vs {len(p)} predicted utterances")
    report = evaluate_corpus([(g, p) for (_, g), (_, p) in zip(gold, pred)], mode=args.mode,
                             include_self=args.include_self)
    data = report.to_json()
    if args.metrics != "all":
        wanted = [m.strip() for m in args.metrics.split(",")]
        unknown = [m for m in wanted if m not in data]
        if unknown:
            raise UsageError(f"unknown metrics {unknown}")
        data = {m: data[m] for m in wanted}
    if args.out:
        options = {"gold": str(args.gold), "pred": str(args.pred), "mode": args.mode,
                   "include_self": args.include_self, "metrics": args.metrics}
        _write_json({**data, "options": options}, args.out)
    if args.format == "json":
        print(json.dumps(data, indent=2, sort_keys=True))
    else:
        print(format_table(report) if args.metrics == "all" else
              "\n".join(f"{k}  {100 * v:7.2f}" for k, v in data.items() if isinstance(v, float)))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    train_set = read_corpus(_data_file(args.data, "train"))
    test_set = read_corpus(_data_file(args.data, "test"))
    rows = args.rows.split(",") if args.rows else None
    try:
        results = ablate(cfg, train_set, test_set, rows)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = {"run_config": cfg.to_dict(),
              "rows": [{"name": r.name, "seed": r.seed, "train_seconds": r.train_seconds,
                        "metrics": r.report.to_json()} for r in results]}
    _write_json(report, args.out)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name.ljust(width)}  link_f1 {100 * r.report.link_f1:6.2f}  "
              f"cluster_f1 {100 * r.report.cluster_f1:6.2f}  nmi {100 * r.report.nmi:6.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="threadloom", description="Dialogue disentanglement toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_set(p, hrl=False):
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
        if hrl:
            p.add_argument("--no-hrl", action="store_true", help="pairwise loss only (use_l2 = use_l3 = false)")
        return p

    p = sub.add_parser("ingest", help="IRC log + annotations -> canonical JSONL")
    p.add_argument("--raw", required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = with_set(sub.add_parser("synth", help="write a synthetic train/test corpus"))
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = with_set(sub.add_parser("train", help="train a model"), hrl=True)
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write per-step losses as JSONL")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="decode reply forests")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--decoder", choices=("easy-first", "sequential"), default="easy-first")
    p.add_argument("--window", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--metrics", default="all")
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.add_argument("--mode", choices=("micro", "macro"), default="micro")
    p.add_argument("--include-self", action="store_true")
    p.add_argument("--out", help="also write the selected metrics as JSON")
    p.set_defaults(fn=cmd_evaluate)

    p = with_set(sub.add_parser("ablate", help="run the ablation table"), hrl=True)
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rows", help="comma-separated subset of rows")
    p.set_defaults(fn=cmd_ablate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, NonFiniteError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CorpusError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
