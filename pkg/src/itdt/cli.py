"""Command-line interface for the defense pipeline.

Subcommands cover the whole lifecycle: synthesize demo data, train the text
model, generate adversarial datasets, extract features, train and evaluate
the detector, run the defense in batch, serve the HTTP API, and print a
threat report over a stored window.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import attacks, datasets
from .detector import (
    DetectorConfig,
    detect,
    load_detector,
    save_detector,
    train_detector_from_vectors,
)
from .features import extract_features, load_feature_csv, save_feature_csv
from .model import ModelConfig, forward, load_checkpoint, save_checkpoint, train_classifier
from .pipeline import DefensePipeline, PipelineConfig, RecordStore, threat_report
from .transform import TransformResources
from .vocab import tokenize


def _load_resources(model, args) -> TransformResources:
    corpus_texts = None
    if getattr(args, "corpus", None):
        corpus_texts = [t for _, t, _ in datasets.load_jsonl(args.corpus)]
    return TransformResources(
        model.vocab,
        synonym_path=getattr(args, "synonyms", None),
        vectors_path=getattr(args, "vectors", None),
        corpus_texts=corpus_texts,
    )


def cmd_synth_data(args):
    paths = datasets.write_all(args.out, n_train=args.train_docs,
                               n_test=args.test_docs, seed=args.seed)
    print(json.dumps(paths, indent=2))


def cmd_train_model(args):
    dataset = datasets.load_jsonl(args.data)
    cfg = ModelConfig(layers=args.layers, heads=args.heads, dim=args.dim,
                      ff_dim=args.ff_dim, max_len=args.max_len,
                      classes=args.classes, learning_rate=args.lr,
                      epochs=args.epochs, mask_prob=args.mask_prob, seed=args.seed)
    model = train_classifier(dataset, cfg)
    save_checkpoint(model, args.out)
    correct = sum(forward(model, tokenize(t, model.vocab)).label == lab
                  for _, t, lab in dataset)
    print(f"trained on {len(dataset)} docs, accuracy {correct / len(dataset):.4f}, "
          f"saved to {args.out}")


def cmd_attack(args):
    model = load_checkpoint(args.model)
    dataset = datasets.load_jsonl(args.data)
    resources = _load_resources(model, args)
    records, failures = attacks.run_attack(args.attack, model, dataset,
                                           budget=args.budget,
                                           resources=resources,
                                           limit=args.limit)
    attacks.save_records(records, args.out)
    print(f"{args.attack}: {len(records)} adversarial records "
          f"({len(failures)} failures) -> {args.out}")


def cmd_features(args):
    model = load_checkpoint(args.model)
    fvs = []
    if args.clean:
        for ex_id, text, _label in datasets.load_jsonl(args.clean):
            seq = tokenize(text, model.vocab, example_id=ex_id)
            fvs.append(extract_features(seq, model, label=0, attack_tag="clean"))
    if args.adv:
        for rec in attacks.load_records(args.adv):
            seq = tokenize(rec.adv_text, model.vocab, example_id=rec.example_id)
            fvs.append(extract_features(seq, model, label=1, attack_tag=rec.attack_name))
    if not fvs:
        sys.exit("nothing to extract: pass --clean and/or --adv")
    save_feature_csv(fvs, args.out)
    print(f"{len(fvs)} feature vectors -> {args.out}")


def cmd_train_detector(args):
    fvs = load_feature_csv(args.features)
    config = DetectorConfig(backend=args.backend, folds=args.folds, seed=args.seed)
    model, report = train_detector_from_vectors(fvs, config)
    save_detector(model, args.out)
    print(json.dumps({"backend": args.backend, "cv": report.to_dict()}, indent=2))


def cmd_eval_detector(args):
    from .detector import compute_metrics

    fvs = load_feature_csv(args.features)
    model = load_detector(args.model)
    truth, preds, scores = [], [], []
    for fv in fvs:
        if fv.class_label is None:
            continue
        verdict = detect(model, fv)
        truth.append(fv.class_label)
        preds.append(int(verdict.is_adversarial))
        scores.append(verdict.adv_pcs)
    report = compute_metrics(truth, preds, scores)
    payload = report.to_dict()
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    print(json.dumps(payload, indent=2))


def _build_pipeline(args) -> DefensePipeline:
    model = load_checkpoint(args.model)
    detector = load_detector(args.detector)
    config = PipelineConfig.from_json(args.config) if args.config else PipelineConfig()
    resources = _load_resources(model, args)
    store = RecordStore(args.store)
    return DefensePipeline(model, detector, resources, store, config)


def cmd_defend(args):
    pipeline = _build_pipeline(args)
    rows = datasets.load_jsonl(args.infile)
    with open(args.out, "w", encoding="utf-8") as fh:
        for ex_id, text, label in rows:
            record = pipeline.defend(text, ground_truth=label, example_id=ex_id)
            fh.write(record.to_json() + "\n")
    print(f"defended {len(rows)} examples -> {args.out}; "
          f"queue depth {pipeline.store.pending_depth()}")


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    pipeline = _build_pipeline(args)
    uvicorn.run(create_app(pipeline), host=args.host, port=args.port)


def cmd_report(args):
    store = RecordStore(args.store)
    start, end = None, None
    if args.window:
        parts = args.window.split("..", 1)
        start = parts[0] or None
        end = parts[1] or None if len(parts) > 1 else None
    records = store.records(start=start, end=end)
    print(json.dumps(threat_report(records, store=store, window=(start, end)), indent=2))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itdt",
                                     description="word-substitution attack defense pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate the demo corpus and resource files")
    p.add_argument("--out", required=True)
    p.add_argument("--train-docs", type=int, default=2000)
    p.add_argument("--test-docs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth_data)

    p = sub.add_parser("train-model", help="train the text classifier")
    p.add_argument("--data", required=True, help="JSON-lines id/text/label")
    p.add_argument("--out", required=True)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--ff-dim", type=int, default=64)
    p.add_argument("--max-len", type=int, default=64)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--mask-prob", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train_model)

    p = sub.add_parser("attack", help="generate an adversarial dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--attack", required=True,
                   choices=["charlevel", "wordlevel", "multilevel"])
    p.add_argument("--budget", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--synonyms")
    p.add_argument("--vectors")
    p.add_argument("--corpus", help="training JSONL for co-occurrence statistics")
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("features", help="extract feature vectors to CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--clean", help="clean JSONL (labelled 0)")
    p.add_argument("--adv", help="adversarial records JSONL (labelled 1)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("train-detector", help="train the adversarial detector")
    p.add_argument("--features", required=True)
    p.add_argument("--backend", default="logistic-regression",
                   choices=["logistic-regression", "decision-tree",
                            "random-forest", "gradient-boosted-trees"])
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_detector)

    p = sub.add_parser("eval-detector", help="evaluate a detector on labelled features")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report", help="write the metrics JSON here")
    p.set_defaults(fn=cmd_eval_detector)

    for name, fn in (("defend", cmd_defend), ("serve", cmd_serve)):
        p = sub.add_parser(name, help=f"{name} with a full pipeline")
        p.add_argument("--model", required=True)
        p.add_argument("--detector", required=True)
        p.add_argument("--store", required=True, help="record/queue directory")
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--synonyms")
        p.add_argument("--vectors")
        p.add_argument("--corpus")
        if name == "defend":
            p.add_argument("--in", dest="infile", required=True)
            p.add_argument("--out", required=True)
        else:
            p.add_argument("--host", default="127.0.0.1")
            p.add_argument("--port", type=int, default=8000)
        p.set_defaults(fn=fn)

    p = sub.add_parser("report", help="print the threat report for a window")
    p.add_argument("--store", required=True)
    p.add_argument("--window", help="ISO range 'from..to' (either side optional)")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    args.fn(args)


if __name__ == "__main__":
    main()
