"""Command-line entry point: ``sore <command> ...``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from sore import ann
from sore.core import AnnConfig, CleanConfig, Cleaner, build_outlier_index
from sore.embedder import EmbedderConfig
from sore.errors import SoreError
from sore.groups import load_outlier_groups

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

REFERENCE_MS_PER_DOC = 200.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline")
    g.add_argument("--k", type=float, default=0.2, help="core fraction (default 0.2)")
    g.add_argument("--cutoff", type=float, default=0.8, help="distance cutoff d (default 0.8)")
    g.add_argument("--outlier-cutoff", type=float, default=0.25)
    g.add_argument("--max-removal", type=float, default=0.8)
    g.add_argument("--groups", default=None, help="groups file (default: builtin)")
    g.add_argument("--index", default=None, help="prebuilt outlier index file")
    g.add_argument("--embedder", choices=("hashing", "remote"), default="hashing")
    g.add_argument("--dim", type=int, default=None, help="embedding dim (hashing 256, remote 1024)")
    g.add_argument("--seed", type=int, default=0, help="hashing and index seed")
    g.add_argument("--endpoint", default=None, help="remote embedding endpoint")
    g.add_argument("--split-sentences", action="store_true")
    g.add_argument("--no-metadata-anchor", action="store_true",
                   help="do not use the metadata vector as a core anchor")


def config_from_args(args) -> CleanConfig:
    dim = args.dim or (256 if args.embedder == "hashing" else 1024)
    embedder = EmbedderConfig(provider=args.embedder, dim=dim, hashing_seed=args.seed,
                              remote_endpoint=args.endpoint,
                              remote_auth=os.environ.get("SORE_EMBED_TOKEN"))
    try:
        return CleanConfig(core_fraction_k=args.k, distance_cutoff_d=args.cutoff,
                           outlier_match_cutoff=args.outlier_cutoff,
                           max_removal_fraction=args.max_removal,
                           include_metadata_in_core_anchors=not args.no_metadata_anchor,
                           split_sentences=args.split_sentences,
                           embedder=embedder, ann=AnnConfig(seed=args.seed))
    except ValueError as exc:
        raise UsageError(str(exc))


def cleaner_from_args(args) -> Cleaner:
    config = config_from_args(args)
    groups = load_outlier_groups(args.groups)
    index_bytes = Path(args.index).read_bytes() if args.index else None
    return Cleaner(config, groups, index_bytes)


# commands

def cmd_clean(args) -> int:
    from sore.models import build_response, decision_log_lines

    if args.server:
        return _clean_remote(args)
    cleaner = cleaner_from_args(args)
    log = open(args.log, "a", encoding="utf-8") if args.log else None
    timings = []
    try:
        for path in args.inputs:
            html = sys.stdin.buffer.read() if path == "-" else Path(path).read_bytes()
            doc_id = args.doc_id or (None if path == "-" else Path(path).stem)
            result = cleaner.clean(html)
            timings.append(result.stats.elapsed_ms)
            if args.timing:
                print(f"{path}\t{result.stats.elapsed_ms:.1f} ms", file=sys.stderr)
            if log is not None:
                log.write("".join(line + "\n" for line in decision_log_lines(result, doc_id)))
                log.flush()
            if args.format == "json":
                response = build_response(result, doc_id, include_timing=args.timing)
                print(response.to_json(indent=None if len(args.inputs) > 1 else 2))
            else:
                print(result.cleaned_text)
    finally:
        if log is not None:
            log.close()
    if args.timing and timings:
        mean = sum(timings) / len(timings)
        print(f"mean {mean:.1f} ms/doc over {len(timings)} docs "
              f"(reference: ~{REFERENCE_MS_PER_DOC:.0f} ms/doc with a remote embedding call)",
              file=sys.stderr)
    return EXIT_OK


def _clean_remote(args) -> int:
    import httpx

    url = args.server.rstrip("/") + "/v1/clean"
    for path in args.inputs:
        html = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8", errors="replace")
        body = {"html": html, "doc_id": args.doc_id or (None if path == "-" else Path(path).stem),
                "config_overrides": {"core_fraction_k": args.k, "distance_cutoff_d": args.cutoff,
                                     "outlier_match_cutoff": args.outlier_cutoff,
                                     "max_removal_fraction": args.max_removal}}
        try:
            resp = httpx.post(url, json=body, timeout=60.0)
        except httpx.HTTPError as exc:
            raise SoreError(f"cannot reach {url}: {exc}") from exc
        if resp.status_code != 200:
            raise SoreError(f"server answered {resp.status_code}: {resp.text}")
        data = resp.json()
        print(json.dumps(data, indent=2, ensure_ascii=False) if args.format == "json" else data["cleaned_text"])
    return EXIT_OK


def cmd_index_build(args) -> int:
    config = config_from_args(args)
    groups = load_outlier_groups(args.groups)
    index = build_outlier_index(groups, config)
    data = ann.serialize(index)
    Path(args.out).write_bytes(data)
    print(f"wrote {args.out}: {len(index)} phrases, dim {index.dim}, {len(data)} bytes", file=sys.stderr)
    return EXIT_OK


def cmd_groups_lint(args) -> int:
    groups = load_outlier_groups(args.groups)
    total = 0
    for g in groups:
        print(f"{g.name}\t{len(g.phrases)}")
        total += len(g.phrases)
    print(f"{len(groups)} categories, {total} phrases")
    return EXIT_OK


def cmd_gen_corpus(args) -> int:
    from sore.evalkit.synth import generate_synthetic_corpus, write_corpus

    pairs = generate_synthetic_corpus(args.n, args.seed, home_ambiguity=args.home_ambiguity)
    write_corpus(pairs, args.out)
    print(f"wrote {len(pairs)} documents to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from sore.evalkit.synth import read_corpus
    from sore.evalkit.sweep import sweep, write_sweep_csv

    cleaner = cleaner_from_args(args)
    corpus = [(html, truth) for _, html, truth in read_corpus(args.corpus)]
    if not corpus:
        raise UsageError(f"no documents in {args.corpus}")
    points = sweep(corpus, args.k_grid, args.d_grid, cleaner.config,
                   ann.deserialize(cleaner.index_bytes), cleaner.phrases, cleaner.provider)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_sweep_csv(points, fh)
    else:
        write_sweep_csv(points, sys.stdout)
    return EXIT_OK


def cmd_eval(args) -> int:
    from sore.evalkit.keywords import format_table, keyword_accuracy, read_decision_log
    from sore.evalkit.metrics import score_files
    from sore.evalkit.synth import read_corpus

    truths = {doc_id: truth for doc_id, _, truth in read_corpus(args.truth)}
    report: dict = {}
    if args.pred:
        pred_dir = Path(args.pred)
        pairs = []
        for doc_id, truth in truths.items():
            pred = pred_dir / f"{doc_id}.txt"
            if not pred.exists():
                raise UsageError(f"missing prediction {pred}")
            pairs.append((pred.read_text(encoding="utf-8"), truth))
        report["scores"] = score_files(pairs)
    if args.keywords:
        docs = read_decision_log(args.keywords)
        ids = [d for d in truths if d in docs]
        groups = load_outlier_groups(args.groups)
        rows = keyword_accuracy([docs[d] for d in ids], [truths[d] for d in ids],
                                [p for g in groups for p in g.phrases])
        report["keyword_accuracy"] = [r.to_dict() for r in rows]
        if args.format == "text":
            print(format_table(rows, args.top))
    if not report:
        raise UsageError("eval needs --pred and/or --keywords")
    if args.format == "json":
        print(json.dumps(report, indent=2))
    elif "scores" in report:
        s = report["scores"]
        for agg in ("macro", "micro"):
            v = s[agg]
            print(f"{agg}: P={v['precision']:.4f} R={v['recall']:.4f} F={v['f_score']:.4f}"
                  + (f" meanF={v['f_mean']:.4f}" if "f_mean" in v else ""))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from sore.service import DEFAULT_BIND, create_app

    bind = args.bind or os.environ.get("SORE_BIND", DEFAULT_BIND)
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"bind address must be host:port, got {bind!r}")
    config = config_from_args(args)
    app = create_app(config, load_outlier_groups(args.groups), index_path=args.index, log_path=args.log)
    uvicorn.run(app, host=host, port=int(port), log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sore", description="Semantic outlier removal for web documents.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("clean", help="clean HTML files (or - for stdin)")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--doc-id", default=None)
    p.add_argument("--log", default=os.environ.get("SORE_LOG_PATH"), help="append decisions as JSONL")
    p.add_argument("--timing", action="store_true", help="report per-document latency on stderr")
    p.add_argument("--server", default=None, help="send to a running service instead of cleaning locally")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("index", help="outlier index tools")
    isub = p.add_subparsers(dest="index_command", required=True, parser_class=_Parser)
    b = isub.add_parser("build", help="embed outlier groups and write the serialized index")
    b.add_argument("--out", required=True)
    _add_pipeline_flags(b)
    b.set_defaults(func=cmd_index_build)

    p = sub.add_parser("eval", help="score predictions against a truth corpus")
    p.add_argument("--truth", required=True, help="corpus dir with NNNN.truth.txt files")
    p.add_argument("--pred", default=None, help="dir with NNNN.txt predictions")
    p.add_argument("--keywords", default=None, help="decision log (JSONL) for keyword accuracy")
    p.add_argument("--groups", default=None)
    p.add_argument("--top", type=int, default=None, help="rows of the keyword table to print")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="precision/recall over a (k, d) grid")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k-grid", type=_float_list, required=True)
    p.add_argument("--d-grid", type=_float_list, required=True)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-corpus", help="write a synthetic labelled corpus")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--home-ambiguity", action="store_true")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("groups-lint", help="validate a groups file and count phrases")
    p.add_argument("--groups", default=None)
    p.set_defaults(func=cmd_groups_lint)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--bind", default=None, help="host:port (env SORE_BIND)")
    p.add_argument("--log", default=os.environ.get("SORE_LOG_PATH"))
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "command", None) == "gen-corpus" and args.n < 1:
        print("sore: error: --n must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sore: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SoreError, OSError, ValueError) as exc:
        print(f"sore: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
