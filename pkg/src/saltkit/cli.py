"""Command-line surface: transfer, overlap, validate, and stats subcommands.

Exit codes: 0 on success, 1 on usage errors, 2 on data or validation
errors. Diagnostics go to stderr; machine-readable results go to the
report path when given, otherwise to stdout. Output files are written
atomically, so a failed run leaves no truncated artifacts.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time

from . import validate as validate_mod
from .auxembed import load_auxiliary
from .baselines import focus_transfer, multivariate_transfer
from .errors import ConfigError, SaltkitError
from .overlap import DEFAULT_MARKERS, NormalizationRules, compute_overlap, coverage_report
from .tensorio import _atomic_writer, read_embedding, read_vocabulary, write_embedding
from .transfer import METHODS, TransferConfig, make_head, salt_transfer

log = logging.getLogger(__name__)


class UsageError(Exception):
    """Raised for bad flags or subcommands; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


# Every key a transfer run config file may carry, with its expected type.
_PATH_KEYS = (
    "source_embedding", "source_vocab", "target_embedding", "target_vocab",
    "aux_vectors", "aux_bundle", "head_source",
    "output_embedding", "output_head", "report_json",
)
_CONFIG_TYPES: dict[str, type | tuple] = {
    **{k: str for k in _PATH_KEYS},
    "method": str,
    "seed": int,
    "rcond": (int, float),
    "tied_head": bool,
    "min_pairs": int,
    "strip_markers": list,
    "trim_whitespace": bool,
    "byte_level_decode": bool,
    "threads": int,
    "block_size": int,
}


def _load_run_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    for key, value in doc.items():
        expected = _CONFIG_TYPES.get(key)
        if expected is None:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        if expected is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: key {key!r} must be a boolean")
        elif expected is int:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{path}: key {key!r} must be an integer")
        elif not isinstance(value, expected):
            raise ConfigError(f"{path}: key {key!r} has the wrong type")
    markers = doc.get("strip_markers")
    if markers is not None and not all(isinstance(m, str) and m for m in markers):
        raise ConfigError(f"{path}: strip_markers must be non-empty strings")
    return doc


def _merged(args: argparse.Namespace, file_config: dict) -> dict:
    """Resolve the run settings; explicit flags beat config-file values."""
    merged = dict(file_config)
    for key in _CONFIG_TYPES:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    merged.setdefault("method", "salt")
    merged.setdefault("seed", 0)
    merged.setdefault("rcond", 1e-6)
    merged.setdefault("tied_head", True)
    merged.setdefault("min_pairs", 1)
    merged.setdefault("strip_markers", list(DEFAULT_MARKERS))
    merged.setdefault("trim_whitespace", True)
    merged.setdefault("byte_level_decode", False)
    merged.setdefault("threads", os.cpu_count() or 1)
    merged.setdefault("block_size", 1024)
    return merged


def _rules_from(settings: dict) -> NormalizationRules:
    try:
        return NormalizationRules(
            strip_markers=tuple(settings["strip_markers"]),
            trim_whitespace=settings["trim_whitespace"],
            byte_level_decode=settings["byte_level_decode"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _require_inputs(settings: dict, keys: list[str]) -> None:
    for key in keys:
        path = settings.get(key)
        if path is None:
            raise ConfigError(f"missing required input: {key}")
        if not os.path.exists(path):
            raise ConfigError(f"{key}: no such file: {path}")


def _check_output_dirs(settings: dict, keys: list[str]) -> None:
    for key in keys:
        path = settings.get(key)
        if path is None:
            continue
        parent = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(parent):
            raise ConfigError(f"{key}: directory does not exist: {parent}")


def _emit(result: dict, report_path: str | None) -> None:
    text = json.dumps(result, indent=2, sort_keys=True)
    if report_path:
        with _atomic_writer(report_path) as f:
            f.write((text + "\n").encode("utf-8"))
    else:
        print(text)


def _cmd_transfer(args: argparse.Namespace) -> int:
    file_config = _load_run_config(args.config) if args.config else {}
    settings = _merged(args, file_config)
    method = settings["method"]
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")

    required = ["source_embedding", "source_vocab", "target_vocab"]
    if method == "salt":
        required += ["target_embedding", "aux_vectors"]
    elif method == "focus":
        required += ["aux_vectors"]
    if settings.get("aux_bundle"):
        required.append("aux_bundle")
    if settings.get("output_head") and not settings["tied_head"]:
        required.append("head_source")
    _require_inputs(settings, required)
    if not settings.get("output_embedding"):
        raise ConfigError("missing required output: output_embedding")
    _check_output_dirs(settings, ["output_embedding", "output_head", "report_json"])

    rules = _rules_from(settings)
    try:
        config = TransferConfig(
            method=method,
            seed=settings["seed"],
            rcond=float(settings["rcond"]),
            tied_head=settings["tied_head"],
            min_pairs=settings["min_pairs"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    threads = settings["threads"]
    block_size = settings["block_size"]

    log.info("loading inputs for %s transfer", method)
    source_embedding = read_embedding(settings["source_embedding"])
    source_vocab = read_vocabulary(settings["source_vocab"])
    target_vocab = read_vocabulary(settings["target_vocab"])
    target_embedding = None
    if method == "salt":
        target_embedding = read_embedding(settings["target_embedding"])
    aux = None
    if method in ("salt", "focus"):
        aux = load_auxiliary(settings["aux_vectors"], settings.get("aux_bundle"))

    started = time.monotonic()
    if method == "salt":
        out, report = salt_transfer(
            source_embedding, source_vocab, target_embedding, target_vocab, aux,
            rules=rules, config=config, threads=threads, block_size=block_size,
        )
    elif method == "focus":
        out, report = focus_transfer(
            source_embedding, source_vocab, target_vocab, aux,
            rules=rules, config=config, threads=threads, block_size=block_size,
        )
    else:
        out, report = multivariate_transfer(
            source_embedding, source_vocab, target_vocab,
            rules=rules, config=config, threads=threads, block_size=block_size,
        )
    log.info("transfer finished in %.1fs", time.monotonic() - started)

    write_embedding(out, settings["output_embedding"])
    if settings.get("output_head"):
        head_source = None
        if not config.tied_head:
            head_source = read_embedding(settings["head_source"])
        head = make_head(
            out, head_source, config=config,
            source_vocab=source_vocab, target_embedding=target_embedding,
            target_vocab=target_vocab, aux=aux, rules=rules,
            threads=threads, block_size=block_size,
        )
        write_embedding(head, settings["output_head"])
    _emit(report.to_dict(), settings.get("report_json"))
    return 0


def _cmd_overlap(args: argparse.Namespace) -> int:
    settings = _merged(args, {})
    for key, path in (("source_vocab", args.source_vocab), ("target_vocab", args.target_vocab)):
        if not os.path.exists(path):
            raise ConfigError(f"{key}: no such file: {path}")
    rules = _rules_from(settings)
    vs = read_vocabulary(args.source_vocab)
    vt = read_vocabulary(args.target_vocab)
    overlap_map = compute_overlap(vs, vt, rules)
    _emit(coverage_report(overlap_map, len(vt)), args.report_json)
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    if not os.path.exists(args.spec):
        raise ConfigError(f"spec: no such file: {args.spec}")
    try:
        with open(args.spec, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.spec}: malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{args.spec}: spec must be a JSON object")
    known = {f.name for f in dataclasses.fields(validate_mod.SyntheticSpec)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{args.spec}: unknown spec keys: {sorted(unknown)}")
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        spec = validate_mod.SyntheticSpec(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{args.spec}: {exc}") from exc
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    result = validate_mod.evaluate_methods(
        spec, threads=threads, block_size=args.block_size
    )
    _emit(result, args.report_json)
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    for key, path in (("before", args.before), ("after", args.after)):
        if not os.path.exists(path):
            raise ConfigError(f"{key}: no such file: {path}")
    if (args.ids_before is None) != (args.ids_after is None):
        raise ConfigError("--ids-before and --ids-after must be given together")
    for key, path in (("ids_before", args.ids_before), ("ids_after", args.ids_after)):
        if path is not None and not os.path.exists(path):
            raise ConfigError(f"{key}: no such file: {path}")
    before = read_embedding(args.before)
    after = read_embedding(args.after)
    result = validate_mod.footprint_report(before, after, args.ids_before, args.ids_after)
    _emit(result, args.report_json)
    return 0


def _build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (64-bit unsigned)")
    common.add_argument("--threads", type=int, default=None, help="worker count; default: all cores")
    common.add_argument(
        "--log-level", default="warning", choices=["debug", "info", "warning", "error"]
    )
    common.add_argument("--report-json", default=None, help="write the JSON result here instead of stdout")

    rules = _Parser(add_help=False)
    rules.add_argument(
        "--strip-marker", dest="strip_markers", action="append", default=None,
        metavar="MARKER", help="marker substring to strip; repeatable (default: Ġ ▁ ##)",
    )
    rules.add_argument(
        "--no-strip-markers", dest="strip_markers", action="store_const", const=[],
        help="disable marker stripping",
    )
    rules.add_argument(
        "--no-trim-whitespace", dest="trim_whitespace", action="store_const", const=False,
        default=None,
    )
    rules.add_argument(
        "--byte-level-decode", dest="byte_level_decode", action="store_const", const=True,
        default=None, help="undo byte-level BPE printable encoding before stripping",
    )

    parser = _Parser(prog="saltkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p_transfer = sub.add_parser(
        "transfer", parents=[common, rules], help="build a transferred embedding matrix",
        conflict_handler="resolve",
    )
    p_transfer.add_argument("--config", default=None, help="JSON run config; flags override it")
    for key in _PATH_KEYS:
        p_transfer.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    p_transfer.add_argument("--method", choices=METHODS, default=None)
    p_transfer.add_argument("--rcond", type=float, default=None)
    p_transfer.add_argument("--min-pairs", dest="min_pairs", type=int, default=None)
    p_transfer.add_argument(
        "--tied-head", dest="tied_head", action="store_const", const=True, default=None
    )
    p_transfer.add_argument(
        "--untied-head", dest="tied_head", action="store_const", const=False
    )
    p_transfer.add_argument("--block-size", dest="block_size", type=int, default=None)
    p_transfer.set_defaults(func=_cmd_transfer)

    p_overlap = sub.add_parser(
        "overlap", parents=[common, rules], help="report vocabulary coverage",
        conflict_handler="resolve",
    )
    p_overlap.add_argument("--source-vocab", required=True)
    p_overlap.add_argument("--target-vocab", required=True)
    p_overlap.set_defaults(func=_cmd_overlap)

    p_validate = sub.add_parser(
        "validate", parents=[common], help="run all methods on a synthetic instance",
        conflict_handler="resolve",
    )
    p_validate.add_argument("--spec", required=True, help="SyntheticSpec as JSON")
    p_validate.add_argument("--block-size", dest="block_size", type=int, default=1024)
    p_validate.set_defaults(func=_cmd_validate)

    p_stats = sub.add_parser(
        "stats", parents=[common], help="embedding footprint and tokenized-length report",
        conflict_handler="resolve",
    )
    p_stats.add_argument("--before", required=True)
    p_stats.add_argument("--after", required=True)
    p_stats.add_argument("--ids-before", dest="ids_before", default=None)
    p_stats.add_argument("--ids-after", dest="ids_after", default=None)
    p_stats.set_defaults(func=_cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"saltkit: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        print(parser.format_usage(), file=sys.stderr)
        return 1
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"saltkit: error: {exc}", file=sys.stderr)
        return 1
    except (SaltkitError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
