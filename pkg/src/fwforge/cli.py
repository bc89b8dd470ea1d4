"""``fwforge`` command line: one subcommand per pipeline stage.

inspect -> decrypt/batch -> deps -> rootfs -> campaign/fuzz-config, plus
pack/gen-corpus for building oracle data and keys for keystore upkeep.

Exit codes: 0 success, 1 operational failure, 2 usage error. Data goes to
stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from fwforge import campaign, container, decryptor, depres, keystore, packer
from fwforge.errors import FwForgeError

log = logging.getLogger("fwforge")

ENV_KEYS = "FWFORGE_KEYS"


class CliError(Exception):
    def __init__(self, message, exit_code=1):
        super().__init__(message)
        self.exit_code = exit_code


@dataclass
class GlobalConfig:
    keystore_path: str | None
    output_dir: str | None
    jobs: int
    log_level: str
    json_mode: bool

    def __post_init__(self):
        if self.jobs < 1:
            raise CliError("--jobs must be >= 1", 2)


def _emit_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _load_store(cfg: GlobalConfig) -> keystore.KeyStore:
    path = cfg.keystore_path
    if not path:
        raise CliError(f"no keystore given (use --keys or set {ENV_KEYS})", 2)
    try:
        return keystore.load_keystore_file(path)
    except OSError as exc:
        raise CliError(f"cannot read keystore {path}: {exc}") from exc


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from exc


# -- subcommands --------------------------------------------------------------

def cmd_inspect(args, cfg):
    c = container.parse_container(_read(args.file))
    d = container.header_to_dict(c.header)
    d["kind"] = container.classify_file(_read(args.file)).value
    d["signature_size"] = len(c.signature)
    if cfg.json_mode:
        _emit_json(d)
        return 0
    for key, value in d.items():
        if key == "chunks":
            continue
        print(f"{key:<16} {'' if value is None else value}")
    for i, ch in enumerate(d["chunks"]):
        print(f"chunk[{i}]         name={ch['name']} start={ch['start_offset']} "
              f"size={ch['output_size']} attributes=0x{ch['attributes']:08x}")
    return 0


def cmd_classify(args, cfg):
    results = [{"path": f, "kind": container.classify_file(_read(f)).value} for f in args.files]
    if cfg.json_mode:
        _emit_json(results)
    else:
        for r in results:
            print(f"{r['kind']:<18} {r['path']}")
    return 0


def cmd_decrypt(args, cfg):
    store = _load_store(cfg)
    outcome, header = decryptor.decrypt_bytes(_read(args.file), store, args.file)
    written = []
    if outcome.ok and cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        base = Path(args.file).name
        (out / f"{base}.dec").write_bytes(outcome.payload_out)
        written.append(str(out / f"{base}.dec"))
        if header.block_count:
            used = set()
            for name, blob in decryptor.extract_chunks(outcome, header):
                p = out / f"{base}.chunk.{decryptor.chunk_filename(name, used)}"
                p.write_bytes(blob)
                written.append(str(p))
    d = outcome.to_dict()
    d["written"] = written
    if cfg.json_mode:
        _emit_json(d)
    else:
        print(f"{args.file}: {outcome.status.value}"
              + (f" ({outcome.key_version}, {outcome.attempts} attempt(s))" if outcome.key_version else "")
              + (f" - {outcome.detail}" if outcome.detail else ""))
        for w in written:
            print(f"  wrote {w}")
    return 0 if outcome.ok else 1


def cmd_batch(args, cfg):
    store = _load_store(cfg)
    if not cfg.output_dir:
        raise CliError("batch requires --out", 2)
    if not Path(args.dir).is_dir():
        raise CliError(f"not a directory: {args.dir}")
    report = decryptor.batch_decrypt(args.dir, store, cfg.output_dir, jobs=cfg.jobs)
    if cfg.json_mode:
        _emit_json(report.to_dict(include_files=args.files))
    else:
        print(report.render_table())
    return 0


def cmd_pack(args, cfg):
    if not cfg.output_dir and not args.output:
        raise CliError("pack requires -o/--output", 2)
    payload = _read(args.payload)
    enc_key = None
    if not args.plain:
        if not args.use:
            raise CliError("pack needs --use <version_label> unless --plain", 2)
        store = _load_store(cfg)
        enc_key = store.by_label(args.use)
        if enc_key is None:
            raise CliError(f"no key with version label {args.use!r} in keystore")
    signer = None
    if args.sign:
        signer = packer.load_test_signing_key() if args.sign == "test" else packer.load_signing_key(args.sign)
    plan = [_parse_chunk(s) for s in args.chunk]
    name = args.name or Path(args.payload).name[:32]
    data = packer.pack_image(payload, name, enc_key, signer, plan, args.seed, auth_key_id=args.auth_id)
    out = Path(args.output) if args.output else Path(cfg.output_dir) / (Path(args.payload).name + ".fw")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    if cfg.json_mode:
        _emit_json({"path": str(out), "size": len(data), "key_version": args.use if enc_key else None})
    else:
        print(f"wrote {out} ({len(data)} bytes)")
    return 0


def _parse_chunk(text: str) -> container.ChunkEntry:
    try:
        name, start, size = text.split(":")
        return container.ChunkEntry(name.encode("ascii")[:4].ljust(4, b"\x00"), int(start, 0), int(size, 0))
    except ValueError:
        raise CliError(f"bad --chunk {text!r}; expected NAME:START:SIZE", 2) from None


def cmd_gen_corpus(args, cfg):
    if not cfg.output_dir:
        raise CliError("gen-corpus requires --out", 2)
    try:
        spec_dict = json.loads(_read(args.spec))
    except json.JSONDecodeError as exc:
        raise CliError(f"bad corpus spec {args.spec}: {exc}") from exc
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    if "seed" not in spec_dict:
        raise CliError("corpus generation needs an explicit seed (--seed or \"seed\" in the spec)", 2)
    spec = packer.CorpusSpec.from_dict(spec_dict)
    out = Path(cfg.output_dir)
    corpus_dir = out / "corpus"
    signer = packer.load_test_signing_key() if spec.sign else None
    if cfg.keystore_path:
        store = _load_store(cfg)
    else:
        store = packer.synthetic_keystore(spec.seed, signing_key=signer)
        out.mkdir(parents=True, exist_ok=True)
        (out / "keys.tsv").write_text(keystore.save_keystore(store), encoding="utf-8")
    manifest = packer.generate_corpus(spec, store, corpus_dir, signing_key=signer)
    packer.write_manifest(manifest, out / "manifest.json")
    summary = {"corpus": str(corpus_dir), "manifest": str(out / "manifest.json"),
               "files": len(manifest)}
    if not cfg.keystore_path:
        summary["keys"] = str(out / "keys.tsv")
    if cfg.json_mode:
        _emit_json(summary)
    else:
        for k, v in summary.items():
            print(f"{k:<9} {v}")
    return 0


def cmd_keys(args, cfg):
    path = args.file or cfg.keystore_path
    if not path:
        raise CliError("no keystore file given", 2)
    store = keystore.load_keystore_file(path)
    if args.action == "validate":
        if cfg.json_mode:
            _emit_json({"path": str(path), "valid": True, "records": len(store),
                        "identifiers": store.identifiers})
        else:
            print(f"{path}: ok, {len(store)} record(s), identifiers: {', '.join(store.identifiers) or '-'}")
        return 0
    rows = [keystore.record_to_dict(r) for r in store]
    if cfg.json_mode:
        _emit_json(rows)
    else:
        for r in rows:
            print(f"{r['identifier']}  {r['version_label']:<24} {r['role']:<15} {r['length']:>4} bytes")
    return 0


def cmd_deps(args, cfg):
    closure = depres.resolve_closure(args.binary, args.sysroot)
    if cfg.json_mode:
        d = closure.to_dict()
        d["summaries"] = [s.to_dict() for s in closure.summaries.values()]
        _emit_json(d)
    else:
        print(closure.render_tree())
        if closure.missing:
            print("missing: " + ", ".join(closure.missing))
    return 1 if closure.missing else 0


def cmd_rootfs(args, cfg):
    if not cfg.output_dir:
        raise CliError("rootfs requires --out", 2)
    closure = depres.resolve_closure(args.binary, args.sysroot)
    plan = depres.stage_rootfs(closure, list(closure.summaries.values()), cfg.output_dir,
                               allow_missing=args.allow_missing, apply=args.apply)
    if cfg.json_mode:
        _emit_json(plan.to_dict())
    else:
        verb = "copied" if plan.applied else "plan"
        for src, dst in plan.entries:
            print(f"{verb}: {src} -> {dst}")
        for note in plan.notes:
            print(f"note: {note}")
    return 0


def cmd_campaign(args, cfg):
    try:
        profiles = [campaign.parse_profile(p) for p in args.profile]
    except ValueError as exc:
        raise CliError(str(exc), 2) from exc
    plans = [campaign.plan_campaign(p, args.target) for p in profiles]
    speedups = {}
    for i, a in enumerate(profiles):
        for b in profiles[i + 1:]:
            speedups[f"{a.name}/{b.name}"] = campaign.speedup(a, b)
    if args.csv:
        cycles = args.cycles or [10**k for k in range(0, 7)]
        Path(args.csv).write_text(campaign.timeline_csv(profiles, cycles), encoding="utf-8")
    if cfg.json_mode:
        _emit_json({"plans": [p.to_dict() for p in plans], "speedup": speedups})
    else:
        for plan in plans:
            cap = "unbounded" if plan.achievable_execs is None else plan.achievable_execs
            print(f"{plan.profile.name:<16} exec={plan.profile.exec_time_us:g}us target={plan.target_execs} "
                  f"achievable={cap} wall={plan.wall_time_s:.3f}s "
                  f"{'feasible' if plan.feasible else 'NOT feasible'}")
        for k, v in speedups.items():
            print(f"speedup {k}: {v:.2f}x")
    return 0


def cmd_fuzz_config(args, cfg):
    try:
        profile = campaign.parse_profile(args.profile)
    except ValueError as exc:
        raise CliError(str(exc), 2) from exc
    text = campaign.emit_fuzz_config(args.binary, args.rootfs, args.corpus, profile)
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "fuzz.conf").write_text(text, encoding="utf-8")
    if cfg.json_mode:
        d = {}
        for line in text.splitlines():
            k, _, v = line.partition("=")
            d[k] = json.loads(v) if k == "command" else v
        _emit_json(d)
    else:
        sys.stdout.write(text)
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--keys", default=argparse.SUPPRESS, help=f"keystore file (default ${ENV_KEYS})")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="emit JSON")
    common.add_argument("--log-level", default=argparse.SUPPRESS,
                        choices=["debug", "info", "warning", "error"])

    parser = argparse.ArgumentParser(prog="fwforge", parents=[common],
                                     description="IM*H firmware analysis toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        return p

    p = add("inspect", cmd_inspect, "print container header fields")
    p.add_argument("file")

    p = add("classify", cmd_classify, "classify files as encrypted / plain-signed / not a container")
    p.add_argument("files", nargs="+")

    p = add("decrypt", cmd_decrypt, "trial-decrypt one container")
    p.add_argument("file")

    p = add("batch", cmd_batch, "decrypt every file under a directory")
    p.add_argument("dir")
    p.add_argument("--files", action="store_true", help="include per-file results in JSON")

    p = add("pack", cmd_pack, "build a container (encryption oracle)")
    p.add_argument("payload")
    p.add_argument("--use", help="version label of the cipher key")
    p.add_argument("--plain", action="store_true", help="store payload unencrypted")
    p.add_argument("--sign", help="PEM private key, or 'test' for the bundled test key")
    p.add_argument("--auth-id", default=packer.DEFAULT_AUTH_ID)
    p.add_argument("--name", help="image name (<= 32 ASCII bytes)")
    p.add_argument("--chunk", action="append", default=[], metavar="NAME:START:SIZE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")

    p = add("gen-corpus", cmd_gen_corpus, "generate a synthetic corpus with ground-truth manifest")
    p.add_argument("--spec", required=True, help="JSON corpus spec")
    p.add_argument("--seed", type=int)

    p = add("keys", cmd_keys, "keystore maintenance")
    p.add_argument("action", choices=["validate", "list"])
    p.add_argument("file", nargs="?")

    p = add("deps", cmd_deps, "resolve shared-library closure")
    p.add_argument("binary")
    p.add_argument("--sysroot", action="append", required=True)

    p = add("rootfs", cmd_rootfs, "stage binary and its libraries into an emulation rootfs")
    p.add_argument("binary")
    p.add_argument("--sysroot", action="append", required=True)
    p.add_argument("--apply", action="store_true")
    p.add_argument("--allow-missing", action="store_true")

    p = add("campaign", cmd_campaign, "plan a fuzzing campaign under a power budget")
    p.add_argument("--profile", action="append", required=True,
                   help="name=..,exec_us=..[,battery_min=..][,memory_mb=..] or a preset")
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--csv", help="write wall time vs cycles CSV")
    p.add_argument("--cycles", type=int, nargs="+")

    p = add("fuzz-config", cmd_fuzz_config, "emit external fuzzer configuration")
    p.add_argument("binary")
    p.add_argument("--rootfs", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--profile", default="embedded-board")
    return parser


def _config(args) -> GlobalConfig:
    jobs = getattr(args, "jobs", None)
    return GlobalConfig(
        keystore_path=getattr(args, "keys", None) or os.environ.get(ENV_KEYS),
        output_dir=getattr(args, "out", None),
        jobs=(os.cpu_count() or 1) if jobs is None else jobs,
        log_level=getattr(args, "log_level", "warning"),
        json_mode=getattr(args, "json", False),
    )


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        cfg = _config(args)
        logging.basicConfig(level=getattr(logging, cfg.log_level.upper()), stream=sys.stderr,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args, cfg)
    except CliError as exc:
        print(f"fwforge: {exc}", file=sys.stderr)
        if exc.exit_code == 2:
            parser.print_usage(sys.stderr)
        return exc.exit_code
    except (FwForgeError, ValueError, OSError) as exc:
        print(f"fwforge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
