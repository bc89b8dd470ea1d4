"""Trial decryption of IM*H containers against a 1-to-n key dictionary.

For each encrypted image the encryption key identifier is read from the
header, every candidate for that identifier is tried in keystore order
(unwrap, decrypt, verify digest) and the first digest match wins.
"""

from __future__ import annotations

import enum
import logging
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from fwforge.container import (
    FileKind,
    FirmwareContainer,
    FirmwareHeader,
    ZERO_ID,
    decode_tag,
    parse_container,
)
from fwforge.crypto import (
    SignatureStatus,
    decrypt_payload,
    signed_region,
    unwrap_image_key,
    verify_payload_digest,
    verify_signature,
)
from fwforge.errors import BadLength, BadPadding, ChunkOutOfBounds, ContainerError
from fwforge.keystore import KeyRole, KeyStore

log = logging.getLogger(__name__)


class Status(enum.Enum):
    DECRYPTED = "decrypted"
    PLAIN_PASSTHROUGH = "plain_passthrough"
    NO_KEY_FOR_IDENTIFIER = "no_key_for_identifier"
    ALL_CANDIDATES_FAILED = "all_candidates_failed"
    PARSE_ERROR = "parse_error"
    IO_ERROR = "io_error"


@dataclass
class DecryptOutcome:
    input_path: str | None
    kind: FileKind
    status: Status
    attempts: int = 0
    payload_out: bytes | None = None
    key_version: str | None = None
    identifier: str | None = None
    detail: str | None = None
    # None when no signature or no auth key was available to check it.
    signature: SignatureStatus | None = None
    payload_size: int | None = None

    @property
    def ok(self) -> bool:
        return self.status in (Status.DECRYPTED, Status.PLAIN_PASSTHROUGH)

    def to_dict(self) -> dict:
        return {
            "path": self.input_path,
            "kind": self.kind.value,
            "status": self.status.value,
            "attempts": self.attempts,
            "key_version": self.key_version,
            "identifier": self.identifier,
            "detail": self.detail,
            "signature": self.signature.value if self.signature else None,
            "payload_size": len(self.payload_out) if self.payload_out is not None else self.payload_size,
        }


def check_signature(c: FirmwareContainer, store: KeyStore) -> SignatureStatus | None:
    h = c.header
    if h.rsa_sig_size == 0 or h.auth_key_id == ZERO_ID:
        return None
    candidates = [r for r in store.lookup(h.auth_key_id) if r.role is KeyRole.AUTH_PUBLIC]
    if not candidates:
        return None
    region = signed_region(h)
    seen = set()
    for rec in candidates:
        status = verify_signature(region, c.signature, rec)
        if status is SignatureStatus.VALID:
            return status
        seen.add(status)
    return SignatureStatus.INVALID if SignatureStatus.INVALID in seen else SignatureStatus.UNSUPPORTED


def decrypt_image(c: FirmwareContainer, store: KeyStore, input_path=None) -> DecryptOutcome:
    h = c.header
    path = str(input_path) if input_path is not None else None
    signature = check_signature(c, store)
    if not h.encrypted:
        return DecryptOutcome(
            path, FileKind.SIGNED_PLAIN_FILE, Status.PLAIN_PASSTHROUGH,
            payload_out=c.payload, signature=signature,
        )

    ident = decode_tag(h.enc_key_id)
    outcome = DecryptOutcome(path, FileKind.ENCRYPTED_IMAGE, Status.NO_KEY_FOR_IDENTIFIER,
                             identifier=ident, signature=signature)
    candidates = [r for r in store.lookup(h.enc_key_id) if r.role is KeyRole.PAYLOAD_CIPHER]
    if not candidates:
        outcome.detail = f"no key for identifier {ident!r}"
        return outcome

    outcome.status = Status.ALL_CANDIDATES_FAILED
    for rec in candidates:
        outcome.attempts += 1
        try:
            plain = decrypt_payload(c.payload, unwrap_image_key(h.scramble_key, rec))
        except (BadPadding, BadLength):
            continue
        if verify_payload_digest(plain, h.payload_digest):
            outcome.status = Status.DECRYPTED
            outcome.key_version = rec.version_label
            outcome.payload_out = plain
            return outcome
    outcome.detail = f"{outcome.attempts} candidate(s) for {ident!r} failed"
    return outcome


def decrypt_bytes(data: bytes, store: KeyStore, input_path=None):
    """Parse and decrypt; returns ``(outcome, header or None)``."""
    try:
        c = parse_container(data)
    except ContainerError as exc:
        return DecryptOutcome(
            str(input_path) if input_path is not None else None,
            FileKind.NOT_A_CONTAINER, Status.PARSE_ERROR,
            detail=f"{type(exc).__name__}: {exc}",
        ), None
    return decrypt_image(c, store, input_path), c.header


def decrypt_file(path, store: KeyStore):
    return decrypt_bytes(Path(path).read_bytes(), store, path)


def extract_chunks(o: DecryptOutcome, header: FirmwareHeader) -> list[tuple[str, bytes]]:
    if not o.ok or o.payload_out is None:
        raise ValueError(f"cannot extract chunks from outcome with status {o.status.value}")
    payload = o.payload_out
    if header.block_count == 0:
        return [(header.name or "payload", payload)]
    out = []
    for i, chunk in enumerate(header.chunks):
        if chunk.end > len(payload):
            raise ChunkOutOfBounds(
                f"chunk {i} ({chunk.label!r}) [{chunk.start_offset}, {chunk.end}) "
                f"outside {len(payload)}-byte payload"
            )
        out.append((chunk.label, payload[chunk.start_offset:chunk.end]))
    return out


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


def chunk_filename(name: str, used: set) -> str:
    base = _UNSAFE.sub("_", name) or "chunk"
    candidate, n = base, 1
    while candidate in used:
        candidate = f"{base}.{n}"
        n += 1
    used.add(candidate)
    return candidate


@dataclass
class CorpusReport:
    total_files: int = 0
    encrypted: int = 0
    decrypted: int = 0
    passthrough: int = 0
    failed_no_key: int = 0
    failed_all_keys: int = 0
    not_container: int = 0
    io_errors: int = 0
    # identifier -> [files carrying it, files decrypted]
    per_identifier: dict[str, list[int]] = field(default_factory=dict)
    files: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)

    @property
    def success_ratio(self) -> Decimal | None:
        if self.encrypted == 0:
            return None
        pct = Decimal(self.decrypted * 100) / Decimal(self.encrypted)
        return pct.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)

    @property
    def success_ratio_text(self) -> str:
        r = self.success_ratio
        return "n/a" if r is None else f"{r}%"

    def add(self, o: DecryptOutcome) -> None:
        self.total_files += 1
        if o.status is Status.IO_ERROR:
            self.io_errors += 1
        elif o.kind is FileKind.NOT_A_CONTAINER:
            self.not_container += 1
        elif o.kind is FileKind.SIGNED_PLAIN_FILE:
            self.passthrough += 1
        else:
            self.encrypted += 1
            tally = self.per_identifier.setdefault(o.identifier, [0, 0])
            tally[0] += 1
            if o.status is Status.DECRYPTED:
                self.decrypted += 1
                tally[1] += 1
            elif o.status is Status.NO_KEY_FOR_IDENTIFIER:
                self.failed_no_key += 1
            else:
                self.failed_all_keys += 1
        self.files.append(o.to_dict())

    @classmethod
    def from_outcomes(cls, outcomes) -> "CorpusReport":
        report = cls()
        for o in sorted(outcomes, key=lambda o: o.input_path or ""):
            report.add(o)
        report.per_identifier = dict(sorted(report.per_identifier.items()))
        return report

    def to_dict(self, include_files: bool = True) -> dict:
        d = {
            "total_files": self.total_files,
            "encrypted": self.encrypted,
            "decrypted": self.decrypted,
            "passthrough": self.passthrough,
            "failed_no_key": self.failed_no_key,
            "failed_all_keys": self.failed_all_keys,
            "not_container": self.not_container,
            "io_errors": self.io_errors,
            "per_identifier": {
                k: {"tried": v[0], "succeeded": v[1]} for k, v in self.per_identifier.items()
            },
            "success_ratio": self.success_ratio_text,
            "errors": self.errors,
        }
        if include_files:
            d["files"] = self.files
        return d

    def render_table(self) -> str:
        rows = [
            ("total files", self.total_files),
            ("encrypted", self.encrypted),
            ("decrypted", self.decrypted),
            ("plain (signature only)", self.passthrough),
            ("failed: no key for identifier", self.failed_no_key),
            ("failed: all candidates", self.failed_all_keys),
            ("not a container", self.not_container),
            ("i/o errors", self.io_errors),
        ]
        width = max(len(r[0]) for r in rows)
        lines = [f"{label:<{width}}  {value:>8}" for label, value in rows]
        for ident, (tried, ok) in self.per_identifier.items():
            lines.append(f"  {ident:<{width - 2}}  {ok:>4}/{tried:<4}")
        lines.append(
            f"decrypted {self.decrypted} files ({self.success_ratio_text}) "
            f"out of {self.encrypted} encrypted files"
        )
        return "\n".join(lines)


def _process_file(path: Path, rel: str, store: KeyStore, out_dir: Path):
    """Worker: decrypt one corpus file and write its outputs. Returns (outcome, errors)."""
    errors = []
    try:
        data = path.read_bytes()
    except OSError as exc:
        return DecryptOutcome(rel, FileKind.NOT_A_CONTAINER, Status.IO_ERROR, detail=str(exc)), [
            {"path": rel, "error": f"read failed: {exc}"}
        ]
    outcome, header = decrypt_bytes(data, store, rel)
    if outcome.ok:
        target = out_dir / rel
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.with_name(target.name + ".dec").write_bytes(outcome.payload_out)
            if header.block_count:
                used = set()
                for name, blob in extract_chunks(outcome, header):
                    fname = f"{target.name}.chunk.{chunk_filename(name, used)}"
                    target.with_name(fname).write_bytes(blob)
        except ChunkOutOfBounds as exc:
            errors.append({"path": rel, "error": str(exc)})
        except OSError as exc:
            errors.append({"path": rel, "error": f"write failed: {exc}"})
    # Payloads stay on disk; keep worker results small.
    if outcome.payload_out is not None:
        outcome.payload_size = len(outcome.payload_out)
        outcome.payload_out = None
    return outcome, errors


def _process_star(args):
    return _process_file(*args)


def iter_corpus(corpus_dir: Path, exclude: Path | None = None):
    for dirpath, dirnames, filenames in os.walk(corpus_dir):
        d = Path(dirpath)
        if exclude is not None:
            dirnames[:] = [n for n in dirnames if (d / n).resolve() != exclude]
        for name in filenames:
            p = d / name
            if p.is_file():
                yield p


def batch_decrypt(corpus_dir, store: KeyStore, out_dir, jobs: int = 1) -> CorpusReport:
    corpus_dir = Path(corpus_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = sorted(iter_corpus(corpus_dir, exclude=out_dir.resolve()))
    tasks = [(p, p.relative_to(corpus_dir).as_posix(), store, out_dir) for p in files]

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_process_star, tasks, chunksize=max(1, len(tasks) // (jobs * 4))))
    else:
        results = [_process_file(*t) for t in tasks]

    report = CorpusReport.from_outcomes([o for o, _ in results])
    report.errors = sorted((e for _, errs in results for e in errs), key=lambda e: e["path"])
    log.info("batch: %s", report.success_ratio_text)
    return report


def summarize_counts(decrypted: int, encrypted: int) -> str:
    """Format a decrypted/encrypted pair the way reports do."""
    report = CorpusReport(encrypted=encrypted, decrypted=decrypted)
    return report.success_ratio_text

