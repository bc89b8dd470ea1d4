"""Identifier-keyed, ordered 1-to-n dictionary of candidate key material.

File format: UTF-8 text, one record per line::

    identifier<TAB>version_label<TAB>hex_material[<TAB>role]

Lines starting with ``#`` and blank lines are ignored. Line order is the
order candidates are tried in.
"""

from __future__ import annotations

import enum
import string
from dataclasses import dataclass
from pathlib import Path

from fwforge.errors import BadHex, BadIdentifier, BadKeyLength, DuplicateVersionLabel, MalformedLine

CIPHER_KEY_LENGTHS = (16, 32)


class KeyRole(enum.Enum):
    AUTH_PUBLIC = "auth_public"
    PAYLOAD_CIPHER = "payload_cipher"

    @classmethod
    def parse(cls, text: str) -> "KeyRole":
        norm = text.strip().lower().replace("-", "_")
        aliases = {
            "auth_public": cls.AUTH_PUBLIC,
            "authpublic": cls.AUTH_PUBLIC,
            "auth": cls.AUTH_PUBLIC,
            "payload_cipher": cls.PAYLOAD_CIPHER,
            "payloadcipher": cls.PAYLOAD_CIPHER,
            "cipher": cls.PAYLOAD_CIPHER,
        }
        try:
            return aliases[norm]
        except KeyError:
            raise ValueError(f"unknown key role {text!r}") from None


def infer_role(identifier: str) -> KeyRole:
    # PRAK-style identifiers are auth (signature) keys.
    return KeyRole.AUTH_PUBLIC if identifier.startswith("PR") else KeyRole.PAYLOAD_CIPHER


def normalize_identifier(ident: str | bytes) -> str:
    if isinstance(ident, (bytes, bytearray)):
        try:
            ident = bytes(ident).decode("ascii")
        except UnicodeDecodeError:
            raise BadIdentifier(f"identifier {bytes(ident)!r} is not ASCII") from None
    if len(ident) != 4 or not ident.isascii() or not ident.isprintable():
        raise BadIdentifier(f"identifier must be 4 printable ASCII characters, got {ident!r}")
    return ident


@dataclass(frozen=True)
class KeyRecord:
    identifier: str
    version_label: str
    role: KeyRole
    material: bytes

    def __post_init__(self):
        normalize_identifier(self.identifier)
        if self.role is KeyRole.PAYLOAD_CIPHER and len(self.material) not in CIPHER_KEY_LENGTHS:
            raise BadKeyLength(
                f"{self.version_label}: cipher key must be 16 or 32 bytes, got {len(self.material)}"
            )


class KeyStore:
    """Immutable ordered mapping identifier -> candidate records."""

    def __init__(self, records=()):
        self._records = tuple(records)
        seen = set()
        by_id: dict[str, list[KeyRecord]] = {}
        for rec in self._records:
            if rec.version_label in seen:
                raise DuplicateVersionLabel(f"duplicate version label {rec.version_label!r}")
            seen.add(rec.version_label)
            by_id.setdefault(rec.identifier, []).append(rec)
        self._by_id = {k: tuple(v) for k, v in by_id.items()}

    @property
    def records(self) -> tuple[KeyRecord, ...]:
        return self._records

    @property
    def identifiers(self) -> list[str]:
        return list(self._by_id)

    def lookup(self, ident: str | bytes) -> list[KeyRecord]:
        try:
            ident = normalize_identifier(ident)
        except BadIdentifier:
            return []
        return list(self._by_id.get(ident, ()))

    def by_label(self, label: str) -> KeyRecord | None:
        for rec in self._records:
            if rec.version_label == label:
                return rec
        return None

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __eq__(self, other):
        if not isinstance(other, KeyStore):
            return NotImplemented
        return self._records == other._records

    def __hash__(self):
        return hash(self._records)

    def __repr__(self):
        return f"KeyStore({len(self._records)} records, identifiers={self.identifiers})"


def lookup(store: KeyStore, ident: str | bytes) -> list[KeyRecord]:
    return store.lookup(ident)


def _parse_hex(text: str, lineno: int) -> bytes:
    h = text.strip()
    if h[:2].lower() == "0x":
        h = h[2:]
    if not h or len(h) % 2 or any(ch not in string.hexdigits for ch in h):
        raise BadHex(f"invalid hex material {text!r}", line=lineno)
    return bytes.fromhex(h)


def load_keystore(text: str) -> KeyStore:
    records = []
    labels = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (3, 4):
            raise MalformedLine(f"expected 3 or 4 TAB-separated fields, got {len(parts)}", line=lineno)
        ident, label, hexmat = parts[0].strip(), parts[1].strip(), parts[2]
        try:
            ident = normalize_identifier(ident)
        except BadIdentifier as exc:
            raise BadIdentifier(str(exc), line=lineno) from None
        if not label:
            raise MalformedLine("empty version label", line=lineno)
        if label in labels:
            raise DuplicateVersionLabel(f"duplicate version label {label!r}", line=lineno)
        labels.add(label)
        material = _parse_hex(hexmat, lineno)
        if len(parts) == 4 and parts[3].strip():
            try:
                role = KeyRole.parse(parts[3])
            except ValueError as exc:
                raise MalformedLine(str(exc), line=lineno) from None
        else:
            role = infer_role(ident)
        try:
            records.append(KeyRecord(ident, label, role, material))
        except BadKeyLength as exc:
            raise BadKeyLength(str(exc), line=lineno) from None
    return KeyStore(records)


def save_keystore(store: KeyStore) -> str:
    lines = []
    for rec in store:
        fields = [rec.identifier, rec.version_label, rec.material.hex()]
        if rec.role is not infer_role(rec.identifier):
            fields.append(rec.role.value)
        lines.append("\t".join(fields))
    return "".join(line + "\n" for line in lines)


def load_keystore_file(path) -> KeyStore:
    return load_keystore(Path(path).read_text(encoding="utf-8"))


def record_to_dict(rec: KeyRecord) -> dict:
    return {
        "identifier": rec.identifier,
        "version_label": rec.version_label,
        "role": rec.role.value,
        "length": len(rec.material),
    }
