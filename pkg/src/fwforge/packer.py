"""Encryption oracle and synthetic corpus generator.

Everything here is deterministic given ``(seed, inputs)``: image keys come
from a seeded :class:`random.Random`, RSA PKCS#1 v1.5 signatures are
deterministic, and corpus files use per-file seeds ``seed ^ index``.
"""

from __future__ import annotations

import json
import random
import string
from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path

from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding as asym_padding
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from fwforge.container import (
    CHUNK_ATTR_ENCRYPTED,
    ZERO_ID,
    ChunkEntry,
    FirmwareContainer,
    make_header,
    serialize_container,
)
from fwforge.crypto import BLOCK, ZERO_IV, ImageKey, sha256, signed_region
from fwforge.errors import ChunkOutOfBounds, NameTooLong
from fwforge.keystore import KeyRecord, KeyRole, KeyStore

DEFAULT_AUTH_ID = "PRAK"


def load_test_signing_key():
    """The bundled RSA-2048 key used to sign oracle images. Test use only."""
    pem = resources.files("fwforge").joinpath("data/test_signing_key.pem").read_bytes()
    return serialization.load_pem_private_key(pem, password=None)


def load_signing_key(path):
    return serialization.load_pem_private_key(Path(path).read_bytes(), password=None)


def public_key_der(private_key) -> bytes:
    return private_key.public_key().public_bytes(
        serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
    )


def auth_record(private_key, identifier=DEFAULT_AUTH_ID, version_label=None) -> KeyRecord:
    return KeyRecord(identifier, version_label or f"{identifier}-TEST", KeyRole.AUTH_PUBLIC,
                     public_key_der(private_key))


def wrap_image_key(image_key: ImageKey, store_key) -> bytes:
    kek = bytes(getattr(store_key, "material", store_key))
    enc = Cipher(algorithms.AES(kek), modes.ECB()).encryptor()
    return enc.update(image_key.material) + enc.finalize()


def encrypt_payload(plain: bytes, key: ImageKey) -> bytes:
    pad = BLOCK - len(plain) % BLOCK
    enc = Cipher(algorithms.AES(key.material), modes.CBC(ZERO_IV)).encryptor()
    return enc.update(bytes(plain) + bytes([pad]) * pad) + enc.finalize()


def _ascii_field(text: str, size: int) -> bytes:
    try:
        raw = text.encode("ascii")
    except UnicodeEncodeError:
        raise NameTooLong(f"{text!r} is not ASCII") from None
    if len(raw) > size:
        raise NameTooLong(f"{text!r} is longer than {size} bytes")
    return raw.ljust(size, b"\x00")


def pack_image(
    payload: bytes,
    image_name: str,
    enc_key: KeyRecord | None = None,
    auth_key=None,
    chunk_plan=(),
    seed: int = 0,
    *,
    auth_key_id: str = DEFAULT_AUTH_ID,
    format_version: int = 1,
) -> bytes:
    """Build a serialized IM*H container around ``payload``.

    ``auth_key`` is an RSA private key; when given, the header carries
    ``auth_key_id`` and a signature over :func:`fwforge.crypto.signed_region`.
    Chunk offsets in ``chunk_plan`` are in plaintext coordinates.
    """
    name = _ascii_field(image_name, 32)
    plan = []
    for i, c in enumerate(chunk_plan):
        if c.start_offset < 0 or c.output_size < 0 or c.end > len(payload):
            raise ChunkOutOfBounds(f"chunk {i} [{c.start_offset}, {c.end}) outside {len(payload)}-byte payload")
        if enc_key is not None:
            attrs = c.attributes | CHUNK_ATTR_ENCRYPTED
        else:
            attrs = c.attributes & ~CHUNK_ATTR_ENCRYPTED
        plan.append(replace(c, attributes=attrs))

    if enc_key is not None:
        if enc_key.role is not KeyRole.PAYLOAD_CIPHER:
            raise ValueError(f"{enc_key.version_label} is not a payload cipher key")
        image_key = ImageKey(random.Random(seed).randbytes(16))
        body = encrypt_payload(payload, image_key)
        scramble = wrap_image_key(image_key, enc_key)
        enc_id = enc_key.identifier.encode("ascii")
    else:
        body, scramble, enc_id = bytes(payload), bytes(16), ZERO_ID

    sig_size = auth_key.key_size // 8 if auth_key is not None else 0
    header = make_header(
        format_version=format_version,
        rsa_sig_size=sig_size,
        payload_size=len(body),
        auth_key_id=_ascii_field(auth_key_id, 4) if auth_key is not None else ZERO_ID,
        enc_key_id=enc_id,
        scramble_key=scramble,
        image_name=name,
        payload_digest=sha256(payload),
        chunks=plan,
    )
    signature = b""
    if auth_key is not None:
        signature = auth_key.sign(signed_region(header), asym_padding.PKCS1v15(), hashes.SHA256())
    return serialize_container(FirmwareContainer(header, signature, body))


@dataclass(frozen=True)
class CorpusSpec:
    seed: int = 0
    n_encrypted_known: int = 0
    n_encrypted_unknown: int = 0
    n_plain: int = 0
    n_garbage: int = 0
    payload_size_range: tuple[int, int] = (16, 4096)
    chunk_count_range: tuple[int, int] = (0, 4)
    sign: bool = True

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        for name in ("n_encrypted_known", "n_encrypted_unknown", "n_plain", "n_garbage"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("payload_size_range", "chunk_count_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or lo > hi:
                raise ValueError(f"{name} must be a non-empty range of non-negative values")
        object.__setattr__(self, "payload_size_range", tuple(self.payload_size_range))
        object.__setattr__(self, "chunk_count_range", tuple(self.chunk_count_range))

    @property
    def total(self) -> int:
        return self.n_encrypted_known + self.n_encrypted_unknown + self.n_plain + self.n_garbage

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown corpus spec fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["payload_size_range"] = list(self.payload_size_range)
        d["chunk_count_range"] = list(self.chunk_count_range)
        return d


def random_chunk_plan(rng: random.Random, payload_len: int, count: int) -> list[ChunkEntry]:
    """Contiguous chunks tiling ``payload_len`` (some may be empty)."""
    cuts = sorted(rng.randint(0, payload_len) for _ in range(max(count - 1, 0)))
    bounds = [0, *cuts, payload_len] if count else []
    plan = []
    for i in range(count):
        name = f"c{i:03d}".encode("ascii")
        plan.append(ChunkEntry(name, bounds[i], bounds[i + 1] - bounds[i], rng.getrandbits(8) << 8))
    return plan


def random_identifier(rng: random.Random, taken) -> str:
    while True:
        ident = "".join(rng.choice(string.ascii_uppercase) for _ in range(2)) + "EK"
        if ident not in taken and not ident.startswith("PR"):
            return ident


def synthetic_keystore(seed: int, families=(("RREK", 3), ("IAEK", 2), ("UFIE", 2)),
                       key_bytes: int = 16, signing_key=None) -> KeyStore:
    """Random cipher keys under the given identifier families, plus an auth record."""
    rng = random.Random(seed)
    records = []
    for ident, n in families:
        for k in range(n):
            records.append(KeyRecord(ident, f"{ident}-SYN-{k:02d}", KeyRole.PAYLOAD_CIPHER,
                                     rng.randbytes(key_bytes)))
    if signing_key is not None:
        records.append(auth_record(signing_key))
    return KeyStore(records)


def _garbage(rng: random.Random, i: int) -> tuple[str, bytes]:
    if rng.random() < 0.5:
        lines = [f"[section{j}]\nkey{j}={rng.getrandbits(32):08x}" for j in range(rng.randint(1, 8))]
        return f"settings_{i:04d}.ini", ("\n".join(lines) + "\n").encode()
    body = rng.randbytes(rng.randint(0, 512))
    if body[:4] == b"IM*H":
        body = b"\x00" + body
    return f"blob_{i:04d}.cfg", body


def generate_corpus(spec: CorpusSpec, store: KeyStore, dir, signing_key=None) -> list[dict]:
    """Write a synthetic corpus and return its ground-truth manifest.

    Manifest entries: ``{"path", "kind", "key_version"}`` where ``kind`` is
    ``encrypted_known``, ``encrypted_unknown``, ``plain`` or ``garbage``.
    """
    out = Path(dir)
    ciphers = [r for r in store if r.role is KeyRole.PAYLOAD_CIPHER]
    if spec.n_encrypted_known and not ciphers:
        raise ValueError("keystore has no payload cipher keys for known-key images")
    if spec.sign and signing_key is None:
        signing_key = load_test_signing_key()
    signer = signing_key if spec.sign else None

    kinds = (["encrypted_known"] * spec.n_encrypted_known
             + ["encrypted_unknown"] * spec.n_encrypted_unknown
             + ["plain"] * spec.n_plain
             + ["garbage"] * spec.n_garbage)
    random.Random(spec.seed).shuffle(kinds)
    taken = set(store.identifiers)
    cipher_ids = sorted({r.identifier for r in ciphers})

    manifest = []
    out.mkdir(parents=True, exist_ok=True)
    for i, kind in enumerate(kinds):
        rng = random.Random(spec.seed ^ i)
        subdir = f"grp{rng.randrange(4)}"
        key_version = None
        if kind == "garbage":
            fname, data = _garbage(rng, i)
        else:
            payload = rng.randbytes(rng.randint(*spec.payload_size_range))
            plan = random_chunk_plan(rng, len(payload), rng.randint(*spec.chunk_count_range))
            pack_seed = rng.getrandbits(64)
            if kind == "encrypted_known":
                key = rng.choice(ciphers)
                key_version = key.version_label
            elif kind == "encrypted_unknown":
                # Withheld key: either a known family (all candidates fail) or a foreign one.
                if cipher_ids and rng.random() < 0.5:
                    ident = rng.choice(cipher_ids)
                else:
                    ident = random_identifier(rng, taken)
                key = KeyRecord(ident, f"{ident}-WITHHELD-{i:04d}", KeyRole.PAYLOAD_CIPHER,
                                rng.randbytes(16))
            else:
                key = None
            fname = f"fw_{i:04d}.bin"
            data = pack_image(payload, f"img_{i:04d}", key, signer, plan, pack_seed)
        rel = f"{subdir}/{fname}"
        (out / subdir).mkdir(exist_ok=True)
        (out / rel).write_bytes(data)
        manifest.append({"path": rel, "kind": kind, "key_version": key_version})
    return manifest


def write_manifest(manifest, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
