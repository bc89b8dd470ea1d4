"""IM*H firmware container: header layout, parsing and serialization.

Byte layout (all integers little-endian)::

    off  size  field
      0     4  magic "IM*H"
      4     4  format_version
      8     8  reserved_a
     16     4  header_size        (192 + 16 * block_count)
     20     4  rsa_sig_size
     24     4  payload_size
     28     4  reserved_b
     32     8  reserved_c
     40     4  auth_key_id
     44     4  enc_key_id         (all zero: payload stored in the clear)
     48    16  scramble_key
     64    32  image_name
     96    48  reserved_d
    144    12  reserved_e
    156     4  block_count
    160    32  payload_digest     (SHA-256 of the decrypted payload)
    192  16*n  chunk table: name[4] start_offset u32 output_size u32 attributes u32

The header is followed by ``rsa_sig_size`` bytes of signature and then
``payload_size`` bytes of payload. Reserved regions are carried opaquely.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass, field

from fwforge.errors import (
    BadMagic,
    ContainerError,
    InconsistentHeader,
    InvariantViolation,
    SizeMismatch,
    TruncatedHeader,
)

log = logging.getLogger(__name__)

MAGIC = b"IM*H"
ZERO_ID = b"\x00" * 4

_HEADER = struct.Struct("<4sI8sIII4s8s4s4s16s32s48s12sI32s")
_CHUNK = struct.Struct("<4sIII")

HEADER_FIXED_SIZE = _HEADER.size
CHUNK_ENTRY_SIZE = _CHUNK.size
assert HEADER_FIXED_SIZE == 192 and CHUNK_ENTRY_SIZE == 16

CHUNK_ATTR_ENCRYPTED = 0x1

_U32_MAX = 0xFFFFFFFF

_BYTE_FIELDS = {
    "magic": 4,
    "reserved_a": 8,
    "reserved_b": 4,
    "reserved_c": 8,
    "auth_key_id": 4,
    "enc_key_id": 4,
    "scramble_key": 16,
    "image_name": 32,
    "reserved_d": 48,
    "reserved_e": 12,
    "payload_digest": 32,
}


def expected_header_size(block_count: int) -> int:
    return HEADER_FIXED_SIZE + CHUNK_ENTRY_SIZE * block_count


def encode_image_name(name: str) -> bytes:
    raw = name.encode("ascii")
    if len(raw) > 32:
        raise ValueError(f"image name longer than 32 bytes: {name!r}")
    return raw.ljust(32, b"\x00")


def decode_tag(raw: bytes) -> str:
    """Render a fixed-width ASCII tag, dropping NUL/space padding."""
    return raw.rstrip(b"\x00 ").decode("ascii", errors="replace")


@dataclass(frozen=True)
class ChunkEntry:
    name: bytes
    start_offset: int
    output_size: int
    attributes: int = 0

    @property
    def end(self) -> int:
        return self.start_offset + self.output_size

    @property
    def encrypted(self) -> bool:
        return bool(self.attributes & CHUNK_ATTR_ENCRYPTED)

    @property
    def label(self) -> str:
        return decode_tag(self.name)


@dataclass(frozen=True)
class FirmwareHeader:
    magic: bytes = MAGIC
    format_version: int = 1
    reserved_a: bytes = bytes(8)
    header_size: int = HEADER_FIXED_SIZE
    rsa_sig_size: int = 0
    payload_size: int = 0
    reserved_b: bytes = bytes(4)
    reserved_c: bytes = bytes(8)
    auth_key_id: bytes = ZERO_ID
    enc_key_id: bytes = ZERO_ID
    scramble_key: bytes = bytes(16)
    image_name: bytes = bytes(32)
    reserved_d: bytes = bytes(48)
    reserved_e: bytes = bytes(12)
    block_count: int = 0
    payload_digest: bytes = bytes(32)
    chunks: tuple[ChunkEntry, ...] = field(default_factory=tuple)

    @property
    def encrypted(self) -> bool:
        return self.enc_key_id != ZERO_ID

    @property
    def name(self) -> str:
        return decode_tag(self.image_name)


@dataclass(frozen=True)
class FirmwareContainer:
    header: FirmwareHeader
    signature: bytes = b""
    payload: bytes = b""

    @property
    def total_size(self) -> int:
        h = self.header
        return h.header_size + h.rsa_sig_size + h.payload_size


class FileKind(enum.Enum):
    ENCRYPTED_IMAGE = "encrypted_image"
    SIGNED_PLAIN_FILE = "signed_plain_file"
    NOT_A_CONTAINER = "not_a_container"


def make_header(**fields) -> FirmwareHeader:
    """Build a header with ``header_size`` and ``block_count`` derived from ``chunks``."""
    chunks = tuple(fields.pop("chunks", ()))
    return FirmwareHeader(
        chunks=chunks,
        block_count=len(chunks),
        header_size=expected_header_size(len(chunks)),
        **fields,
    )


def parse_header(data: bytes) -> FirmwareHeader:
    if bytes(data[:4]) != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {bytes(data[:4])!r}")
    if len(data) < HEADER_FIXED_SIZE:
        raise TruncatedHeader(f"{len(data)} bytes is shorter than the {HEADER_FIXED_SIZE}-byte fixed header")
    (
        magic, format_version, reserved_a, header_size, rsa_sig_size, payload_size,
        reserved_b, reserved_c, auth_key_id, enc_key_id, scramble_key, image_name,
        reserved_d, reserved_e, block_count, payload_digest,
    ) = _HEADER.unpack_from(data, 0)

    if header_size != expected_header_size(block_count):
        raise InconsistentHeader(
            f"header_size {header_size} != 192 + 16 * block_count ({block_count})"
        )
    if len(data) < header_size:
        raise TruncatedHeader(f"chunk table needs {header_size} bytes, have {len(data)}")

    chunks = []
    for i in range(block_count):
        name, start, size, attrs = _CHUNK.unpack_from(data, HEADER_FIXED_SIZE + i * CHUNK_ENTRY_SIZE)
        if start + size > _U32_MAX:
            raise InconsistentHeader(f"chunk {i} end offset overflows 32 bits")
        if start + size > payload_size:
            raise InconsistentHeader(
                f"chunk {i} [{start}, {start + size}) exceeds payload_size {payload_size}"
            )
        chunks.append(ChunkEntry(name, start, size, attrs))

    return FirmwareHeader(
        magic=magic,
        format_version=format_version,
        reserved_a=reserved_a,
        header_size=header_size,
        rsa_sig_size=rsa_sig_size,
        payload_size=payload_size,
        reserved_b=reserved_b,
        reserved_c=reserved_c,
        auth_key_id=auth_key_id,
        enc_key_id=enc_key_id,
        scramble_key=scramble_key,
        image_name=image_name,
        reserved_d=reserved_d,
        reserved_e=reserved_e,
        block_count=block_count,
        payload_digest=payload_digest,
        chunks=tuple(chunks),
    )


def parse_container(data: bytes) -> FirmwareContainer:
    """Parse an IM*H container from the start of ``data``.

    Bytes past the declared end are ignored with a logged warning.
    """
    header = parse_header(data)
    sig_end = header.header_size + header.rsa_sig_size
    end = sig_end + header.payload_size
    if end > len(data):
        raise SizeMismatch(f"declared container size {end} exceeds available {len(data)} bytes")
    if end < len(data):
        log.warning("%d trailing bytes after declared container end", len(data) - end)
    return FirmwareContainer(
        header=header,
        signature=bytes(data[header.header_size:sig_end]),
        payload=bytes(data[sig_end:end]),
    )


def _check_header(h: FirmwareHeader) -> None:
    if h.magic != MAGIC:
        raise InvariantViolation(f"magic must be {MAGIC!r}")
    for name, size in _BYTE_FIELDS.items():
        value = getattr(h, name)
        if not isinstance(value, (bytes, bytearray)) or len(value) != size:
            raise InvariantViolation(f"{name} must be {size} bytes")
    for name in ("format_version", "header_size", "rsa_sig_size", "payload_size", "block_count"):
        if not 0 <= getattr(h, name) <= _U32_MAX:
            raise InvariantViolation(f"{name} out of u32 range")
    if len(h.chunks) != h.block_count:
        raise InvariantViolation(f"block_count {h.block_count} != {len(h.chunks)} chunk entries")
    if h.header_size != expected_header_size(h.block_count):
        raise InvariantViolation(f"header_size {h.header_size} inconsistent with block_count {h.block_count}")
    for i, c in enumerate(h.chunks):
        if len(c.name) != 4:
            raise InvariantViolation(f"chunk {i} name must be 4 bytes")
        if not (0 <= c.start_offset <= _U32_MAX and 0 <= c.output_size <= _U32_MAX
                and 0 <= c.attributes <= _U32_MAX):
            raise InvariantViolation(f"chunk {i} field out of u32 range")
        if c.end > h.payload_size:
            raise InvariantViolation(f"chunk {i} exceeds payload_size")


def serialize_header(h: FirmwareHeader) -> bytes:
    _check_header(h)
    out = bytearray(_HEADER.pack(
        h.magic, h.format_version, h.reserved_a, h.header_size, h.rsa_sig_size,
        h.payload_size, h.reserved_b, h.reserved_c, h.auth_key_id, h.enc_key_id,
        h.scramble_key, h.image_name, h.reserved_d, h.reserved_e, h.block_count,
        h.payload_digest,
    ))
    for c in h.chunks:
        out += _CHUNK.pack(c.name, c.start_offset, c.output_size, c.attributes)
    return bytes(out)


def serialize_container(c: FirmwareContainer) -> bytes:
    h = c.header
    if len(c.signature) != h.rsa_sig_size:
        raise InvariantViolation(f"signature is {len(c.signature)} bytes, header says {h.rsa_sig_size}")
    if len(c.payload) != h.payload_size:
        raise InvariantViolation(f"payload is {len(c.payload)} bytes, header says {h.payload_size}")
    return serialize_header(h) + c.signature + c.payload


def classify_file(data: bytes) -> FileKind:
    try:
        c = parse_container(data)
    except ContainerError:
        return FileKind.NOT_A_CONTAINER
    if c.header.encrypted:
        return FileKind.ENCRYPTED_IMAGE
    return FileKind.SIGNED_PLAIN_FILE


def header_to_dict(h: FirmwareHeader) -> dict:
    """JSON-friendly view; opaque byte fields are hex encoded."""
    return {
        "magic": decode_tag(h.magic),
        "format_version": h.format_version,
        "reserved_a": h.reserved_a.hex(),
        "header_size": h.header_size,
        "rsa_sig_size": h.rsa_sig_size,
        "payload_size": h.payload_size,
        "reserved_b": h.reserved_b.hex(),
        "reserved_c": h.reserved_c.hex(),
        "auth_key_id": decode_tag(h.auth_key_id) if h.auth_key_id != ZERO_ID else None,
        "enc_key_id": decode_tag(h.enc_key_id) if h.encrypted else None,
        "scramble_key": h.scramble_key.hex(),
        "image_name": h.name,
        "reserved_d": h.reserved_d.hex(),
        "reserved_e": h.reserved_e.hex(),
        "block_count": h.block_count,
        "payload_digest": h.payload_digest.hex(),
        "chunks": [
            {
                "name": c.label,
                "start_offset": c.start_offset,
                "output_size": c.output_size,
                "attributes": c.attributes,
            }
            for c in h.chunks
        ],
    }
