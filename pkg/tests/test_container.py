import struct
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fwforge import packer
from fwforge.container import (
    ChunkEntry,
    FileKind,
    FirmwareContainer,
    classify_file,
    make_header,
    parse_container,
    serialize_container,
)
from fwforge.errors import BadMagic, InconsistentHeader, InvariantViolation, SizeMismatch, TruncatedHeader


def hand_header(block_count=0, payload_size=0, rsa_sig_size=0, enc_id=b"\x00" * 4, chunks=()):
    """Header layout written out field by field, independent of the library's struct."""
    fields = [
        b"IM*H",                                   # magic
        struct.pack("<I", 1),                      # version
        bytes(8),                                  # unknown
        struct.pack("<I", 192 + 16 * block_count), # header size
        struct.pack("<I", rsa_sig_size),
        struct.pack("<I", payload_size),
        bytes(4),                                  # unknown
        bytes(8),                                  # unknown
        b"PRAK",                                   # auth key id
        enc_id,                                    # encryption key id
        bytes(16),                                 # scramble key
        b"fixture".ljust(32, b"\x00"),             # image name
        bytes(48),                                 # unknown
        bytes(12),                                 # unknown
        struct.pack("<I", block_count),
        bytes(32),                                 # sha256 payload
    ]
    head = b"".join(fields)
    assert len(head) == 192
    for name, start, size, attrs in chunks:
        head += name + struct.pack("<III", start, size, attrs)
    return head


def test_zero_chunk_header_parses_and_roundtrips():
    raw = hand_header()
    c = parse_container(raw)
    assert c.header.header_size == 192
    assert c.header.block_count == 0
    assert c.signature == b"" and c.payload == b""
    assert c.header.name == "fixture"
    assert serialize_container(c) == raw


def test_two_chunk_header_reads_224_bytes():
    chunks = [(b"AAAA", 0, 16, 1), (b"BBBB", 16, 16, 0x80000000)]
    raw = hand_header(block_count=2, payload_size=32, chunks=chunks) + bytes(range(32))
    c = parse_container(raw)
    assert c.header.header_size == 224
    assert [(e.name, e.start_offset, e.output_size, e.attributes) for e in c.header.chunks] == chunks
    assert c.payload == bytes(range(32))
    assert serialize_container(c) == raw


def test_bad_magic():
    with pytest.raises(BadMagic):
        parse_container(b"XXXX" + bytes(188))


def test_short_buffer_is_truncated():
    with pytest.raises(TruncatedHeader):
        parse_container(b"IM*H" + bytes(100))


def test_chunk_table_truncated():
    raw = hand_header(block_count=2, payload_size=32)[:192 + 8]
    with pytest.raises(TruncatedHeader):
        parse_container(raw)


def test_inconsistent_header_size():
    raw = bytearray(hand_header())
    raw[16:20] = struct.pack("<I", 200)
    with pytest.raises(InconsistentHeader):
        parse_container(bytes(raw))


def test_declared_sizes_exceed_data():
    with pytest.raises(SizeMismatch):
        parse_container(hand_header(payload_size=64) + bytes(10))


def test_chunk_beyond_payload_is_inconsistent():
    raw = hand_header(block_count=1, payload_size=8, chunks=[(b"AAAA", 4, 8, 0)]) + bytes(8)
    with pytest.raises(InconsistentHeader):
        parse_container(raw)


def test_chunk_end_overflow_is_inconsistent():
    raw = hand_header(block_count=1, payload_size=8, chunks=[(b"AAAA", 0xFFFFFFF0, 0x20, 0)]) + bytes(8)
    with pytest.raises(InconsistentHeader):
        parse_container(raw)


def test_trailing_bytes_warn_but_parse(caplog):
    raw = hand_header()
    c = parse_container(raw + b"\x00" * 7)
    assert serialize_container(c) == raw
    assert "trailing" in caplog.text


def test_one_chunk_header_region_is_208():
    h = make_header(payload_size=4, chunks=[ChunkEntry(b"ABCD", 0, 4)])
    out = serialize_container(FirmwareContainer(h, b"", b"wxyz"))
    assert h.header_size == 208
    assert len(out) == 208 + 4


def test_length_additivity():
    h = make_header(payload_size=32, rsa_sig_size=256)
    out = serialize_container(FirmwareContainer(h, bytes(256), bytes(32)))
    assert len(out) == 192 + 256 + 32


def test_serialize_rejects_invariant_violations():
    h = make_header(payload_size=4)
    with pytest.raises(InvariantViolation):
        serialize_container(FirmwareContainer(h, b"", b"abc"))
    with pytest.raises(InvariantViolation):
        serialize_container(FirmwareContainer(replace(h, block_count=1), b"", bytes(4)))
    with pytest.raises(InvariantViolation):
        serialize_container(FirmwareContainer(replace(h, header_size=193), b"", bytes(4)))


def test_opaque_regions_preserved():
    raw = bytearray(hand_header())
    for lo, hi in ((8, 16), (28, 32), (32, 40), (96, 144), (144, 156)):
        raw[lo:hi] = bytes((i * 37 + lo) & 0xFF for i in range(hi - lo))
    assert serialize_container(parse_container(bytes(raw))) == bytes(raw)


def test_space_padded_image_name_accepted():
    raw = bytearray(hand_header())
    raw[64:96] = b"camera".ljust(32, b" ")
    assert parse_container(bytes(raw)).header.name == "camera"


def test_classify(rrek_key, signing_key):
    assert classify_file(hand_header(enc_id=b"RREK")) is FileKind.ENCRYPTED_IMAGE
    assert classify_file(hand_header()) is FileKind.SIGNED_PLAIN_FILE
    assert classify_file(b"[main]\nkey=value\n") is FileKind.NOT_A_CONTAINER
    assert classify_file(b"") is FileKind.NOT_A_CONTAINER
    plain = packer.pack_image(b"config=1\n", "cfg", None, signing_key)
    assert classify_file(plain) is FileKind.SIGNED_PLAIN_FILE
    enc = packer.pack_image(b"config=1\n", "cfg", rrek_key, signing_key)
    assert classify_file(enc) is FileKind.ENCRYPTED_IMAGE


@settings(max_examples=60, deadline=None)
@given(n=st.integers(0, 64), data=st.data())
def test_header_size_law(n, data):
    payload_size = data.draw(st.integers(0, 4096))
    chunks = []
    for i in range(n):
        start = data.draw(st.integers(0, payload_size))
        size = data.draw(st.integers(0, payload_size - start))
        chunks.append(ChunkEntry(b"c%03d" % i, start, size, data.draw(st.integers(0, 2**32 - 1))))
    h = make_header(payload_size=payload_size, chunks=chunks)
    c = FirmwareContainer(h, b"", data.draw(st.binary(min_size=payload_size, max_size=payload_size)))
    raw = serialize_container(c)
    assert h.header_size == 192 + 16 * n
    parsed = parse_container(raw)
    assert parsed == c
    assert serialize_container(parsed) == raw


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=600))
def test_classify_total_and_deterministic(blob):
    assert classify_file(blob) is classify_file(blob)


@settings(max_examples=200, deadline=None)
@given(extra=st.binary(max_size=64))
def test_offset_law(extra):
    raw = hand_header(payload_size=16) + bytes(16)
    c = parse_container(raw + extra)
    assert c.total_size == len(raw)
    assert serialize_container(c) == raw
