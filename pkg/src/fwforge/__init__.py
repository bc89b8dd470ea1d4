"""IM*H firmware container toolkit: parse, decrypt, re-pack, triage, stage, plan."""

from fwforge.container import (
    ChunkEntry,
    FileKind,
    FirmwareContainer,
    FirmwareHeader,
    classify_file,
    parse_container,
    serialize_container,
)
from fwforge.keystore import KeyRecord, KeyRole, KeyStore, load_keystore, lookup, save_keystore

__version__ = "0.1.0"

__all__ = [
    "ChunkEntry",
    "FileKind",
    "FirmwareContainer",
    "FirmwareHeader",
    "KeyRecord",
    "KeyRole",
    "KeyStore",
    "classify_file",
    "load_keystore",
    "lookup",
    "parse_container",
    "save_keystore",
    "serialize_container",
]
