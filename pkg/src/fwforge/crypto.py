"""Key unwrap, payload decryption, digest and signature checks.

Scheme (compatible by construction with :mod:`fwforge.packer`):

* ``scramble_key`` is the 16-byte per-image key encrypted as one AES-ECB
  block under the keystore key (AES-128 or AES-256 by key length).
* The payload is AES-128-CBC under the image key, zero IV, PKCS#7 padded.
* ``payload_digest`` is SHA-256 of the plaintext payload.
* The signature is RSA PKCS#1 v1.5 / SHA-256 over the serialized header
  region followed by ``payload_digest``.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, UnsupportedAlgorithm
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding as asym_padding
from cryptography.hazmat.primitives.asymmetric import rsa
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from fwforge.container import FirmwareHeader, serialize_header
from fwforge.errors import BadKeyLength, BadLength, BadPadding

BLOCK = 16
ZERO_IV = bytes(BLOCK)


@dataclass(frozen=True)
class ImageKey:
    material: bytes

    def __post_init__(self):
        if len(self.material) != 16:
            raise BadKeyLength(f"image key must be 16 bytes, got {len(self.material)}")


class SignatureStatus(enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    UNSUPPORTED = "unsupported"


def _material(key) -> bytes:
    return bytes(getattr(key, "material", key))


def unwrap_image_key(scramble_key: bytes, store_key) -> ImageKey:
    """Decrypt the wrapped per-image key with a keystore cipher key.

    ``store_key`` is a :class:`~fwforge.keystore.KeyRecord` or raw key bytes.
    """
    kek = _material(store_key)
    if len(kek) not in (16, 32):
        raise BadKeyLength(f"store key must be 16 or 32 bytes, got {len(kek)}")
    if len(scramble_key) != BLOCK:
        raise BadLength(f"scramble key must be {BLOCK} bytes, got {len(scramble_key)}")
    dec = Cipher(algorithms.AES(kek), modes.ECB()).decryptor()
    return ImageKey(dec.update(bytes(scramble_key)) + dec.finalize())


def strip_pkcs7(data: bytes) -> bytes:
    n = data[-1]
    if not 1 <= n <= BLOCK or data[-n:] != bytes([n]) * n:
        raise BadPadding("invalid PKCS#7 padding")
    return data[:-n]


def decrypt_payload(cipher: bytes, key: ImageKey) -> bytes:
    if not cipher or len(cipher) % BLOCK:
        raise BadLength(f"ciphertext length {len(cipher)} is not a positive multiple of {BLOCK}")
    dec = Cipher(algorithms.AES(key.material), modes.CBC(ZERO_IV)).decryptor()
    return strip_pkcs7(dec.update(bytes(cipher)) + dec.finalize())


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def verify_payload_digest(plain: bytes, digest: bytes) -> bool:
    return hmac.compare_digest(sha256(plain), bytes(digest))


def load_public_key(material: bytes):
    """RSA public key from DER or PEM bytes, or None if unrecognized."""
    loaders = [serialization.load_der_public_key]
    if material.lstrip().startswith(b"-----BEGIN"):
        loaders.insert(0, serialization.load_pem_public_key)
    for loader in loaders:
        try:
            key = loader(material)
        except (ValueError, TypeError, UnsupportedAlgorithm):
            continue
        if isinstance(key, rsa.RSAPublicKey):
            return key
        return None
    return None


def verify_signature(signed_region: bytes, sig: bytes, auth_key) -> SignatureStatus:
    """Check an RSA PKCS#1 v1.5 / SHA-256 signature.

    Returns ``UNSUPPORTED`` when the auth material is not a recognizable RSA
    public key, so an opaque vendor blob never verifies as valid.
    """
    key = load_public_key(_material(auth_key))
    if key is None:
        return SignatureStatus.UNSUPPORTED
    try:
        key.verify(bytes(sig), bytes(signed_region), asym_padding.PKCS1v15(), hashes.SHA256())
    except InvalidSignature:
        return SignatureStatus.INVALID
    return SignatureStatus.VALID


def signed_region(header: FirmwareHeader) -> bytes:
    return serialize_header(header) + header.payload_digest
