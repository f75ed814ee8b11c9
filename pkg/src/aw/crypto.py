"""Hashing, signatures, sealed boxes and the canonical field encoding.

Every composite value that gets hashed or signed anywhere in the package is
built with :func:`canonical_encode`, so two implementations agree on the
bytes as long as they agree on the field list.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Iterable

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ed25519, x25519
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import BadKeyError, DecryptError, EncodingError

ROLES = ("prover", "auditor", "verifier", "hardware_root")

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw

# Curve25519 field prime, used for the Edwards -> Montgomery key mapping.
_P = 2**255 - 19


class Digest256(bytes):
    """A 32-byte SHA-256 output."""

    def __new__(cls, value: bytes | bytearray | memoryview) -> "Digest256":
        value = bytes(value)
        if len(value) != 32:
            raise EncodingError(f"digest must be 32 bytes, got {len(value)}")
        return super().__new__(cls, value)

    @classmethod
    def fromhex(cls, text: str) -> "Digest256":  # type: ignore[override]
        try:
            return cls(bytes.fromhex(text))
        except ValueError as exc:
            raise EncodingError(f"bad digest hex: {text!r}") from exc

    def __repr__(self) -> str:
        return f"Digest256({self.hex()[:16]}...)"


def digest(data: bytes) -> Digest256:
    return Digest256(hashlib.sha256(data).digest())


def canonical_encode(fields: Iterable[tuple[str, bytes]]) -> bytes:
    """Encode ``(tag, value)`` pairs as ``len(tag) | tag | len(value) | value``.

    Tag length is one byte, value length eight bytes big-endian. Tags must be
    ASCII, at most 16 bytes, and unique within one call.
    """
    out = bytearray()
    seen: set[str] = set()
    for tag, value in fields:
        try:
            raw_tag = tag.encode("ascii")
        except UnicodeEncodeError as exc:
            raise EncodingError(f"tag {tag!r} is not ASCII") from exc
        if not raw_tag or len(raw_tag) > 16:
            raise EncodingError(f"tag {tag!r} must be 1..16 bytes")
        if tag in seen:
            raise EncodingError(f"duplicate tag {tag!r}")
        seen.add(tag)
        value = bytes(value)
        out.append(len(raw_tag))
        out += raw_tag
        out += len(value).to_bytes(8, "big")
        out += value
    return bytes(out)


def canonical_decode(data: bytes) -> list[tuple[str, bytes]]:
    """Inverse of :func:`canonical_encode`."""
    fields: list[tuple[str, bytes]] = []
    seen: set[str] = set()
    pos = 0
    n = len(data)
    while pos < n:
        tag_len = data[pos]
        pos += 1
        if tag_len == 0 or tag_len > 16 or pos + tag_len + 8 > n:
            raise EncodingError(f"truncated or malformed tag at offset {pos - 1}")
        try:
            tag = data[pos : pos + tag_len].decode("ascii")
        except UnicodeDecodeError as exc:
            raise EncodingError("non-ASCII tag") from exc
        pos += tag_len
        value_len = int.from_bytes(data[pos : pos + 8], "big")
        pos += 8
        if pos + value_len > n:
            raise EncodingError(f"value for {tag!r} overruns input")
        if tag in seen:
            raise EncodingError(f"duplicate tag {tag!r}")
        seen.add(tag)
        fields.append((tag, bytes(data[pos : pos + value_len])))
        pos += value_len
    return fields


def encode_int(value: int) -> bytes:
    return value.to_bytes(8, "big")


def decode_int(value: bytes) -> int:
    if len(value) != 8:
        raise EncodingError("integers are encoded in 8 bytes")
    return int.from_bytes(value, "big")


@dataclass(frozen=True)
class Signature:
    value: bytes
    signer_role: str = field(default="", compare=False)

    def hex(self) -> str:
        return self.value.hex()

    @classmethod
    def fromhex(cls, text: str, signer_role: str = "") -> "Signature":
        try:
            return cls(bytes.fromhex(text), signer_role)
        except ValueError as exc:
            raise EncodingError("bad signature hex") from exc


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 key pair; ``secret_key`` is the 32-byte seed."""

    public_key: bytes
    secret_key: bytes = field(repr=False)
    role: str

    def _signer(self) -> ed25519.Ed25519PrivateKey:
        return ed25519.Ed25519PrivateKey.from_private_bytes(self.secret_key)

    def box_secret(self) -> x25519.X25519PrivateKey:
        # Same scalar derivation as Ed25519 signing; X25519 clamps it itself.
        return x25519.X25519PrivateKey.from_private_bytes(
            hashlib.sha512(self.secret_key).digest()[:32]
        )


def keypair_generate(seed: bytes | None = None, role: str = "prover") -> KeyPair:
    if role not in ROLES:
        raise BadKeyError(f"unknown role {role!r}")
    if seed is None:
        seed = os.urandom(32)
    elif not isinstance(seed, (bytes, bytearray)) or len(seed) != 32:
        raise BadKeyError("seed must be exactly 32 bytes")
    seed = bytes(seed)
    sk = ed25519.Ed25519PrivateKey.from_private_bytes(seed)
    return KeyPair(sk.public_key().public_bytes(_RAW, _RAW_PUB), seed, role)


def seed_from_text(text: str) -> bytes:
    """Derive a 32-byte key seed from a human-readable label."""
    return hashlib.sha256(text.encode("utf-8")).digest()


def sign(secret: KeyPair, message: bytes) -> Signature:
    return Signature(secret._signer().sign(bytes(message)), secret.role)


def verify(public_key: bytes, message: bytes, signature: Signature | bytes) -> bool:
    raw = signature.value if isinstance(signature, Signature) else signature
    try:
        if len(public_key) != 32 or len(raw) != 64:
            return False
        ed25519.Ed25519PublicKey.from_public_bytes(bytes(public_key)).verify(
            bytes(raw), bytes(message)
        )
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


def ed25519_public_to_x25519(public_key: bytes) -> bytes:
    """Map an Edwards public key to its Montgomery u-coordinate."""
    if len(public_key) != 32:
        raise BadKeyError("public key must be 32 bytes")
    y = int.from_bytes(public_key, "little") & ((1 << 255) - 1)
    if y >= _P or y == 1:
        raise BadKeyError("not a usable Ed25519 public key")
    u = (1 + y) * pow(1 - y, _P - 2, _P) % _P
    return u.to_bytes(32, "little")


@dataclass(frozen=True)
class SealedBox:
    ephemeral_key: bytes
    nonce: bytes
    ciphertext: bytes
    associated_digest: Digest256


_SEAL_INFO = b"aw/1 sealed box"


def _box_key(shared: bytes, nonce: bytes, ephemeral: bytes, recipient_u: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=nonce,
        info=_SEAL_INFO + ephemeral + recipient_u,
    ).derive(shared)


def seal(recipient_public: bytes, plaintext: bytes, associated: Digest256) -> SealedBox:
    """Encrypt to an Ed25519 public key (X25519 + HKDF + ChaCha20-Poly1305).

    ``associated`` is authenticated but not encrypted; unsealing needs the
    same digest.
    """
    recipient_u = ed25519_public_to_x25519(recipient_public)
    eph = x25519.X25519PrivateKey.generate()
    eph_pub = eph.public_key().public_bytes(_RAW, _RAW_PUB)
    shared = eph.exchange(x25519.X25519PublicKey.from_public_bytes(recipient_u))
    nonce = os.urandom(24)
    key = _box_key(shared, nonce, eph_pub, recipient_u)
    # Each box has a fresh key, so a fixed AEAD nonce is safe.
    ct = ChaCha20Poly1305(key).encrypt(bytes(12), bytes(plaintext), bytes(associated))
    return SealedBox(eph_pub, nonce, ct, Digest256(associated))


def unseal(secret: KeyPair, box: SealedBox, associated: Digest256) -> bytes:
    try:
        sk = secret.box_secret()
        recipient_u = sk.public_key().public_bytes(_RAW, _RAW_PUB)
        shared = sk.exchange(x25519.X25519PublicKey.from_public_bytes(box.ephemeral_key))
        key = _box_key(shared, box.nonce, box.ephemeral_key, recipient_u)
        return ChaCha20Poly1305(key).decrypt(bytes(12), box.ciphertext, bytes(associated))
    except Exception:
        raise DecryptError() from None

