"""Signing keys and the signature algorithms certificates may name.

Public keys travel as base64 DER SubjectPublicKeyInfo text so that any key
type `cryptography` understands can sit in a certificate element.  Private
keys are stored as unencrypted PKCS#8 PEM files.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
from dataclasses import dataclass
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ed25519, padding, rsa

DEFAULT_SIGNATURE_ALG = "Ed25519"
LEGACY_SIGNATURE_ALGS = frozenset({"RSA-MD5"})
KNOWN_SIGNATURE_ALGS = frozenset({DEFAULT_SIGNATURE_ALG}) | LEGACY_SIGNATURE_ALGS


class UnsupportedAlgorithm(Exception):
    """The certificate names a signature algorithm we refuse or don't know."""


class KeyMismatch(Exception):
    """A signing key does not belong to the principal it is used for."""


def b64encode(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def b64decode_strict(text: str) -> bytes:
    """Decode base64, rejecting anything that does not re-encode identically."""
    compact = "".join(text.split())
    try:
        raw = base64.b64decode(compact.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError) as exc:
        raise ValueError(f"invalid base64: {exc}") from None
    if base64.b64encode(raw).decode("ascii") != compact:
        raise ValueError("non-canonical base64")
    return raw


def encode_public_key(key) -> str:
    der = key.public_bytes(
        serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
    )
    return b64encode(der)


def decode_public_key(text: str):
    try:
        return serialization.load_der_public_key(b64decode_strict(text))
    except ValueError as exc:
        raise ValueError(f"bad public key encoding: {exc}") from None


@dataclass(frozen=True)
class KeyPair:
    private_key: object

    @classmethod
    def generate(cls) -> "KeyPair":
        return cls(ed25519.Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes) -> "KeyPair":
        """Deterministic Ed25519 key; reproducible fixtures only."""
        return cls(ed25519.Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest()))

    @classmethod
    def generate_legacy_rsa(cls, bits: int = 1024) -> "KeyPair":
        return cls(rsa.generate_private_key(public_exponent=65537, key_size=bits))

    @property
    def public_key(self):
        return self.private_key.public_key()

    @property
    def public_text(self) -> str:
        return encode_public_key(self.public_key)

    @property
    def signature_alg(self) -> str:
        if isinstance(self.private_key, rsa.RSAPrivateKey):
            return "RSA-MD5"
        return DEFAULT_SIGNATURE_ALG

    def sign(self, data: bytes) -> bytes:
        if isinstance(self.private_key, rsa.RSAPrivateKey):
            return self.private_key.sign(data, padding.PKCS1v15(), hashes.MD5())
        return self.private_key.sign(data)

    def to_pem(self) -> bytes:
        return self.private_key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )

    @classmethod
    def from_pem(cls, data: bytes) -> "KeyPair":
        return cls(serialization.load_pem_private_key(data, password=None))

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_pem())

    @classmethod
    def load(cls, path: str | Path) -> "KeyPair":
        return cls.from_pem(Path(path).read_bytes())


def public_key_pem(key) -> bytes:
    return key.public_bytes(
        serialization.Encoding.PEM, serialization.PublicFormat.SubjectPublicKeyInfo
    )


def load_public_key_file(path: str | Path):
    """Load a public key from a PEM file, or derive it from a private key PEM."""
    data = Path(path).read_bytes()
    if b"PRIVATE KEY" in data:
        return KeyPair.from_pem(data).public_key
    return serialization.load_pem_public_key(data)


def same_public_key(a, b) -> bool:
    return encode_public_key(a) == encode_public_key(b)


def verify_bytes(
    alg: str, public_key, data: bytes, signature: bytes, allow_legacy: bool = False
) -> bool:
    """Check `signature` over `data` under the named algorithm."""
    if alg not in KNOWN_SIGNATURE_ALGS:
        raise UnsupportedAlgorithm(f"unknown signature algorithm {alg!r}")
    if alg in LEGACY_SIGNATURE_ALGS and not allow_legacy:
        raise UnsupportedAlgorithm(f"{alg} is disabled; enable legacy algorithms to accept it")
    try:
        if alg == "RSA-MD5":
            if not isinstance(public_key, rsa.RSAPublicKey):
                return False
            public_key.verify(signature, data, padding.PKCS1v15(), hashes.MD5())
        else:
            if not isinstance(public_key, ed25519.Ed25519PublicKey):
                return False
            public_key.verify(signature, data)
    except InvalidSignature:
        return False
    return True
