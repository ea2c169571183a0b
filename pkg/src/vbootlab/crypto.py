"""Password-based key derivation and authenticated encryption.

Shared by the user vaults and the bootloader protection blob. Both store
their own salt, iteration count, nonce and cipher id next to the
ciphertext, so records remain self-describing.
"""

from __future__ import annotations

import os

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.pbkdf2 import PBKDF2HMAC

from .errors import AuthFailure

KEY_LEN = 32
SALT_LEN = 16
NONCE_LEN = 12
TAG_LEN = 16
DEFAULT_KDF_ITERS = 100_000

CIPHER_AES_256_GCM = 1
CIPHER_CHACHA20_POLY1305 = 2


def derive_key(password: str, salt: bytes, iterations: int) -> bytes:
    """PBKDF2-HMAC-SHA256 of the UTF-8 password; 32-byte key."""
    kdf = PBKDF2HMAC(algorithm=hashes.SHA256(), length=KEY_LEN, salt=salt,
                     iterations=iterations)
    return kdf.derive(password.encode("utf-8"))


def fresh_salt() -> bytes:
    return os.urandom(SALT_LEN)


def fresh_nonce() -> bytes:
    return os.urandom(NONCE_LEN)


def _aead(key: bytes, cipher_id: int):
    if cipher_id == CIPHER_AES_256_GCM:
        return AESGCM(key)
    if cipher_id == CIPHER_CHACHA20_POLY1305:
        return ChaCha20Poly1305(key)
    raise AuthFailure(f"unknown cipher id {cipher_id}")


def seal(key: bytes, nonce: bytes, plaintext: bytes, cipher_id: int) -> bytes:
    """Encrypt; returns ciphertext with the 16-byte tag appended."""
    return _aead(key, cipher_id).encrypt(nonce, plaintext, None)


def open_sealed(key: bytes, nonce: bytes, ciphertext: bytes, cipher_id: int) -> bytes:
    """Decrypt and authenticate; raises AuthFailure instead of yielding garbage."""
    try:
        return _aead(key, cipher_id).decrypt(nonce, ciphertext, None)
    except InvalidTag as exc:
        raise AuthFailure("authenticated decryption failed") from exc


def wipe(buf: bytearray) -> None:
    """Best-effort zeroization of decrypted material."""
    for i in range(len(buf)):
        buf[i] = 0
