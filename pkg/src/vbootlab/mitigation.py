"""Tamper detection: keep an encrypted copy of the bootloader, compare later.

encrypt_bootloader seals the current partition-12 bytes under the owner's
password and parks the blob in partition 1. verify_integrity runs before
any login: it decrypts the blob and compares SHA-256 digests of the live
bootloader against the stored copy. Both attacks replace partition 12, so
both flip the verdict to tampered; an attacker without the password can
neither read the blob nor forge a matching one.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

from . import crypto
from .bootchain import BOOT_PARTITION
from .errors import AuthFailure, EmptyPassword
from .image import DiskImage
from .vaultstore import BlobRecord, VaultStore


class AuditStatus(Enum):
    CLEAN = "clean"
    TAMPERED = "tampered"
    AUTH_FAILURE = "auth-failure"
    MITIGATION_ABSENT = "mitigation-absent"


@dataclass(frozen=True)
class AuditVerdict:
    status: AuditStatus
    current_sha256: str | None = None
    stored_sha256: str | None = None


def encrypt_bootloader(img: DiskImage, password: str, *, overwrite: bool = False,
                       kdf_iters: int = crypto.DEFAULT_KDF_ITERS,
                       cipher_id: int = crypto.CIPHER_AES_256_GCM) -> None:
    """Seal the full partition-12 bytes into the partition-1 blob record.

    Partition 12 itself is left untouched. Without overwrite a second call
    fails rather than silently replacing the reference copy.
    """
    if not password:
        raise EmptyPassword("protection password must be non-empty")
    bootloader = img.read_partition(BOOT_PARTITION)
    salt = crypto.fresh_salt()
    key = crypto.derive_key(password, salt, kdf_iters)
    nonce = crypto.fresh_nonce()
    ciphertext = crypto.seal(key, nonce, bootloader, cipher_id)
    VaultStore(img).set_blob(
        BlobRecord(salt, kdf_iters, cipher_id, nonce, ciphertext),
        overwrite=overwrite)


def verify_integrity(img: DiskImage, password: str, *,
                     access_log: list[tuple[int, int]] | None = None) -> AuditVerdict:
    """Pre-login audit; never mutates the image.

    The partition-1 walk touches only the blob record's payload (pass an
    access_log to observe that), so user vaults stay unread. A wrong
    password is a verdict, not an exception: the caller is a login screen,
    not a debugger.
    """
    store = VaultStore(img, access_log=access_log)
    blob = store.blob()
    if blob is None:
        return AuditVerdict(AuditStatus.MITIGATION_ABSENT)
    key = crypto.derive_key(password, blob.salt, blob.kdf_iters)
    try:
        stored = bytearray(
            crypto.open_sealed(key, blob.nonce, blob.ciphertext, blob.cipher_id))
    except AuthFailure:
        return AuditVerdict(AuditStatus.AUTH_FAILURE)
    stored_digest = hashlib.sha256(stored).hexdigest()
    crypto.wipe(stored)
    current_digest = hashlib.sha256(img.read_partition(BOOT_PARTITION)).hexdigest()
    if current_digest == stored_digest:
        return AuditVerdict(AuditStatus.CLEAN, current_digest, stored_digest)
    return AuditVerdict(AuditStatus.TAMPERED, current_digest, stored_digest)
