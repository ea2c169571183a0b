"""Per-user encrypted vaults, login sessions, and the minute-tick scheduler.

A vault's plaintext is a small file tree (path -> bytes). It is sealed
with a key derived from the user's password and stored in partition 1;
nothing outside a live session ever holds the plaintext. Startup jobs
from the booted rootfs run on a simulated minute clock and report what
they did to an append-only JSONL sink.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

from . import crypto
from .bootchain import BootOutcome, BootSuccess
from .errors import (
    BootRequired,
    EmptyPassword,
    NoSuchVault,
    UseAfterLogout,
    VaultStoreError,
)
from .image import DiskImage
from .rootfs import StartupJob
from .vaultstore import VaultRecord, VaultStore


@dataclass
class VaultContent:
    files: dict[str, bytes] = field(default_factory=dict)


def serialize_content(content: VaultContent) -> bytes:
    out = bytearray(struct.pack("<I", len(content.files)))
    for path, data in content.files.items():
        raw = path.encode("utf-8")
        if not raw or len(raw) > 0xFFFF:
            raise VaultStoreError("vault file path must be 1..65535 UTF-8 bytes")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<I", len(data)) + data
    return bytes(out)


def parse_content(data: bytes) -> VaultContent:
    if len(data) < 4:
        raise VaultStoreError("vault content too short")
    (count,) = struct.unpack_from("<I", data, 0)
    off = 4
    files: dict[str, bytes] = {}
    for _ in range(count):
        if off + 2 > len(data):
            raise VaultStoreError("truncated vault file path length")
        (n,) = struct.unpack_from("<H", data, off)
        off += 2
        if off + n > len(data):
            raise VaultStoreError("truncated vault file path")
        path = data[off:off + n].decode("utf-8")
        off += n
        if off + 4 > len(data):
            raise VaultStoreError("truncated vault file length")
        (m,) = struct.unpack_from("<I", data, off)
        off += 4
        if off + m > len(data):
            raise VaultStoreError("truncated vault file data")
        files[path] = data[off:off + m]
        off += m
    if off != len(data):
        raise VaultStoreError("trailing bytes after vault content")
    return VaultContent(files)


def create_vault(img: DiskImage, username: str, password: str,
                 content: VaultContent, *,
                 kdf_iters: int = crypto.DEFAULT_KDF_ITERS,
                 cipher_id: int = crypto.CIPHER_AES_256_GCM) -> None:
    """Seal a fresh vault for username; fails if one already exists."""
    if not password:
        raise EmptyPassword("vault password must be non-empty")
    salt = crypto.fresh_salt()
    key = crypto.derive_key(password, salt, kdf_iters)
    nonce = crypto.fresh_nonce()
    ciphertext = crypto.seal(key, nonce, serialize_content(content), cipher_id)
    VaultStore(img).add_vault(
        VaultRecord(username, salt, kdf_iters, cipher_id, nonce, ciphertext))


class EventSink:
    """Append-only JSONL file; one JSON object per line."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, event: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def entries(self) -> list[dict]:
        if not self.path.exists():
            return []
        with open(self.path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]


@dataclass
class Session:
    """A logged-in user's view: decrypted vault plus the boot's startup jobs."""

    img: DiskImage
    username: str
    content: VaultContent
    jobs: tuple[StartupJob, ...]
    _key: bytearray
    _record: VaultRecord
    elapsed_minutes: int = 0
    active: bool = True


def login(img: DiskImage, outcome: BootOutcome, username: str, password: str) -> Session:
    """Open a vault after a successful boot.

    Recovery outcomes never reach a login prompt, so anything but a
    BootSuccess is rejected outright. A wrong password surfaces as an
    authentication failure from the AEAD open, not from any stored hash.
    """
    if not isinstance(outcome, BootSuccess):
        raise BootRequired("login requires a successful boot")
    record = VaultStore(img).find_vault(username)
    if record is None:
        raise NoSuchVault(f"no vault named {username!r}")
    key = crypto.derive_key(password, record.salt, record.kdf_iters)
    plaintext = crypto.open_sealed(key, record.nonce, record.ciphertext,
                                   record.cipher_id)
    content = parse_content(plaintext)
    return Session(img=img, username=username, content=content,
                   jobs=outcome.startup_jobs, _key=bytearray(key),
                   _record=record)


def _run_action(session: Session, minute: int, action: str, sink: EventSink) -> None:
    tokens = action.split()
    if len(tokens) == 3 and tokens[0] == "exfil":
        _, path, dest = tokens
        data = session.content.files.get(path)
        if data is None:
            sink.append({"minute": minute, "user": session.username,
                         "event": "missing-path", "path": path})
            return
        sink.append({"minute": minute, "user": session.username, "path": path,
                     "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
        return
    sink.append({"minute": minute, "user": session.username,
                 "event": "unsupported-action", "action": action})


def tick(session: Session, minutes: int, sink: EventSink) -> int:
    """Advance the clock; each startup job fires on its interval's multiples."""
    if not session.active:
        raise UseAfterLogout("session is logged out")
    if minutes < 0:
        raise ValueError("minutes must be >= 0")
    appended = 0
    start = session.elapsed_minutes
    for minute in range(start + 1, start + minutes + 1):
        for job in session.jobs:
            if minute % job.every_minutes == 0:
                _run_action(session, minute, job.action, sink)
                appended += 1
    session.elapsed_minutes = start + minutes
    return appended


def logout(session: Session) -> None:
    """Reseal the vault under a fresh nonce and drop the plaintext and key."""
    if not session.active:
        raise UseAfterLogout("session is already logged out")
    record = session._record
    nonce = crypto.fresh_nonce()
    ciphertext = crypto.seal(bytes(session._key), nonce,
                             serialize_content(session.content), record.cipher_id)
    VaultStore(session.img).replace_vault(
        VaultRecord(record.name, record.salt, record.kdf_iters,
                    record.cipher_id, nonce, ciphertext))
    crypto.wipe(session._key)
    session.content = VaultContent({})
    session.active = False
