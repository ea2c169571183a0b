"""Partition-3 root filesystem: superblock, records, and mount policy.

The superblock occupies bytes [0x000, 0x600). One byte at offset 0x467 is
the mount-control byte: 0xFF means the partition is neither mountable nor
writable from outside the boot chain, 0x00 means both are allowed. The
record area starts at 0x600 and holds TLV records for user accounts,
startup jobs, and plain files.

Serialization is canonical (records in insertion order, zero tail), so the
same records always produce the same partition bytes and digests are
deterministic.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum

from .errors import (
    AlreadyMounted,
    BadControlByte,
    BadMagic,
    BadRecord,
    BadVersion,
    CorruptRecord,
    DuplicateUser,
    MountBlocked,
    NotWritable,
    TooLarge,
)
from .image import DiskImage

ROOTFS_MAGIC = b"RFS1"
ROOTFS_VERSION = 1
SUPERBLOCK_LEN = 0x600
CONTROL_BYTE_OFFSET = 0x467
CONTROL_ENFORCED = 0xFF
CONTROL_OPEN = 0x00
ROOTFS_PARTITION = 3

KIND_USER = 1
KIND_JOB = 2
KIND_FILE = 3

HASH_LEN = 32


class Privilege(IntEnum):
    NORMAL = 0
    SUPERUSER = 1


@dataclass(frozen=True)
class User:
    uid: int
    privilege: Privilege
    name: str
    password_hash: bytes


@dataclass(frozen=True)
class StartupJob:
    every_minutes: int
    action: str


@dataclass(frozen=True)
class FileRecord:
    path: str
    data: bytes


RootfsRecord = User | StartupJob | FileRecord


def hash_password(password: str) -> bytes:
    """Unsalted SHA-256 of the UTF-8 password (models local console logins)."""
    return hashlib.sha256(password.encode("utf-8")).digest()


@dataclass
class RootfsImage:
    mount_control: int
    records: list[RootfsRecord] = field(default_factory=list)

    @property
    def users(self) -> list[User]:
        return [r for r in self.records if isinstance(r, User)]

    @property
    def startup_jobs(self) -> list[StartupJob]:
        return [r for r in self.records if isinstance(r, StartupJob)]

    @property
    def files(self) -> list[FileRecord]:
        return [r for r in self.records if isinstance(r, FileRecord)]


# -- record validation --------------------------------------------------------


def _validate_record(record: RootfsRecord) -> None:
    if isinstance(record, User):
        if record.privilege not in (Privilege.NORMAL, Privilege.SUPERUSER):
            raise BadRecord(f"user {record.name!r}: bad privilege {record.privilege}")
        if len(record.password_hash) != HASH_LEN:
            raise BadRecord(f"user {record.name!r}: password hash must be 32 bytes")
        if not 0 <= record.uid <= 0xFFFFFFFF:
            raise BadRecord(f"user {record.name!r}: uid outside u32 range")
    elif isinstance(record, StartupJob):
        if record.every_minutes < 1:
            raise BadRecord("startup job interval must be >= 1 minute")
        if not record.action:
            raise BadRecord("startup job action must be non-empty")
    elif isinstance(record, FileRecord):
        if not record.path:
            raise BadRecord("file path must be non-empty")
    else:
        raise BadRecord(f"unknown record type {type(record).__name__}")


def _validate_uniqueness(records: list[RootfsRecord]) -> None:
    uids: set[int] = set()
    names: set[str] = set()
    paths: set[str] = set()
    for r in records:
        if isinstance(r, User):
            if r.uid in uids:
                raise DuplicateUser(f"uid {r.uid} used twice")
            if r.name in names:
                raise DuplicateUser(f"user name {r.name!r} used twice")
            uids.add(r.uid)
            names.add(r.name)
        elif isinstance(r, FileRecord):
            if r.path in paths:
                raise BadRecord(f"file path {r.path!r} used twice")
            paths.add(r.path)


# -- serialization ------------------------------------------------------------


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise BadRecord("string field exceeds 65535 bytes")
    return struct.pack("<H", len(raw)) + raw


def _pack_record(record: RootfsRecord) -> bytes:
    if isinstance(record, User):
        payload = (struct.pack("<IB", record.uid, int(record.privilege))
                   + _pack_str(record.name) + record.password_hash)
        kind = KIND_USER
    elif isinstance(record, StartupJob):
        payload = struct.pack("<I", record.every_minutes) + _pack_str(record.action)
        kind = KIND_JOB
    else:
        payload = (_pack_str(record.path)
                   + struct.pack("<I", len(record.data)) + record.data)
        kind = KIND_FILE
    return struct.pack("<BI", kind, len(payload)) + payload


def serialize_rootfs(rootfs: RootfsImage, partition_size: int) -> bytes:
    """Canonical partition bytes: records in insertion order, zero tail."""
    if rootfs.mount_control not in (CONTROL_OPEN, CONTROL_ENFORCED):
        raise BadControlByte(
            f"mount control must be 0x00 or 0xff, got {rootfs.mount_control:#04x}")
    for r in rootfs.records:
        _validate_record(r)
    _validate_uniqueness(rootfs.records)

    record_area = b"".join(_pack_record(r) for r in rootfs.records)
    total = SUPERBLOCK_LEN + len(record_area)
    if total > partition_size:
        raise TooLarge(
            f"rootfs needs {total} bytes, partition holds {partition_size}")

    out = bytearray(partition_size)
    out[0:4] = ROOTFS_MAGIC
    struct.pack_into("<I", out, 4, ROOTFS_VERSION)
    struct.pack_into("<Q", out, 8, len(record_area))
    out[CONTROL_BYTE_OFFSET] = rootfs.mount_control
    out[SUPERBLOCK_LEN:SUPERBLOCK_LEN + len(record_area)] = record_area
    return bytes(out)


def build_rootfs(users: list[User], jobs: list[StartupJob], files: list[FileRecord],
                 mount_control: int, partition_size: int) -> bytes:
    """Assemble a fresh rootfs partition (users, then jobs, then files)."""
    records: list[RootfsRecord] = [*users, *jobs, *files]
    return serialize_rootfs(RootfsImage(mount_control, records), partition_size)


# -- parsing ------------------------------------------------------------------


def _unpack_str(data: bytes, off: int, record_off: int) -> tuple[str, int]:
    if off + 2 > len(data):
        raise CorruptRecord(record_off, "truncated string length")
    (n,) = struct.unpack_from("<H", data, off)
    off += 2
    if off + n > len(data):
        raise CorruptRecord(record_off, "truncated string body")
    try:
        return data[off:off + n].decode("utf-8"), off + n
    except UnicodeDecodeError:
        raise CorruptRecord(record_off, "string is not valid UTF-8") from None


def _parse_record(kind: int, payload: bytes, record_off: int) -> RootfsRecord:
    if kind == KIND_USER:
        if len(payload) < 5:
            raise CorruptRecord(record_off, "user record too short")
        uid, priv = struct.unpack_from("<IB", payload, 0)
        if priv not in (0, 1):
            raise CorruptRecord(record_off, f"bad privilege byte {priv}")
        name, off = _unpack_str(payload, 5, record_off)
        if len(payload) - off != HASH_LEN:
            raise CorruptRecord(record_off, "password hash must be 32 bytes")
        return User(uid, Privilege(priv), name, payload[off:])
    if kind == KIND_JOB:
        if len(payload) < 4:
            raise CorruptRecord(record_off, "job record too short")
        (every,) = struct.unpack_from("<I", payload, 0)
        if every < 1:
            raise CorruptRecord(record_off, "job interval must be >= 1")
        action, off = _unpack_str(payload, 4, record_off)
        if off != len(payload):
            raise CorruptRecord(record_off, "trailing bytes in job record")
        if not action:
            raise CorruptRecord(record_off, "job action is empty")
        return StartupJob(every, action)
    if kind == KIND_FILE:
        path, off = _unpack_str(payload, 0, record_off)
        if off + 4 > len(payload):
            raise CorruptRecord(record_off, "truncated file length")
        (n,) = struct.unpack_from("<I", payload, off)
        off += 4
        if off + n != len(payload):
            raise CorruptRecord(record_off, "file data length mismatch")
        return FileRecord(path, payload[off:off + n])
    raise CorruptRecord(record_off, f"unknown record kind {kind}")


def parse_rootfs(data: bytes) -> RootfsImage:
    """Total function over bytes; errors name the first offending offset."""
    if len(data) < SUPERBLOCK_LEN:
        raise BadMagic(f"partition too short for a superblock ({len(data)} bytes)")
    if data[0:4] != ROOTFS_MAGIC:
        raise BadMagic(f"bad magic {data[0:4]!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != ROOTFS_VERSION:
        raise BadVersion(f"unsupported version {version}")
    control = data[CONTROL_BYTE_OFFSET]
    if control not in (CONTROL_OPEN, CONTROL_ENFORCED):
        raise BadControlByte(
            f"mount control must be 0x00 or 0xff, got {control:#04x}")
    (area_len,) = struct.unpack_from("<Q", data, 8)
    area_end = SUPERBLOCK_LEN + area_len
    if area_end > len(data):
        raise CorruptRecord(8, "record area overruns the partition")

    records: list[RootfsRecord] = []
    off = SUPERBLOCK_LEN
    while off < area_end:
        if off + 5 > area_end:
            raise CorruptRecord(off, "truncated record header")
        kind = data[off]
        (plen,) = struct.unpack_from("<I", data, off + 1)
        payload_start = off + 5
        if payload_start + plen > area_end:
            raise CorruptRecord(off, "record payload overruns the record area")
        records.append(_parse_record(kind, data[payload_start:payload_start + plen], off))
        off = payload_start + plen

    try:
        _validate_uniqueness(records)
    except (DuplicateUser, BadRecord) as exc:
        raise CorruptRecord(SUPERBLOCK_LEN, str(exc)) from None
    return RootfsImage(mount_control=control, records=records)


# -- mounting -----------------------------------------------------------------


class MountMode(Enum):
    READ_ONLY = "ro"
    READ_WRITE = "rw"


class MountHandle:
    """Live view of a mounted rootfs; at most one per image at a time.

    Mutations re-serialize the whole rootfs canonically and write it back
    to partition 3 immediately.
    """

    def __init__(self, img: DiskImage, mode: MountMode, rootfs: RootfsImage):
        self.img = img
        self.mode = mode
        self.rootfs = rootfs
        self.active = True

    def close(self) -> None:
        if self.active:
            self.active = False
            self.img._active_mount = None

    def __enter__(self) -> "MountHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _writable(self) -> None:
        if not self.active:
            raise NotWritable("mount handle is closed")
        if self.mode is not MountMode.READ_WRITE:
            raise NotWritable("mount is read-only")

    def _write_back(self) -> None:
        size = self.img.entry(ROOTFS_PARTITION).byte_length
        self.img.write_partition(ROOTFS_PARTITION, serialize_rootfs(self.rootfs, size))


def mount_rootfs(img: DiskImage, mode: MountMode) -> MountHandle:
    """Grant a handle iff the control byte permits external mounting."""
    rootfs = parse_rootfs(img.read_partition(ROOTFS_PARTITION))
    if rootfs.mount_control != CONTROL_OPEN:
        raise MountBlocked(
            f"control byte {rootfs.mount_control:#04x} blocks external mounting")
    if img._active_mount is not None:
        raise AlreadyMounted("image already has an open mount handle")
    handle = MountHandle(img, mode, rootfs)
    img._active_mount = handle
    return handle


def chroot_add_user(handle: MountHandle, user: User) -> None:
    """Append a user record through a read-write mount (the phony-superuser step)."""
    handle._writable()
    _validate_record(user)
    for existing in handle.rootfs.users:
        if existing.uid == user.uid:
            raise DuplicateUser(f"uid {user.uid} already exists")
        if existing.name == user.name:
            raise DuplicateUser(f"user name {user.name!r} already exists")
    handle.rootfs.records.append(user)
    try:
        handle._write_back()
    except TooLarge:
        handle.rootfs.records.pop()
        raise


def install_startup_job(handle: MountHandle, job: StartupJob) -> None:
    """Append a startup job record through a read-write mount."""
    handle._writable()
    _validate_record(job)
    handle.rootfs.records.append(job)
    try:
        handle._write_back()
    except TooLarge:
        handle.rootfs.records.pop()
        raise
