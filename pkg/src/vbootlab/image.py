"""Bit-exact disk image container with the modeled 12-partition layout.

The image lives in a single ``.cvd`` file: one 512-byte header sector
describing the partition table, then raw partition data at the declared
sector offsets. The whole file is kept in memory as the backing array, so
serialize -> deserialize is the identity on accepted inputs.

File format (little-endian):

======== ===== =========================================================
offset   size  field
======== ===== =========================================================
0        8     magic ``CVDLAB01``
8        4     sector_size u32, must be 512
12       4     partition_count u32, must be 12
16       480   12 entries x 40 bytes (see ``_ENTRY``)
496      16    zero padding
512      ...   partition data at the declared sector offsets
======== ===== =========================================================

Entry: index u8, role u8, reserved u16 (zero), start_sector u64,
sector_count u64, label 20 ASCII bytes zero-padded.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

from .errors import (
    BadImageMagic,
    BadIndex,
    BadPartitionCount,
    BadPartitionTable,
    BadSectorSize,
    DuplicateIndex,
    LengthMismatch,
    MissingIndex,
    Overflow,
    SizeMismatch,
)

SECTOR_SIZE = 512
PARTITION_COUNT = 12
MAGIC = b"CVDLAB01"
HEADER_LEN = 512
DEFAULT_MAX_BYTES = 1 << 30

_ENTRY = struct.Struct("<BBHQQ20s")
_ENTRY_TABLE_OFFSET = 16
LABEL_LEN = 20


class PartitionRole(IntEnum):
    """Partition purpose, uniquely determined by its index."""

    CACHED_USER_DATA = 1
    KERNEL_A = 2
    ROOTFS_A = 3
    KERNEL_B = 4
    ROOTFS_B = 5
    KERNEL_C = 6
    ROOTFS_C = 7
    OEM = 8
    RESERVED = 9
    ESP = 12


def role_for_index(index: int) -> PartitionRole:
    if not 1 <= index <= PARTITION_COUNT:
        raise BadIndex(f"partition index {index} outside 1..12")
    if index in (9, 10, 11):
        return PartitionRole.RESERVED
    if index == 12:
        return PartitionRole.ESP
    return PartitionRole(index)


@dataclass(frozen=True)
class PartitionEntry:
    index: int
    role: PartitionRole
    start_sector: int
    sector_count: int
    label: str

    @property
    def byte_offset(self) -> int:
        return self.start_sector * SECTOR_SIZE

    @property
    def byte_length(self) -> int:
        return self.sector_count * SECTOR_SIZE


class DiskImage:
    """A 12-partition disk image backed by one contiguous byte array.

    Single-writer handle: one DiskImage must not be mutated concurrently.
    Distinct images are independent.
    """

    def __init__(self, backing: bytearray, entries: list[PartitionEntry]):
        self._backing = backing
        self._entries = {e.index: e for e in entries}
        self._active_mount = None  # set by rootfs.mount_rootfs

    # -- accessors ------------------------------------------------------

    @property
    def partitions(self) -> list[PartitionEntry]:
        return [self._entries[i] for i in sorted(self._entries)]

    def entry(self, index: int) -> PartitionEntry:
        if index not in self._entries:
            raise BadIndex(f"partition index {index} outside 1..12")
        return self._entries[index]

    def size_bytes(self) -> int:
        return len(self._backing)

    # -- sector/byte I/O --------------------------------------------------

    def read_partition(self, index: int) -> bytes:
        """Exact copy of the partition's byte range."""
        e = self.entry(index)
        return bytes(self._backing[e.byte_offset:e.byte_offset + e.byte_length])

    def write_partition(self, index: int, data: bytes) -> None:
        """Replace a partition's bytes; everything else stays untouched."""
        e = self.entry(index)
        if len(data) != e.byte_length:
            raise LengthMismatch(
                f"partition {index} is {e.byte_length} bytes, got {len(data)}")
        self._backing[e.byte_offset:e.byte_offset + e.byte_length] = data

    def read_byte(self, index: int, offset: int) -> int:
        e = self.entry(index)
        if not 0 <= offset < e.byte_length:
            raise BadIndex(
                f"offset {offset:#x} outside partition {index} (length {e.byte_length:#x})")
        return self._backing[e.byte_offset + offset]

    def write_byte(self, index: int, offset: int, value: int) -> None:
        e = self.entry(index)
        if not 0 <= offset < e.byte_length:
            raise BadIndex(
                f"offset {offset:#x} outside partition {index} (length {e.byte_length:#x})")
        if not 0 <= value <= 0xFF:
            raise ValueError(f"byte value {value} outside 0..255")
        self._backing[e.byte_offset + offset] = value

    # -- serialization --------------------------------------------------

    def to_bytes(self) -> bytes:
        return bytes(self._backing)

    @classmethod
    def from_bytes(cls, data: bytes) -> "DiskImage":
        return _parse_image(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "DiskImage":
        return cls.from_bytes(Path(path).read_bytes())


def create_image(layout: list[tuple[int, int, str]],
                 max_bytes: int = DEFAULT_MAX_BYTES) -> DiskImage:
    """Build a zero-filled image from (index, sector_count, label) triples.

    The layout must cover indices 1..=12 exactly once; partitions are laid
    out consecutively in index order starting at sector 1 (sector 0 is the
    header).
    """
    seen: dict[int, tuple[int, str]] = {}
    for index, sector_count, label in layout:
        if not 1 <= index <= PARTITION_COUNT:
            raise BadIndex(f"partition index {index} outside 1..12")
        if index in seen:
            raise DuplicateIndex(f"partition index {index} given twice")
        if sector_count < 1:
            raise BadPartitionTable(
                f"partition {index}: sector_count must be >= 1, got {sector_count}")
        if not label.isascii() or len(label) > LABEL_LEN:
            raise BadPartitionTable(
                f"partition {index}: label must be <= {LABEL_LEN} ASCII bytes")
        seen[index] = (sector_count, label)
    for index in range(1, PARTITION_COUNT + 1):
        if index not in seen:
            raise MissingIndex(f"layout is missing partition index {index}")

    entries = []
    next_sector = 1
    for index in range(1, PARTITION_COUNT + 1):
        sector_count, label = seen[index]
        entries.append(PartitionEntry(index=index, role=role_for_index(index),
                                      start_sector=next_sector,
                                      sector_count=sector_count, label=label))
        next_sector += sector_count

    total_bytes = next_sector * SECTOR_SIZE
    if total_bytes > max_bytes:
        raise Overflow(f"image would be {total_bytes} bytes, cap is {max_bytes}")

    backing = bytearray(total_bytes)
    backing[0:8] = MAGIC
    struct.pack_into("<I", backing, 8, SECTOR_SIZE)
    struct.pack_into("<I", backing, 12, PARTITION_COUNT)
    for i, e in enumerate(entries):
        _ENTRY.pack_into(backing, _ENTRY_TABLE_OFFSET + i * _ENTRY.size,
                         e.index, int(e.role), 0, e.start_sector, e.sector_count,
                         e.label.encode("ascii"))
    return DiskImage(backing, entries)


def _parse_image(data: bytes) -> DiskImage:
    if len(data) < HEADER_LEN:
        raise BadImageMagic(f"file too short for a header ({len(data)} bytes)")
    if data[0:8] != MAGIC:
        raise BadImageMagic(f"bad magic {data[0:8]!r}")
    (sector_size,) = struct.unpack_from("<I", data, 8)
    if sector_size != SECTOR_SIZE:
        raise BadSectorSize(f"sector_size must be 512, got {sector_size}")
    (count,) = struct.unpack_from("<I", data, 12)
    if count != PARTITION_COUNT:
        raise BadPartitionCount(f"partition_count must be 12, got {count}")

    entries = []
    for i in range(PARTITION_COUNT):
        index, role_raw, reserved, start, sectors, label_raw = _ENTRY.unpack_from(
            data, _ENTRY_TABLE_OFFSET + i * _ENTRY.size)
        if index != i + 1:
            raise BadPartitionTable(
                f"entry {i}: index must be {i + 1}, got {index}")
        if reserved != 0:
            raise BadPartitionTable(f"entry {i}: reserved field must be zero")
        expected_role = role_for_index(index)
        if role_raw != int(expected_role):
            raise BadPartitionTable(
                f"entry {i}: role {role_raw} does not match index {index}")
        if sectors < 1:
            raise BadPartitionTable(f"entry {i}: sector_count must be >= 1")
        if start < 1:
            raise BadPartitionTable(f"entry {i}: start_sector overlaps the header")
        label_bytes = label_raw.split(b"\x00", 1)[0]
        if label_raw[len(label_bytes):].strip(b"\x00"):
            raise BadPartitionTable(f"entry {i}: label has bytes after NUL padding")
        try:
            label = label_bytes.decode("ascii")
        except UnicodeDecodeError:
            raise BadPartitionTable(f"entry {i}: label is not ASCII") from None
        entries.append(PartitionEntry(index=index, role=expected_role,
                                      start_sector=start, sector_count=sectors,
                                      label=label))

    if data[496:HEADER_LEN].strip(b"\x00"):
        raise BadPartitionTable("header padding bytes 496..512 must be zero")

    spans = sorted((e.byte_offset, e.byte_offset + e.byte_length, e.index)
                   for e in entries)
    for (_, end, idx), (start2, _, idx2) in zip(spans, spans[1:]):
        if start2 < end:
            raise BadPartitionTable(f"partitions {idx} and {idx2} overlap")
    if spans[-1][1] > len(data):
        raise BadPartitionTable(
            f"partition {spans[-1][2]} extends past end of file")

    return DiskImage(bytearray(data), entries)


def bitwise_copy_partition(src: DiskImage, dst: DiskImage, index: int) -> None:
    """The Exploit-1 primitive: byte-exact replacement of one partition.

    Requires equal byte lengths; a geometry mismatch means the attacker
    must rebuild with a matching layout.
    """
    src_e = src.entry(index)
    dst_e = dst.entry(index)
    if src_e.byte_length != dst_e.byte_length:
        raise SizeMismatch(
            f"partition {index}: source is {src_e.byte_length} bytes, "
            f"destination is {dst_e.byte_length}")
    dst.write_partition(index, src.read_partition(index))
