"""Partition-12 boot config and the three-step verified boot walk.

The bootloader partition holds a short text config:

    CVDBOOT v1
    cmdline=<kernel command line>
    verify=<0|1>
    roothash=<64 hex chars>        (present iff verify=1)

padded to the partition size with NUL bytes. Booting parses that config,
optionally checks SHA-256 over all of partition 3 against the pinned
roothash, then parses the rootfs. Any failure drops to recovery with a
specific reason instead of raising.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    BadHash,
    BadHeader,
    BootConfigError,
    MissingKey,
    RootfsError,
    TooLarge,
    UnknownKey,
)
from .image import DiskImage
from .rootfs import ROOTFS_PARTITION, StartupJob, User, parse_rootfs

BOOT_PARTITION = 12
BOOT_HEADER = "CVDBOOT v1"
_ROOTHASH_RE = re.compile(r"^[0-9a-f]{64}$")


@dataclass(frozen=True)
class BootConfig:
    cmdline: str
    verify: bool
    roothash: str | None = None

    def __post_init__(self) -> None:
        if "\x00" in self.cmdline or "\n" in self.cmdline:
            raise ValueError("cmdline must not contain NUL or newline")
        if self.verify:
            if self.roothash is None or not _ROOTHASH_RE.match(self.roothash):
                raise BadHash("verify=1 requires a 64-char lowercase hex roothash")
        elif self.roothash is not None:
            raise BadHash("verify=0 forbids a roothash")


def render_boot_config(config: BootConfig) -> bytes:
    lines = [BOOT_HEADER, f"cmdline={config.cmdline}", f"verify={int(config.verify)}"]
    if config.verify:
        lines.append(f"roothash={config.roothash}")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_boot_config(img: DiskImage, config: BootConfig) -> None:
    """Serialize the config into partition 12, NUL-padded to its full size."""
    raw = render_boot_config(config)
    size = img.entry(BOOT_PARTITION).byte_length
    if len(raw) > size:
        raise TooLarge(f"boot config needs {len(raw)} bytes, partition holds {size}")
    img.write_partition(BOOT_PARTITION, raw + b"\x00" * (size - len(raw)))


def parse_boot_config(data: bytes) -> BootConfig:
    """Parse the text up to the first NUL; bytes after the pad are ignored."""
    text_end = data.find(b"\x00")
    raw = data if text_end < 0 else data[:text_end]
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise BadHeader("boot config is not ASCII text") from None
    if not text.endswith("\n"):
        raise BadHeader("boot config must end with a newline")
    lines = text.split("\n")[:-1]
    if not lines or lines[0] != BOOT_HEADER:
        raise BadHeader(f"first line must be {BOOT_HEADER!r}")

    if len(lines) < 2 or not lines[1].startswith("cmdline="):
        raise MissingKey("expected cmdline= on line 2")
    cmdline = lines[1][len("cmdline="):]

    if len(lines) < 3 or not lines[2].startswith("verify="):
        raise MissingKey("expected verify= on line 3")
    verify_val = lines[2][len("verify="):]
    if verify_val not in ("0", "1"):
        raise UnknownKey(f"verify must be 0 or 1, got {verify_val!r}")
    verify = verify_val == "1"

    roothash: str | None = None
    rest = lines[3:]
    if verify:
        if not rest:
            raise MissingKey("verify=1 requires a roothash= line")
        if not rest[0].startswith("roothash="):
            raise UnknownKey(f"expected roothash=, got {rest[0]!r}")
        roothash = rest[0][len("roothash="):]
        if not _ROOTHASH_RE.match(roothash):
            raise BadHash(f"roothash must be 64 lowercase hex chars, got {roothash!r}")
        rest = rest[1:]
    if rest:
        raise UnknownKey(f"unexpected extra line {rest[0]!r}")
    return BootConfig(cmdline=cmdline, verify=verify, roothash=roothash)


def rootfs_digest(img: DiskImage) -> str:
    """SHA-256 over every byte of partition 3, hex-encoded."""
    return hashlib.sha256(img.read_partition(ROOTFS_PARTITION)).hexdigest()


class RecoveryReason(Enum):
    KERNEL_PANIC_HASH_MISMATCH = "kernel-panic-hash-mismatch"
    CORRUPT_BOOTLOADER = "corrupt-bootloader"
    CORRUPT_ROOTFS = "corrupt-rootfs"


@dataclass(frozen=True)
class BootSuccess:
    config: BootConfig
    users: tuple[User, ...]
    startup_jobs: tuple[StartupJob, ...]


@dataclass(frozen=True)
class RecoveryTriggered:
    reason: RecoveryReason
    detail: str = field(default="", compare=False)


BootOutcome = BootSuccess | RecoveryTriggered


def boot(img: DiskImage) -> BootOutcome:
    """Walk the boot chain without mutating the image.

    Step 1: parse the bootloader config. Step 2: if verification is on,
    compare the rootfs digest to the pinned roothash. Step 3: parse the
    rootfs and hand its users and startup jobs to the outcome.
    """
    try:
        config = parse_boot_config(img.read_partition(BOOT_PARTITION))
    except BootConfigError as exc:
        return RecoveryTriggered(RecoveryReason.CORRUPT_BOOTLOADER, str(exc))

    if config.verify:
        measured = rootfs_digest(img)
        if measured != config.roothash:
            return RecoveryTriggered(
                RecoveryReason.KERNEL_PANIC_HASH_MISMATCH,
                f"measured {measured}, pinned {config.roothash}")

    try:
        rootfs = parse_rootfs(img.read_partition(ROOTFS_PARTITION))
    except RootfsError as exc:
        return RecoveryTriggered(RecoveryReason.CORRUPT_ROOTFS, str(exc))

    return BootSuccess(config=config,
                       users=tuple(rootfs.users),
                       startup_jobs=tuple(rootfs.startup_jobs))
