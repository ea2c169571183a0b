"""Shared builders for the test suite.

KDF iteration counts are lowered everywhere except the timing test: the
iteration count is stored per record, so low-iteration images exercise
exactly the same code paths.
"""

from __future__ import annotations

import vbootlab as vb

KDF_ITERS = 1000

SENTINEL_HISTORY = bytes(range(64))
SPY_PATH = "/home/chronos/user/History"


def small_layout(p1: int = 64, p3: int = 64, p12: int = 8) -> list[tuple[int, int, str]]:
    sectors = {1: p1, 2: 8, 3: p3, 4: 8, 5: 8, 6: 1, 7: 1,
               8: 1, 9: 1, 10: 1, 11: 1, 12: p12}
    return [(i, sectors[i], f"P{i}") for i in range(1, 13)]


def default_users() -> list[vb.User]:
    return [vb.User(1000, vb.Privilege.NORMAL, "alice", vb.hash_password("alicepw"))]


def build_disk(*, verify: bool = True,
               users: list[vb.User] | None = None,
               jobs: list[vb.StartupJob] | None = None,
               vaults: list[tuple[str, str, dict[str, bytes]]] | None = None,
               p1: int = 64, p3: int = 64, p12: int = 8,
               cmdline: str = "console=tty1") -> vb.DiskImage:
    """In-memory image with a booted-from rootfs, boot config, and vaults."""
    img = vb.create_image(small_layout(p1, p3, p12))
    if users is None:
        users = default_users()
    control = 0xFF if verify else 0x00
    p3_size = img.entry(3).byte_length
    img.write_partition(3, vb.build_rootfs(users, jobs or [], [], control, p3_size))
    roothash = vb.rootfs_digest(img) if verify else None
    vb.write_boot_config(img, vb.BootConfig(cmdline, verify, roothash))
    for name, password, files in vaults or []:
        vb.create_vault(img, name, password, vb.VaultContent(dict(files)),
                        kdf_iters=KDF_ITERS)
    return img
