"""Verified-boot laboratory: disk images, boot chain, attacks, and audit."""

from .attacks import (
    AttackReport,
    Exploit,
    attack_hexpatch,
    attack_overwrite,
    install_spyware,
    make_permissive_bootloader,
)
from .bootchain import (
    BootConfig,
    BootOutcome,
    BootSuccess,
    RecoveryReason,
    RecoveryTriggered,
    boot,
    parse_boot_config,
    rootfs_digest,
    write_boot_config,
)
from .errors import VBootLabError
from .image import DiskImage, PartitionEntry, PartitionRole, create_image
from .mitigation import (
    AuditStatus,
    AuditVerdict,
    encrypt_bootloader,
    verify_integrity,
)
from .rootfs import (
    FileRecord,
    MountMode,
    Privilege,
    RootfsImage,
    StartupJob,
    User,
    build_rootfs,
    chroot_add_user,
    hash_password,
    install_startup_job,
    mount_rootfs,
    parse_rootfs,
)
from .vault import (
    EventSink,
    Session,
    VaultContent,
    create_vault,
    login,
    logout,
    tick,
)

__version__ = "0.1.0"

__all__ = [
    "AttackReport",
    "AuditStatus",
    "AuditVerdict",
    "BootConfig",
    "BootOutcome",
    "BootSuccess",
    "DiskImage",
    "EventSink",
    "Exploit",
    "FileRecord",
    "MountMode",
    "PartitionEntry",
    "PartitionRole",
    "Privilege",
    "RecoveryReason",
    "RecoveryTriggered",
    "RootfsImage",
    "Session",
    "StartupJob",
    "User",
    "VBootLabError",
    "VaultContent",
    "attack_hexpatch",
    "attack_overwrite",
    "boot",
    "build_rootfs",
    "chroot_add_user",
    "create_image",
    "create_vault",
    "encrypt_bootloader",
    "hash_password",
    "install_spyware",
    "install_startup_job",
    "login",
    "logout",
    "make_permissive_bootloader",
    "mount_rootfs",
    "parse_boot_config",
    "parse_rootfs",
    "rootfs_digest",
    "tick",
    "verify_integrity",
    "write_boot_config",
]
