"""Exception hierarchy shared by all vbootlab modules.

Every failure mode carries a stable class name so the CLI can report
machine-matchable error names (``type(err).__name__``) and scenario
scripts never have to parse prose.
"""


class VBootLabError(Exception):
    """Base class for all vbootlab errors."""


# --- disk image container ---------------------------------------------------

class ImageFormatError(VBootLabError):
    """The on-disk image container violates the .cvd format."""


class BadImageMagic(ImageFormatError):
    pass


class BadSectorSize(ImageFormatError):
    pass


class BadPartitionCount(ImageFormatError):
    pass


class BadPartitionTable(ImageFormatError):
    """A partition entry field is malformed (named in the message)."""


class DuplicateIndex(VBootLabError):
    pass


class MissingIndex(VBootLabError):
    pass


class Overflow(VBootLabError):
    """Requested image exceeds the configured size cap."""


class BadIndex(VBootLabError):
    """Partition index outside 1..=12."""


class LengthMismatch(VBootLabError):
    """Write buffer does not match the partition byte length."""


class SizeMismatch(VBootLabError):
    """Source and destination partitions differ in byte length."""


# --- rootfs -----------------------------------------------------------------

class RootfsError(VBootLabError):
    pass


class BadMagic(RootfsError):
    pass


class BadVersion(RootfsError):
    pass


class BadControlByte(RootfsError):
    pass


class CorruptRecord(RootfsError):
    """Record area damaged; ``offset`` is the first offending byte offset."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"corrupt record at offset {offset:#x}: {message}")
        self.offset = offset


class TooLarge(VBootLabError):
    """Serialized payload does not fit its target partition."""


class DuplicateUser(VBootLabError):
    pass


class MountBlocked(VBootLabError):
    """Mount refused: the control byte enforces no-mount/read-only."""


class NotWritable(VBootLabError):
    """Mutation attempted through a read-only mount handle."""


class AlreadyMounted(VBootLabError):
    """A second mount was attempted while a handle is still open."""


class BadRecord(VBootLabError):
    """A record violates its own invariants at build time."""


# --- boot config ------------------------------------------------------------

class BootConfigError(VBootLabError):
    pass


class BadHeader(BootConfigError):
    pass


class UnknownKey(BootConfigError):
    pass


class MissingKey(BootConfigError):
    pass


class BadHash(BootConfigError):
    pass


# --- vaults and sessions ----------------------------------------------------

class VaultStoreError(VBootLabError):
    """Partition-1 record area is damaged."""


class DuplicateVault(VBootLabError):
    pass


class NoSuchVault(VBootLabError):
    pass


class AuthFailure(VBootLabError):
    """Authenticated decryption failed (wrong password or forged data)."""


class BootRequired(VBootLabError):
    """Login attempted without a successful boot outcome."""


class UseAfterLogout(VBootLabError):
    pass


class EmptyPassword(VBootLabError):
    pass


# --- attacks ----------------------------------------------------------------

class InconsistentAttackerImage(VBootLabError):
    """Attacker image would brick itself: its own boot does not succeed."""


class AlreadyPatched(VBootLabError):
    """Control byte is not 0xFF; the single-byte patch was already applied."""


class BadReplacement(VBootLabError):
    """Replacement bootloader is unusable for the hex-patch exploit."""


# --- mitigation -------------------------------------------------------------

class BlobExists(VBootLabError):
    """A protection blob is already present and overwrite was not requested."""
