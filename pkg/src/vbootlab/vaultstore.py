"""Partition-1 record store: encrypted user vaults and the mitigation blob.

Layout: magic "UDP1" at offset 0, reserved zeros to 0x200, then TLV
records (kind u8, payload_length u32 LE, payload). Kind 1 is a user
vault, kind 4 the encrypted-bootloader blob. The stream ends at the
first kind-0 byte or the partition end. An all-zero partition is a
valid empty store; the header appears on first write.

Record headers are scanned eagerly but payloads are only sliced on
demand, and every payload read can be mirrored into an access log so
callers can prove which records a code path actually touched.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import BlobExists, DuplicateVault, NoSuchVault, TooLarge, VaultStoreError
from .image import DiskImage

VAULT_PARTITION = 1
STORE_MAGIC = b"UDP1"
RECORD_AREA_OFFSET = 0x200

KIND_VAULT = 1
KIND_BLOB = 4

SALT_LEN = 16
NONCE_LEN = 12


@dataclass(frozen=True)
class VaultRecord:
    name: str
    salt: bytes
    kdf_iters: int
    cipher_id: int
    nonce: bytes
    ciphertext: bytes


@dataclass(frozen=True)
class BlobRecord:
    salt: bytes
    kdf_iters: int
    cipher_id: int
    nonce: bytes
    ciphertext: bytes


@dataclass
class RecordRef:
    """Header-only view of one record; payload() is the logged read."""

    kind: int
    payload_offset: int
    payload_length: int
    _store: "VaultStore"

    def payload(self) -> bytes:
        log = self._store.access_log
        if log is not None:
            log.append((self.kind, self.payload_offset))
        return self._store._data[self.payload_offset:
                                 self.payload_offset + self.payload_length]


def _encode_sealed(salt: bytes, kdf_iters: int, cipher_id: int,
                   nonce: bytes, ciphertext: bytes) -> bytes:
    if len(salt) != SALT_LEN:
        raise VaultStoreError(f"salt must be {SALT_LEN} bytes")
    if len(nonce) != NONCE_LEN:
        raise VaultStoreError(f"nonce must be {NONCE_LEN} bytes")
    if kdf_iters < 1:
        raise VaultStoreError("kdf iteration count must be >= 1")
    if cipher_id not in (1, 2):
        raise VaultStoreError(f"unknown cipher id {cipher_id}")
    return (salt + struct.pack("<I", kdf_iters) + bytes([cipher_id]) + nonce
            + struct.pack("<I", len(ciphertext)) + ciphertext)


def _decode_sealed(payload: bytes, off: int) -> tuple[bytes, int, int, bytes, bytes]:
    need = SALT_LEN + 4 + 1 + NONCE_LEN + 4
    if off + need > len(payload):
        raise VaultStoreError("truncated sealed-data fields")
    salt = payload[off:off + SALT_LEN]
    off += SALT_LEN
    (kdf_iters,) = struct.unpack_from("<I", payload, off)
    off += 4
    cipher_id = payload[off]
    off += 1
    nonce = payload[off:off + NONCE_LEN]
    off += NONCE_LEN
    (ct_len,) = struct.unpack_from("<I", payload, off)
    off += 4
    if off + ct_len != len(payload):
        raise VaultStoreError("ciphertext length does not match payload")
    return salt, kdf_iters, cipher_id, nonce, payload[off:off + ct_len]


def encode_vault(rec: VaultRecord) -> bytes:
    raw_name = rec.name.encode("utf-8")
    if not raw_name or len(raw_name) > 0xFFFF:
        raise VaultStoreError("vault name must be 1..65535 UTF-8 bytes")
    return (struct.pack("<H", len(raw_name)) + raw_name
            + _encode_sealed(rec.salt, rec.kdf_iters, rec.cipher_id,
                             rec.nonce, rec.ciphertext))


def decode_vault(payload: bytes) -> VaultRecord:
    if len(payload) < 2:
        raise VaultStoreError("truncated vault name length")
    (n,) = struct.unpack_from("<H", payload, 0)
    if 2 + n > len(payload):
        raise VaultStoreError("truncated vault name")
    try:
        name = payload[2:2 + n].decode("utf-8")
    except UnicodeDecodeError:
        raise VaultStoreError("vault name is not valid UTF-8") from None
    salt, iters, cipher, nonce, ct = _decode_sealed(payload, 2 + n)
    return VaultRecord(name, salt, iters, cipher, nonce, ct)


def encode_blob(rec: BlobRecord) -> bytes:
    return _encode_sealed(rec.salt, rec.kdf_iters, rec.cipher_id,
                          rec.nonce, rec.ciphertext)


def decode_blob(payload: bytes) -> BlobRecord:
    salt, iters, cipher, nonce, ct = _decode_sealed(payload, 0)
    return BlobRecord(salt, iters, cipher, nonce, ct)


class VaultStore:
    """Short-lived view over partition 1; mutations write back immediately."""

    def __init__(self, img: DiskImage, access_log: list[tuple[int, int]] | None = None):
        self.img = img
        self.access_log = access_log
        self._data = img.read_partition(VAULT_PARTITION)
        self.refs: list[RecordRef] = []
        self._scan()

    def _scan(self) -> None:
        data = self._data
        if data[:4] != STORE_MAGIC:
            if any(data):
                raise VaultStoreError(f"bad store magic {data[:4]!r}")
            return
        off = RECORD_AREA_OFFSET
        while off < len(data):
            kind = data[off]
            if kind == 0:
                break
            if kind not in (KIND_VAULT, KIND_BLOB):
                raise VaultStoreError(f"unknown record kind {kind} at offset {off:#x}")
            if off + 5 > len(data):
                raise VaultStoreError(f"truncated record header at offset {off:#x}")
            (plen,) = struct.unpack_from("<I", data, off + 1)
            if off + 5 + plen > len(data):
                raise VaultStoreError(f"record at offset {off:#x} overruns the partition")
            self.refs.append(RecordRef(kind, off + 5, plen, self))
            off += 5 + plen

    # -- reads ----------------------------------------------------------------

    def vault_names(self) -> list[str]:
        return [decode_vault(r.payload()).name for r in self.refs if r.kind == KIND_VAULT]

    def find_vault(self, name: str) -> VaultRecord | None:
        for ref in self.refs:
            if ref.kind != KIND_VAULT:
                continue
            rec = decode_vault(ref.payload())
            if rec.name == name:
                return rec
        return None

    def blob(self) -> BlobRecord | None:
        """Decode the mitigation blob; touches no vault payloads."""
        found = [r for r in self.refs if r.kind == KIND_BLOB]
        if not found:
            return None
        if len(found) > 1:
            raise VaultStoreError("more than one mitigation blob record")
        return decode_blob(found[0].payload())

    def has_blob(self) -> bool:
        return any(r.kind == KIND_BLOB for r in self.refs)

    # -- writes ---------------------------------------------------------------

    def _raw_records(self) -> list[tuple[int, bytes]]:
        return [(r.kind, r.payload()) for r in self.refs]

    def _write(self, records: list[tuple[int, bytes]]) -> None:
        size = self.img.entry(VAULT_PARTITION).byte_length
        out = bytearray(size)
        out[0:4] = STORE_MAGIC
        off = RECORD_AREA_OFFSET
        for kind, payload in records:
            if off + 5 + len(payload) > size:
                raise TooLarge(f"record store needs more than {size} bytes")
            out[off] = kind
            struct.pack_into("<I", out, off + 1, len(payload))
            out[off + 5:off + 5 + len(payload)] = payload
            off += 5 + len(payload)
        self.img.write_partition(VAULT_PARTITION, bytes(out))
        self._data = bytes(out)
        self.refs = []
        self._scan()

    def add_vault(self, rec: VaultRecord) -> None:
        if self.find_vault(rec.name) is not None:
            raise DuplicateVault(f"vault {rec.name!r} already exists")
        self._write(self._raw_records() + [(KIND_VAULT, encode_vault(rec))])

    def replace_vault(self, rec: VaultRecord) -> None:
        records = self._raw_records()
        for i, (kind, payload) in enumerate(records):
            if kind == KIND_VAULT and decode_vault(payload).name == rec.name:
                records[i] = (KIND_VAULT, encode_vault(rec))
                self._write(records)
                return
        raise NoSuchVault(f"no vault named {rec.name!r}")

    def set_blob(self, rec: BlobRecord, overwrite: bool = False) -> None:
        records = self._raw_records()
        existing = [i for i, (kind, _) in enumerate(records) if kind == KIND_BLOB]
        if existing and not overwrite:
            raise BlobExists("mitigation blob already present")
        records = [r for i, r in enumerate(records) if i not in existing]
        self._write(records + [(KIND_BLOB, encode_blob(rec))])

    def delete_blob(self) -> bool:
        records = self._raw_records()
        kept = [(k, p) for k, p in records if k != KIND_BLOB]
        if len(kept) == len(records):
            return False
        self._write(kept)
        return True
