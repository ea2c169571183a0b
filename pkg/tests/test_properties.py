"""Seeded randomized invariants over the formats and the boot policy."""

from __future__ import annotations

import hashlib
import random
import string

import pytest

import vbootlab as vb
from conftest import build_disk, small_layout
from vbootlab import crypto
from vbootlab.bootchain import parse_boot_config, render_boot_config
from vbootlab.errors import AuthFailure, BadControlByte, MountBlocked
from vbootlab.rootfs import (
    CONTROL_BYTE_OFFSET,
    RootfsImage,
    build_rootfs,
    parse_rootfs,
    serialize_rootfs,
)
from vbootlab.vault import VaultContent, parse_content, serialize_content
from vbootlab.vaultstore import BlobRecord, VaultRecord, VaultStore

SIZE = 64 * 1024
NAME_ALPHABET = string.ascii_lowercase + "0123456789._-áß漢"


def _rand_name(rng: random.Random) -> str:
    return "".join(rng.choice(NAME_ALPHABET) for _ in range(rng.randint(1, 12)))


def _rand_records(rng: random.Random):
    users, names, uids = [], set(), set()
    for _ in range(rng.randint(0, 5)):
        name, uid = _rand_name(rng), rng.randrange(1 << 32)
        if name in names or uid in uids:
            continue
        names.add(name)
        uids.add(uid)
        users.append(vb.User(uid, rng.choice(list(vb.Privilege)), name,
                             rng.randbytes(32)))
    jobs = [vb.StartupJob(rng.randint(1, 90), _rand_name(rng))
            for _ in range(rng.randint(0, 4))]
    files, paths = [], set()
    for _ in range(rng.randint(0, 4)):
        path = "/" + _rand_name(rng)
        if path in paths:
            continue
        paths.add(path)
        files.append(vb.FileRecord(path, rng.randbytes(rng.randint(0, 512))))
    return users, jobs, files


def test_rootfs_round_trip_random():
    for case in range(40):
        rng = random.Random(1000 + case)
        users, jobs, files = _rand_records(rng)
        control = rng.choice([0x00, 0xFF])
        raw = build_rootfs(users, jobs, files, control, SIZE)
        fs = parse_rootfs(raw)
        assert fs.records == [*users, *jobs, *files], f"case {case}"
        assert fs.mount_control == control
        assert serialize_rootfs(fs, SIZE) == raw, f"case {case}: not a fixed point"


def test_boot_config_round_trip_random():
    charset = string.printable.replace("\n", "").replace("\x0b", "").replace("\x0c", "")
    for case in range(40):
        rng = random.Random(2000 + case)
        cmdline = "".join(rng.choice(charset) for _ in range(rng.randint(0, 60)))
        verify = rng.random() < 0.5
        roothash = "".join(rng.choice("0123456789abcdef") for _ in range(64)) \
            if verify else None
        config = vb.BootConfig(cmdline, verify, roothash)
        assert parse_boot_config(render_boot_config(config)) == config, f"case {case}"


def test_vault_content_round_trip_random():
    for case in range(40):
        rng = random.Random(3000 + case)
        files = {"/" + _rand_name(rng): rng.randbytes(rng.randint(0, 256))
                 for _ in range(rng.randint(0, 6))}
        content = VaultContent(files)
        assert parse_content(serialize_content(content)) == content, f"case {case}"


def test_store_round_trip_random():
    for case in range(25):
        rng = random.Random(4000 + case)
        img = build_disk()
        store = VaultStore(img)
        expected = []
        for _ in range(rng.randint(0, 4)):
            rec = VaultRecord(_rand_name(rng), rng.randbytes(16),
                              rng.randint(1, 9999), rng.choice([1, 2]),
                              rng.randbytes(12), rng.randbytes(rng.randint(16, 96)))
            if any(e.name == rec.name for e in expected):
                continue
            store.add_vault(rec)
            expected.append(rec)
        blob = None
        if rng.random() < 0.5:
            blob = BlobRecord(rng.randbytes(16), rng.randint(1, 9999),
                              rng.choice([1, 2]), rng.randbytes(12),
                              rng.randbytes(32))
            store.set_blob(blob)
        again = VaultStore(img)
        assert [again.find_vault(e.name) for e in expected] == expected, f"case {case}"
        assert again.blob() == blob, f"case {case}"


def test_image_layout_round_trip_random():
    for case in range(25):
        rng = random.Random(5000 + case)
        layout = [(i, rng.randint(1, 64), _rand_name(rng)[:8].replace("á", "a")
                   .replace("ß", "s").replace("漢", "h") or "p")
                  for i in range(1, 13)]
        img = vb.create_image(layout)
        raw = img.to_bytes()
        again = vb.DiskImage.from_bytes(raw)
        assert again.to_bytes() == raw, f"case {case}"
        assert [(e.index, e.sector_count, e.label) for e in again.partitions] == \
            [(i, s, l) for i, s, l in layout], f"case {case}"


def test_digest_reacts_to_every_flip():
    img = build_disk(verify=True)
    baseline = vb.rootfs_digest(img)
    length = img.entry(3).byte_length
    rng = random.Random(6000)
    for case in range(30):
        offset = rng.randrange(length)
        old = img.read_byte(3, offset)
        img.write_byte(3, offset, old ^ rng.randint(1, 255))
        assert vb.rootfs_digest(img) != baseline, f"case {case} at {offset:#x}"
        img.write_byte(3, offset, old)
        assert vb.rootfs_digest(img) == baseline


def test_overwrite_attack_is_idempotent():
    rng = random.Random(7000)
    attacker = build_disk(users=[vb.User(7, vb.Privilege.NORMAL, "i",
                                         vb.hash_password("i"))])
    for case in range(10):
        users, jobs, _ = _rand_records(rng)
        victim = build_disk(users=users, jobs=jobs)
        vb.attack_overwrite(victim, attacker)
        once = victim.to_bytes()
        vb.attack_overwrite(victim, attacker)
        assert victim.to_bytes() == once, f"case {case}: second copy changed bytes"


def test_mount_policy_is_total():
    raw = bytearray(build_rootfs([], [], [], 0x00, SIZE))
    for value in range(256):
        raw[CONTROL_BYTE_OFFSET] = value
        if value in (0x00, 0xFF):
            assert parse_rootfs(bytes(raw)).mount_control == value
        else:
            with pytest.raises(BadControlByte):
                parse_rootfs(bytes(raw))

    blocked = build_disk(verify=True)
    with pytest.raises(MountBlocked):
        vb.mount_rootfs(blocked, vb.MountMode.READ_ONLY)
    open_img = build_disk(verify=False)
    vb.mount_rootfs(open_img, vb.MountMode.READ_ONLY).close()


def test_kdf_matches_stdlib_oracle():
    rng = random.Random(8000)
    for case in range(20):
        password = _rand_name(rng)
        salt = rng.randbytes(16)
        iters = rng.randint(1, 2000)
        expected = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"),
                                       salt, iters, dklen=32)
        assert crypto.derive_key(password, salt, iters) == expected, f"case {case}"


def test_aead_rejects_any_tampering():
    rng = random.Random(9000)
    for case in range(20):
        cipher_id = rng.choice([1, 2])
        key, nonce = rng.randbytes(32), rng.randbytes(12)
        plaintext = rng.randbytes(rng.randint(1, 200))
        sealed = crypto.seal(key, nonce, plaintext, cipher_id)
        assert crypto.open_sealed(key, nonce, sealed, cipher_id) == plaintext

        wrong_key = bytes([key[0] ^ 1]) + key[1:]
        with pytest.raises(AuthFailure):
            crypto.open_sealed(wrong_key, nonce, sealed, cipher_id)
        flipped = bytearray(sealed)
        flipped[rng.randrange(len(flipped))] ^= 0x80
        with pytest.raises(AuthFailure):
            crypto.open_sealed(key, nonce, bytes(flipped), cipher_id)
        wrong_nonce = bytes([nonce[0] ^ 1]) + nonce[1:]
        with pytest.raises(AuthFailure):
            crypto.open_sealed(key, wrong_nonce, sealed, cipher_id)


def test_hexpatch_bypass_works_on_random_victims():
    rng = random.Random(10_000)
    for case in range(10):
        users, jobs, files = _rand_records(rng)
        victim = build_disk(verify=True, users=users, jobs=jobs)
        vb.attack_hexpatch(victim, vb.make_permissive_bootloader(victim))
        outcome = vb.boot(victim)
        assert isinstance(outcome, vb.BootSuccess), f"case {case}"
        assert list(outcome.users) == users, f"case {case}: users must survive"
        vb.mount_rootfs(victim, vb.MountMode.READ_WRITE).close()


def test_rootfs_tampering_alone_never_boots():
    rng = random.Random(11_000)
    img = build_disk(verify=True)
    length = img.entry(3).byte_length
    pristine = img.to_bytes()
    offsets = [CONTROL_BYTE_OFFSET] + [rng.randrange(length) for _ in range(20)]
    for offset in offsets:
        victim = vb.DiskImage.from_bytes(pristine)
        old = victim.read_byte(3, offset)
        victim.write_byte(3, offset, old ^ rng.randint(1, 255))
        outcome = vb.boot(victim)
        assert isinstance(outcome, vb.RecoveryTriggered), \
            f"offset {offset:#x}: rootfs tampering without a bootloader swap"
        assert outcome.reason is vb.RecoveryReason.KERNEL_PANIC_HASH_MISMATCH


def test_boot_never_mutates_random_images():
    rng = random.Random(12_000)
    for case in range(10):
        users, jobs, _ = _rand_records(rng)
        img = build_disk(verify=rng.random() < 0.5, users=users, jobs=jobs)
        if rng.random() < 0.3:
            img.write_byte(3, rng.randrange(img.entry(3).byte_length), 0xEE)
        before = img.to_bytes()
        vb.boot(img)
        assert img.to_bytes() == before, f"case {case}"
