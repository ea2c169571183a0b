"""Rootfs records, the mount-control byte, and mount semantics."""

from __future__ import annotations

import hashlib
import struct

import pytest

import vbootlab as vb
from conftest import build_disk
from vbootlab.errors import (
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
from vbootlab.rootfs import (
    CONTROL_BYTE_OFFSET,
    RootfsImage,
    build_rootfs,
    parse_rootfs,
    serialize_rootfs,
)

SIZE = 32 * 1024


def _users():
    return [vb.User(1000, vb.Privilege.NORMAL, "alice", vb.hash_password("a")),
            vb.User(0, vb.Privilege.SUPERUSER, "root", vb.hash_password("r"))]


def _jobs():
    return [vb.StartupJob(5, "exfil /home/chronos/user/History host:/loot")]


def _files():
    return [vb.FileRecord("/etc/version", b"release 1\n")]


def test_build_parse_round_trip():
    raw = build_rootfs(_users(), _jobs(), _files(), 0xFF, SIZE)
    fs = parse_rootfs(raw)
    assert fs.mount_control == 0xFF
    assert fs.users == _users()
    assert fs.startup_jobs == _jobs()
    assert fs.files == _files()
    assert fs.records == [*_users(), *_jobs(), *_files()], "insertion order kept"


def test_serialization_is_canonical_fixed_point():
    raw = build_rootfs(_users(), _jobs(), _files(), 0x00, SIZE)
    assert serialize_rootfs(parse_rootfs(raw), SIZE) == raw


def test_control_byte_sits_at_pinned_offset():
    raw = build_rootfs([], [], [], 0xFF, SIZE)
    assert raw[CONTROL_BYTE_OFFSET] == 0xFF
    assert raw[0:4] == b"RFS1"
    (version,) = struct.unpack_from("<I", raw, 4)
    assert version == 1


def test_build_rejects_bad_inputs():
    with pytest.raises(BadControlByte):
        build_rootfs([], [], [], 0x5A, SIZE)
    with pytest.raises(TooLarge):
        build_rootfs([], [], [vb.FileRecord("/big", b"x" * SIZE)], 0x00, SIZE)
    with pytest.raises(DuplicateUser):
        u = _users()[0]
        build_rootfs([u, vb.User(u.uid, u.privilege, "other", u.password_hash)],
                     [], [], 0x00, SIZE)
    with pytest.raises(DuplicateUser):
        u = _users()[0]
        build_rootfs([u, vb.User(2000, u.privilege, u.name, u.password_hash)],
                     [], [], 0x00, SIZE)
    with pytest.raises(BadRecord):
        build_rootfs([], [vb.StartupJob(0, "noop")], [], 0x00, SIZE)
    with pytest.raises(BadRecord):
        build_rootfs([], [vb.StartupJob(1, "")], [], 0x00, SIZE)
    with pytest.raises(BadRecord):
        build_rootfs([vb.User(1, vb.Privilege.NORMAL, "x", b"short")],
                     [], [], 0x00, SIZE)
    with pytest.raises(BadRecord):
        build_rootfs([], [], [vb.FileRecord("/a", b""), vb.FileRecord("/a", b"")],
                     0x00, SIZE)


def test_parse_rejects_superblock_corruption():
    raw = bytearray(build_rootfs(_users(), [], [], 0xFF, SIZE))
    with pytest.raises(BadMagic):
        parse_rootfs(bytes(raw[:0x200]))
    bad = bytes(raw).replace(b"RFS1", b"NOPE", 1)
    with pytest.raises(BadMagic):
        parse_rootfs(bad)
    v2 = bytearray(raw)
    struct.pack_into("<I", v2, 4, 2)
    with pytest.raises(BadVersion):
        parse_rootfs(bytes(v2))
    half = bytearray(raw)
    half[CONTROL_BYTE_OFFSET] = 0x80
    with pytest.raises(BadControlByte):
        parse_rootfs(bytes(half))


def test_parse_names_the_corrupt_offset():
    raw = bytearray(build_rootfs(_users(), [], [], 0x00, SIZE))
    overrun = bytearray(raw)
    struct.pack_into("<Q", overrun, 8, SIZE)  # record area past partition end
    with pytest.raises(CorruptRecord) as exc:
        parse_rootfs(bytes(overrun))
    assert exc.value.offset == 8

    badkind = bytearray(raw)
    badkind[0x600] = 0x77
    with pytest.raises(CorruptRecord) as exc:
        parse_rootfs(bytes(badkind))
    assert exc.value.offset == 0x600

    badlen = bytearray(raw)
    struct.pack_into("<I", badlen, 0x601, 1 << 30)  # payload overruns area
    with pytest.raises(CorruptRecord) as exc:
        parse_rootfs(bytes(badlen))
    assert exc.value.offset == 0x600


def test_parse_rejects_duplicate_users_as_corruption():
    u = _users()[0]
    fs = RootfsImage(0x00, [u])
    raw = serialize_rootfs(fs, SIZE)
    # duplicate the single user record by doubling the record area
    (area_len,) = struct.unpack_from("<Q", raw, 8)
    rec = raw[0x600:0x600 + area_len]
    doubled = bytearray(raw)
    struct.pack_into("<Q", doubled, 8, area_len * 2)
    doubled[0x600 + area_len:0x600 + 2 * area_len] = rec
    with pytest.raises(CorruptRecord):
        parse_rootfs(bytes(doubled))


def test_mount_policy_follows_control_byte():
    locked = build_disk(verify=True)
    for mode in (vb.MountMode.READ_ONLY, vb.MountMode.READ_WRITE):
        with pytest.raises(MountBlocked):
            vb.mount_rootfs(locked, mode)

    open_img = build_disk(verify=False)
    handle = vb.mount_rootfs(open_img, vb.MountMode.READ_ONLY)
    assert [u.name for u in handle.rootfs.users] == ["alice"]
    with pytest.raises(AlreadyMounted):
        vb.mount_rootfs(open_img, vb.MountMode.READ_WRITE)
    handle.close()
    vb.mount_rootfs(open_img, vb.MountMode.READ_WRITE).close()


def test_read_only_mount_rejects_writes():
    img = build_disk(verify=False)
    with vb.mount_rootfs(img, vb.MountMode.READ_ONLY) as handle:
        with pytest.raises(NotWritable):
            vb.chroot_add_user(handle, vb.User(2000, vb.Privilege.NORMAL, "eve",
                                               vb.hash_password("e")))
    with pytest.raises(NotWritable):
        vb.install_startup_job(handle, vb.StartupJob(1, "noop"))  # closed handle


def test_chroot_add_user_persists_and_checks_duplicates():
    img = build_disk(verify=False)
    phony = vb.User(0, vb.Privilege.SUPERUSER, "phony-root", vb.hash_password("p"))
    with vb.mount_rootfs(img, vb.MountMode.READ_WRITE) as handle:
        vb.chroot_add_user(handle, phony)
        with pytest.raises(DuplicateUser):
            vb.chroot_add_user(handle, phony)
    fs = parse_rootfs(img.read_partition(3))
    assert phony in fs.users, "added user must survive re-parse"
    outcome = vb.boot(img)
    assert isinstance(outcome, vb.BootSuccess)
    assert phony in outcome.users


def test_install_startup_job_appends_in_order():
    img = build_disk(verify=False, jobs=[vb.StartupJob(7, "first")])
    with vb.mount_rootfs(img, vb.MountMode.READ_WRITE) as handle:
        vb.install_startup_job(handle, vb.StartupJob(1, "second"))
    fs = parse_rootfs(img.read_partition(3))
    assert [j.action for j in fs.startup_jobs] == ["first", "second"]


def test_password_hash_matches_plain_sha256():
    assert vb.hash_password("tr0ub4dor") == hashlib.sha256(b"tr0ub4dor").digest()
