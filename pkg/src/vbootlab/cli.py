"""Command-line front end.

Every command works on a disk-image file. Readers take a shared advisory
lock, writers an exclusive one, both non-blocking: concurrent access fails
fast instead of corrupting the image. With --json each command prints a
single JSON document tagged "schema": "vbootlab/1"; exit codes carry the
outcome either way.

Password-taking commands read --password first and fall back to the
VBOOTLAB_PASSWORD environment variable.
"""

from __future__ import annotations

import argparse
import fcntl
import json
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass

from . import attacks, bootchain, crypto, mitigation, rootfs, vault
from .errors import (
    AuthFailure,
    BadIndex,
    BootConfigError,
    ImageFormatError,
    MissingIndex,
    NoSuchVault,
    RootfsError,
    VBootLabError,
)
from .image import DiskImage, create_image
from .vaultstore import VaultStore

SCHEMA = "vbootlab/1"
PASSWORD_ENV = "VBOOTLAB_PASSWORD"
DEFAULT_SPY_PATH = "/home/chronos/user/History"
DEFAULT_CMDLINE = "console=tty1 root=/dev/vda3"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


@dataclass
class Output:
    json_mode: bool
    quiet: bool

    def emit(self, text: str | list[str], payload: dict) -> None:
        if self.json_mode:
            print(json.dumps({"schema": SCHEMA, **payload}))
        elif not self.quiet:
            lines = [text] if isinstance(text, str) else text
            for line in lines:
                print(line)

    def fail(self, error: str, message: str) -> None:
        print(f"error: {error}: {message}", file=sys.stderr)
        if self.json_mode:
            print(json.dumps({"schema": SCHEMA, "error": error, "message": message}))


@dataclass
class ImageFile:
    img: DiskImage
    dirty: bool = False


@contextmanager
def _open_image(path: str, *, exclusive: bool):
    """Load an image under an advisory lock; writers flush on clean exit."""
    fh = open(path, "r+b" if exclusive else "rb")
    try:
        op = fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH
        fcntl.flock(fh.fileno(), op | fcntl.LOCK_NB)
        holder = ImageFile(DiskImage.from_bytes(fh.read()))
        yield holder
        if exclusive and holder.dirty:
            fh.seek(0)
            fh.write(holder.img.to_bytes())
            fh.truncate()
    finally:
        fh.close()


def _password_for(args: argparse.Namespace) -> str | None:
    if getattr(args, "password", None):
        return args.password
    return os.environ.get(PASSWORD_ENV) or None


# -- build ---------------------------------------------------------------------

_FIXED_SECTORS = {2: 64, 4: 64, 5: 64, 6: 1, 7: 1, 8: 1, 9: 1, 10: 1, 11: 1}
_LABELS = {1: "STATE", 2: "KERN-A", 3: "ROOT-A", 4: "KERN-B", 5: "ROOT-B",
           6: "KERN-C", 7: "ROOT-C", 8: "OEM", 9: "reserved", 10: "reserved",
           11: "reserved", 12: "EFI-SYSTEM"}


def _parse_user(arg: str) -> rootfs.User:
    parts = arg.split(":")
    if len(parts) < 2 or not parts[0]:
        raise _UsageError(f"--user wants name:password[:super], got {arg!r}")
    priv = rootfs.Privilege.NORMAL
    if len(parts) >= 3 and parts[-1] == "super":
        priv = rootfs.Privilege.SUPERUSER
        parts = parts[:-1]
    password = ":".join(parts[1:])
    if not password:
        raise _UsageError(f"--user {parts[0]!r} has an empty password")
    return rootfs.User(0, priv, parts[0], rootfs.hash_password(password))


def _parse_job(arg: str) -> rootfs.StartupJob:
    minutes, sep, action = arg.partition(":")
    if not sep or not action:
        raise _UsageError(f"--job wants minutes:action, got {arg!r}")
    try:
        every = int(minutes)
    except ValueError:
        raise _UsageError(f"--job interval must be an integer, got {minutes!r}") from None
    return rootfs.StartupJob(every, action)


def _parse_vault(arg: str) -> tuple[str, str, str | None]:
    parts = arg.split(":")
    if len(parts) < 2 or not parts[0] or not parts[1]:
        raise _UsageError(f"--vault wants name:password[:history-file], got {arg!r}")
    history = ":".join(parts[2:]) if len(parts) > 2 else None
    return parts[0], parts[1], history


def cmd_build(args: argparse.Namespace, out: Output) -> int:
    layout = []
    sectors = dict(_FIXED_SECTORS)
    sectors[1] = args.p1_sectors
    sectors[3] = args.p3_sectors
    sectors[12] = args.p12_sectors
    for index in range(1, 13):
        layout.append((index, sectors[index], _LABELS[index]))
    img = create_image(layout)

    users = [_parse_user(a) for a in args.user]
    users = [rootfs.User(1000 + i, u.privilege, u.name, u.password_hash)
             for i, u in enumerate(users)]
    jobs = [_parse_job(a) for a in args.job]
    verify = args.verify == "on"
    control = rootfs.CONTROL_ENFORCED if verify else rootfs.CONTROL_OPEN
    p3_size = img.entry(rootfs.ROOTFS_PARTITION).byte_length
    img.write_partition(rootfs.ROOTFS_PARTITION,
                        rootfs.build_rootfs(users, jobs, [], control, p3_size))

    roothash = bootchain.rootfs_digest(img) if verify else None
    bootchain.write_boot_config(
        img, bootchain.BootConfig(args.cmdline, verify, roothash))

    vault_names = []
    for arg in args.vault:
        name, password, history = _parse_vault(arg)
        files: dict[str, bytes] = {}
        if history is not None:
            with open(history, "rb") as fh:
                files[DEFAULT_SPY_PATH] = fh.read()
        vault.create_vault(img, name, password, vault.VaultContent(files),
                           kdf_iters=args.kdf_iters)
        vault_names.append(name)

    img.save(args.out)
    lines = [f"built {args.out}",
             f"verify {'on' if verify else 'off'}"]
    if roothash:
        lines.append(f"roothash {roothash}")
    out.emit(lines, {"out": args.out, "verify": verify, "roothash": roothash,
                     "users": [u.name for u in users], "vaults": vault_names})
    return EXIT_OK


# -- boot ----------------------------------------------------------------------

def cmd_boot(args: argparse.Namespace, out: Output) -> int:
    with _open_image(args.image, exclusive=False) as holder:
        outcome = bootchain.boot(holder.img)
    if isinstance(outcome, bootchain.BootSuccess):
        out.emit(
            [f"boot: success ({len(outcome.users)} users, "
             f"{len(outcome.startup_jobs)} startup jobs)"],
            {"outcome": "success",
             "cmdline": outcome.config.cmdline,
             "verify": outcome.config.verify,
             "users": [u.name for u in outcome.users],
             "startup_jobs": [{"every_minutes": j.every_minutes, "action": j.action}
                              for j in outcome.startup_jobs]})
        return EXIT_OK
    out.emit([f"boot: recovery ({outcome.reason.value})", f"  {outcome.detail}"],
             {"outcome": "recovery", "reason": outcome.reason.value,
              "detail": outcome.detail})
    return 2


# -- attacks -------------------------------------------------------------------

def _emit_attack(out: Output, report: attacks.AttackReport) -> None:
    out.emit(
        [f"exploit {report.exploit.value}: {report.bytes_written} bytes written",
         f"victim users preserved: {'yes' if report.victim_users_preserved else 'no'}"],
        {"exploit": report.exploit.value,
         "bytes_written": report.bytes_written,
         "victim_users_preserved": report.victim_users_preserved,
         "duration_seconds": report.duration_seconds})


def cmd_exploit1(args: argparse.Namespace, out: Output) -> int:
    with _open_image(args.attacker, exclusive=False) as att:
        with _open_image(args.victim, exclusive=True) as holder:
            report = attacks.attack_overwrite(holder.img, att.img)
            holder.dirty = True
    _emit_attack(out, report)
    return EXIT_OK


def cmd_exploit2(args: argparse.Namespace, out: Output) -> int:
    with open(args.bootloader, "rb") as fh:
        replacement = fh.read()
    with _open_image(args.victim, exclusive=True) as holder:
        p12_len = holder.img.entry(bootchain.BOOT_PARTITION).byte_length
        if len(replacement) < p12_len:
            replacement = replacement + b"\x00" * (p12_len - len(replacement))
        report = attacks.attack_hexpatch(holder.img, replacement)
        holder.dirty = True
    _emit_attack(out, report)
    return EXIT_OK


def cmd_install_spyware(args: argparse.Namespace, out: Output) -> int:
    with _open_image(args.image, exclusive=True) as holder:
        job = attacks.install_spyware(holder.img, args.path, args.dest, args.every)
        holder.dirty = True
    out.emit([f"installed startup job: every {job.every_minutes}m, {job.action!r}"],
             {"path": args.path, "dest": args.dest,
              "every_minutes": job.every_minutes, "action": job.action})
    return EXIT_OK


# -- sessions ------------------------------------------------------------------

def cmd_session(args: argparse.Namespace, out: Output) -> int:
    password = _password_for(args)
    if password is None:
        out.fail("MissingPassword", "pass --password or set VBOOTLAB_PASSWORD")
        return EXIT_USAGE
    with _open_image(args.image, exclusive=True) as holder:
        outcome = bootchain.boot(holder.img)
        if not isinstance(outcome, bootchain.BootSuccess):
            out.emit([f"boot: recovery ({outcome.reason.value})"],
                     {"outcome": "recovery", "reason": outcome.reason.value})
            return 2
        try:
            session = vault.login(holder.img, outcome, args.user, password)
        except (AuthFailure, NoSuchVault) as exc:
            out.fail(type(exc).__name__, str(exc))
            return 3
        sink = vault.EventSink(args.sink)
        appended = vault.tick(session, args.ticks, sink)
        vault.logout(session)
        holder.dirty = True
    out.emit([f"session: {appended} events appended to {args.sink}"],
             {"user": args.user, "ticks": args.ticks,
              "events_appended": appended, "sink": args.sink})
    return EXIT_OK


# -- mitigation ----------------------------------------------------------------

def cmd_protect(args: argparse.Namespace, out: Output) -> int:
    password = _password_for(args)
    if password is None:
        out.fail("MissingPassword", "pass --password or set VBOOTLAB_PASSWORD")
        return EXIT_USAGE
    with _open_image(args.image, exclusive=True) as holder:
        start = time.perf_counter()
        mitigation.encrypt_bootloader(holder.img, password,
                                      overwrite=args.overwrite,
                                      kdf_iters=args.kdf_iters)
        duration = time.perf_counter() - start
        holder.dirty = True
    out.emit([f"protect: bootloader sealed in {duration:.3f}s"],
             {"duration_seconds": duration, "kdf_iters": args.kdf_iters,
              "overwrite": args.overwrite})
    return EXIT_OK


_AUDIT_EXIT = {
    mitigation.AuditStatus.CLEAN: 0,
    mitigation.AuditStatus.TAMPERED: 2,
    mitigation.AuditStatus.AUTH_FAILURE: 3,
    mitigation.AuditStatus.MITIGATION_ABSENT: 4,
}


def cmd_audit(args: argparse.Namespace, out: Output) -> int:
    password = _password_for(args)
    if password is None:
        out.fail("MissingPassword", "pass --password or set VBOOTLAB_PASSWORD")
        return EXIT_USAGE
    with _open_image(args.image, exclusive=False) as holder:
        start = time.perf_counter()
        verdict = mitigation.verify_integrity(holder.img, password)
        duration = time.perf_counter() - start
    lines = [f"audit: {verdict.status.value}"]
    if verdict.status is mitigation.AuditStatus.TAMPERED:
        lines.append(f"  current {verdict.current_sha256}")
        lines.append(f"  stored  {verdict.stored_sha256}")
    lines.append(f"  took {duration:.3f}s")
    out.emit(lines, {"status": verdict.status.value,
                     "current_sha256": verdict.current_sha256,
                     "stored_sha256": verdict.stored_sha256,
                     "duration_seconds": duration})
    return _AUDIT_EXIT[verdict.status]


# -- inspection ----------------------------------------------------------------

def cmd_inspect(args: argparse.Namespace, out: Output) -> int:
    with _open_image(args.image, exclusive=False) as holder:
        img = holder.img
        partitions = [{"index": e.index, "role": e.role.name.lower(),
                       "start_sector": e.start_sector,
                       "sector_count": e.sector_count, "label": e.label}
                      for e in img.partitions]
        payload: dict = {"partitions": partitions}
        lines = [f"image: {args.image} ({img.size_bytes()} bytes)", "partitions:"]
        for e in img.partitions:
            lines.append(f"  {e.index:2d} {e.label:<12} {e.role.name.lower():<16} "
                         f"sectors {e.start_sector}..{e.start_sector + e.sector_count - 1}")

        try:
            config = bootchain.parse_boot_config(
                img.read_partition(bootchain.BOOT_PARTITION))
            payload["boot_config"] = {"cmdline": config.cmdline,
                                      "verify": config.verify,
                                      "roothash": config.roothash}
            lines.append(f"boot config: verify={int(config.verify)}"
                         + (f" roothash={config.roothash}" if config.verify else "")
                         + f" cmdline={config.cmdline!r}")
        except BootConfigError as exc:
            payload["boot_config"] = {"error": str(exc)}
            lines.append(f"boot config: unparseable ({exc})")

        p3 = img.read_partition(rootfs.ROOTFS_PARTITION)
        control = p3[rootfs.CONTROL_BYTE_OFFSET] if len(p3) > rootfs.CONTROL_BYTE_OFFSET else None
        payload["control_byte"] = f"{control:#04x}" if control is not None else None
        lines.append(f"control byte: {payload['control_byte']}")
        try:
            fs = rootfs.parse_rootfs(p3)
            payload["rootfs"] = {"users": len(fs.users),
                                 "startup_jobs": len(fs.startup_jobs),
                                 "files": len(fs.files)}
            lines.append(f"rootfs: {len(fs.users)} users, "
                         f"{len(fs.startup_jobs)} startup jobs, {len(fs.files)} files")
        except RootfsError as exc:
            payload["rootfs"] = {"error": str(exc)}
            lines.append(f"rootfs: unparseable ({exc})")

        store = VaultStore(img)
        payload["vaults"] = store.vault_names()
        payload["mitigation_blob"] = store.has_blob()
        lines.append(f"vaults: {', '.join(payload['vaults']) or '(none)'}")
        lines.append(f"mitigation blob: {'present' if store.has_blob() else 'absent'}")

    out.emit(lines, payload)
    return EXIT_OK


def cmd_patch(args: argparse.Namespace, out: Output) -> int:
    try:
        partition = int(args.partition, 0)
        offset = int(args.offset, 0)
        new = int(args.byte, 0)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    if not 0 <= new <= 0xFF:
        raise _UsageError(f"byte value {new:#x} outside 0..0xff")
    with _open_image(args.image, exclusive=True) as holder:
        try:
            old = holder.img.read_byte(partition, offset)
            holder.img.write_byte(partition, offset, new)
        except (BadIndex, MissingIndex) as exc:
            out.fail(type(exc).__name__, str(exc))
            return EXIT_USAGE
        holder.dirty = True
    out.emit([f"p{partition}[{offset:#x}]: {old:#04x} -> {new:#04x}"],
             {"partition": partition, "offset": f"{offset:#x}",
              "old": f"{old:#04x}", "new": f"{new:#04x}"})
    return EXIT_OK


# -- wiring --------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="vbootlab",
                     description="verified-boot disk-image laboratory")
    parser.add_argument("--json", action="store_true",
                        help="print one JSON document instead of text")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress normal text output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="create a fresh 12-partition image")
    p.add_argument("--out", required=True)
    p.add_argument("--verify", choices=["on", "off"], required=True)
    p.add_argument("--cmdline", default=DEFAULT_CMDLINE)
    p.add_argument("--p1-sectors", type=int, default=2048)
    p.add_argument("--p3-sectors", type=int, default=8192)
    p.add_argument("--p12-sectors", type=int, default=32)
    p.add_argument("--user", action="append", default=[],
                   metavar="NAME:PASSWORD[:super]")
    p.add_argument("--job", action="append", default=[], metavar="MINUTES:ACTION")
    p.add_argument("--vault", action="append", default=[],
                   metavar="NAME:PASSWORD[:HISTORY-FILE]")
    p.add_argument("--kdf-iters", type=int, default=crypto.DEFAULT_KDF_ITERS)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("boot", help="walk the boot chain, report the outcome")
    p.add_argument("image")
    p.set_defaults(func=cmd_boot)

    p = sub.add_parser("exploit1", help="clone attacker rootfs+bootloader onto victim")
    p.add_argument("--victim", required=True)
    p.add_argument("--attacker", required=True)
    p.set_defaults(func=cmd_exploit1)

    p = sub.add_parser("exploit2",
                       help="flip the mount-control byte, swap the bootloader")
    p.add_argument("--victim", required=True)
    p.add_argument("--bootloader", required=True,
                   help="file with a verify=0 config (NUL-padded to fit)")
    p.set_defaults(func=cmd_exploit2)

    p = sub.add_parser("install-spyware",
                       help="add an exfiltration startup job to an open rootfs")
    p.add_argument("--image", required=True)
    p.add_argument("--path", default=DEFAULT_SPY_PATH)
    p.add_argument("--dest", required=True)
    p.add_argument("--every", type=int, default=1)
    p.set_defaults(func=cmd_install_spyware)

    p = sub.add_parser("session", help="boot, log in, run the minute clock, log out")
    p.add_argument("--image", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--password")
    p.add_argument("--ticks", type=int, required=True)
    p.add_argument("--sink", required=True)
    p.set_defaults(func=cmd_session)

    p = sub.add_parser("protect", help="seal an encrypted bootloader copy into p1")
    p.add_argument("--image", required=True)
    p.add_argument("--password")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--kdf-iters", type=int, default=crypto.DEFAULT_KDF_ITERS)
    p.set_defaults(func=cmd_protect)

    p = sub.add_parser("audit", help="compare live bootloader to the sealed copy")
    p.add_argument("--image", required=True)
    p.add_argument("--password")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("inspect", help="describe an image without changing it")
    p.add_argument("image")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("patch", help="write one byte inside a partition")
    p.add_argument("image")
    p.add_argument("--partition", required=True)
    p.add_argument("--offset", required=True)
    p.add_argument("--byte", required=True)
    p.set_defaults(func=cmd_patch)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Output(json_mode=args.json, quiet=args.quiet)
    try:
        return args.func(args, out)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BlockingIOError:
        out.fail("ImageLocked", "another process holds the image lock")
        return EXIT_ERROR
    except FileNotFoundError as exc:
        out.fail("FileNotFound", str(exc))
        return EXIT_USAGE
    except IsADirectoryError as exc:
        out.fail("IsADirectory", str(exc))
        return EXIT_USAGE
    except PermissionError as exc:
        out.fail("PermissionDenied", str(exc))
        return EXIT_USAGE
    except ImageFormatError as exc:
        out.fail(type(exc).__name__, str(exc))
        return EXIT_USAGE
    except VBootLabError as exc:
        out.fail(type(exc).__name__, str(exc))
        return EXIT_ERROR
    except OSError as exc:
        out.fail(type(exc).__name__, str(exc))
        return EXIT_ERROR


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
