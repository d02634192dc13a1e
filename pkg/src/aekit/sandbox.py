"""Isolated, disposable execution environments.

Two backends: a container backend driven through the engine CLI
(create, exec, commit, remove), and a test-only local-process backend
that runs commands in a throwaway temporary directory.  Both capture the
trailing bytes of each output stream, enforce per-command timeouts, and
can snapshot the prepared environment (image commit or tar archive).
"""

from __future__ import annotations

import os
import shutil
import subprocess
import tarfile
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

BACKEND_LOCAL = "local_process"
BACKEND_CONTAINER = "container"

DEFAULT_BASE_IMAGE = "nvidia/cuda:12.4.1-runtime-ubuntu22.04"
TIMEOUT_EXIT_CODE = -1


class SandboxClosed(RuntimeError):
    pass


class BackendUnavailable(RuntimeError):
    pass


class SnapshotFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class SandboxSpec:
    backend: str = BACKEND_LOCAL
    base_image: str = DEFAULT_BASE_IMAGE
    cpu_limit: float | None = None
    memory_limit: str | None = None
    network: str = "allowed"
    workdir: str | None = None
    gpu: bool = False

    def __post_init__(self) -> None:
        if self.backend not in (BACKEND_LOCAL, BACKEND_CONTAINER):
            raise ValueError(f"unknown backend: {self.backend!r}")
        if self.network not in ("allowed", "denied"):
            raise ValueError(f"network must be allowed or denied, got {self.network!r}")
        if self.cpu_limit is not None and self.cpu_limit <= 0:
            raise ValueError("cpu_limit must be positive")


@dataclass(frozen=True)
class CommandStep:
    command: str
    exit_code: int
    stdout_tail: str
    stderr_tail: str
    duration: float
    truncated: bool
    timed_out: bool

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "exit_code": self.exit_code,
            "stdout_tail": self.stdout_tail,
            "stderr_tail": self.stderr_tail,
            "duration": self.duration,
            "truncated": self.truncated,
            "timed_out": self.timed_out,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CommandStep":
        return cls(
            command=doc["command"],
            exit_code=int(doc["exit_code"]),
            stdout_tail=doc["stdout_tail"],
            stderr_tail=doc["stderr_tail"],
            duration=float(doc["duration"]),
            truncated=bool(doc["truncated"]),
            timed_out=bool(doc["timed_out"]),
        )


class _TailBuffer:
    """Keeps only the trailing cap bytes of a stream."""

    def __init__(self, cap: int):
        self.cap = cap
        self.total = 0
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> None:
        self.total += len(chunk)
        self._buf.extend(chunk)
        if len(self._buf) > self.cap:
            del self._buf[: len(self._buf) - self.cap]

    @property
    def truncated(self) -> bool:
        return self.total > self.cap

    def text(self) -> str:
        return bytes(self._buf).decode("utf-8", errors="replace")


def _drain(stream, buf: _TailBuffer) -> None:
    while True:
        chunk = stream.read(65536)
        if not chunk:
            return
        buf.feed(chunk)


class LocalProcessSandbox:
    """Test-only backend: a fresh temporary workdir plus subprocess shells.

    Network policy follows the host (cannot be constrained here), which
    is why this backend exists for fixtures and demos only.
    """

    def __init__(self, spec: SandboxSpec):
        parent = spec.workdir
        if parent is not None:
            Path(parent).mkdir(parents=True, exist_ok=True)
        self.spec = spec
        self.workdir = Path(tempfile.mkdtemp(prefix="aekit-sandbox-", dir=parent))
        self._open = True
        self._snapshot_counter = 0

    @property
    def is_open(self) -> bool:
        return self._open

    def _require_open(self) -> None:
        if not self._open:
            raise SandboxClosed("sandbox has been torn down")

    def run(self, command: str, timeout: float, output_cap: int) -> CommandStep:
        """Run one shell command non-interactively, keeping output tails."""
        self._require_open()
        if not command:
            raise ValueError("command must be nonempty")
        start = time.monotonic()
        proc = subprocess.Popen(
            ["bash", "-lc", command],
            cwd=self.workdir,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            stdin=subprocess.DEVNULL,
        )
        out_buf, err_buf = _TailBuffer(output_cap), _TailBuffer(output_cap)
        readers = [
            threading.Thread(target=_drain, args=(proc.stdout, out_buf), daemon=True),
            threading.Thread(target=_drain, args=(proc.stderr, err_buf), daemon=True),
        ]
        for t in readers:
            t.start()
        timed_out = False
        try:
            proc.wait(timeout=timeout)
        except subprocess.TimeoutExpired:
            timed_out = True
            proc.kill()
            proc.wait()
        for t in readers:
            t.join(timeout=5.0)
        duration = time.monotonic() - start
        return CommandStep(
            command=command,
            exit_code=TIMEOUT_EXIT_CODE if timed_out else proc.returncode,
            stdout_tail=out_buf.text(),
            stderr_tail=err_buf.text(),
            duration=duration,
            truncated=out_buf.truncated or err_buf.truncated,
            timed_out=timed_out,
        )

    def snapshot(self, paper_id: str, dest_dir: str | Path | None = None) -> str:
        """Tar the workdir; returns the archive path as the snapshot ref."""
        if not self._open:
            raise SnapshotFailure("cannot snapshot a closed sandbox")
        self._snapshot_counter += 1
        dest = Path(dest_dir) if dest_dir is not None else self.workdir.parent
        dest.mkdir(parents=True, exist_ok=True)
        name = f"prepare-{paper_id}-{time.time_ns()}-{self._snapshot_counter}.tar"
        ref = dest / name
        try:
            with tarfile.open(ref, "w") as tar:
                for item in sorted(self.workdir.rglob("*")):
                    tar.add(item, arcname=str(item.relative_to(self.workdir)))
        except OSError as exc:
            raise SnapshotFailure(f"archiving failed: {exc}") from exc
        return str(ref)

    def close(self) -> None:
        if self._open:
            shutil.rmtree(self.workdir, ignore_errors=True)
            self._open = False


# runner(args, timeout) -> (exit_code, stdout, stderr); raises
# subprocess.TimeoutExpired on timeout.  Injectable for tests.
CliRunner = Callable[..., tuple[int, str, str]]


def _subprocess_runner(
    args: Sequence[str], timeout: float | None = None
) -> tuple[int, str, str]:
    proc = subprocess.run(args, capture_output=True, text=True, timeout=timeout)
    return proc.returncode, proc.stdout, proc.stderr


class ContainerSandbox:
    """Container backend driven through the engine CLI.

    Lifecycle: `run -d ... sleep infinity` to create, `exec` per command,
    `commit` to snapshot, `rm -f` to tear down.  The engine binary
    (docker-compatible) and the runner are injectable so the command
    sequences are testable without an engine on the host.
    """

    def __init__(
        self,
        spec: SandboxSpec,
        engine: str = "docker",
        runner: CliRunner | None = None,
    ):
        self.spec = spec
        self.engine = engine
        self._run_cli = runner or _subprocess_runner
        self._open = False

        code, _, err = self._run_cli([engine, "version"])
        if code != 0:
            raise BackendUnavailable(f"{engine} is not available: {err.strip()}")

        self.container_name = f"aekit-prepare-{os.getpid()}-{time.time_ns()}"
        self.workdir = "/work"
        args = [engine, "run", "-d", "--name", self.container_name, "-w", self.workdir]
        if spec.network == "denied":
            args += ["--network", "none"]
        if spec.cpu_limit is not None:
            args += ["--cpus", str(spec.cpu_limit)]
        if spec.memory_limit is not None:
            args += ["--memory", spec.memory_limit]
        if spec.gpu:
            args += ["--gpus", "all"]
        args += [spec.base_image, "sleep", "infinity"]
        code, _, err = self._run_cli(args)
        if code != 0:
            raise BackendUnavailable(f"container creation failed: {err.strip()}")
        self._run_cli([engine, "exec", self.container_name, "mkdir", "-p", self.workdir])
        self._open = True
        self._snapshot_counter = 0

    @property
    def is_open(self) -> bool:
        return self._open

    def _require_open(self) -> None:
        if not self._open:
            raise SandboxClosed("container has been removed")

    def run(self, command: str, timeout: float, output_cap: int) -> CommandStep:
        self._require_open()
        if not command:
            raise ValueError("command must be nonempty")
        args = [self.engine, "exec", self.container_name, "bash", "-lc", command]
        start = time.monotonic()
        timed_out = False
        out = err = ""
        code = TIMEOUT_EXIT_CODE
        try:
            code, out, err = self._run_cli(args, timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            # The exec client is killed; the in-container process may linger
            # until teardown, which removes the container entirely.
            timed_out = True
            out = (exc.stdout or b"").decode("utf-8", "replace") if isinstance(exc.stdout, bytes) else (exc.stdout or "")
            err = (exc.stderr or b"").decode("utf-8", "replace") if isinstance(exc.stderr, bytes) else (exc.stderr or "")
        duration = time.monotonic() - start
        out_buf, err_buf = _TailBuffer(output_cap), _TailBuffer(output_cap)
        out_buf.feed(out.encode("utf-8"))
        err_buf.feed(err.encode("utf-8"))
        return CommandStep(
            command=command,
            exit_code=code,
            stdout_tail=out_buf.text(),
            stderr_tail=err_buf.text(),
            duration=duration,
            truncated=out_buf.truncated or err_buf.truncated,
            timed_out=timed_out,
        )

    def snapshot(self, paper_id: str, dest_dir: str | Path | None = None) -> str:
        if not self._open:
            raise SnapshotFailure("cannot snapshot a removed container")
        self._snapshot_counter += 1
        tag = f"prepare/{paper_id}:{time.time_ns()}-{self._snapshot_counter}"
        code, _, err = self._run_cli(
            [self.engine, "commit", self.container_name, tag]
        )
        if code != 0:
            raise SnapshotFailure(f"commit failed: {err.strip()}")
        return tag

    def close(self) -> None:
        if self._open:
            self._run_cli([self.engine, "rm", "-f", self.container_name])
            self._open = False


def open_sandbox(spec: SandboxSpec, **backend_kwargs):
    """Fresh isolated environment with an empty workdir."""
    if spec.backend == BACKEND_LOCAL:
        return LocalProcessSandbox(spec)
    return ContainerSandbox(spec, **backend_kwargs)
