"""Clone selection and the bounded clone-and-analyze pipeline.

Selection ranks the catalog by sqrt(stars)/size and keeps the smallest
fraction. The pipeline then runs concurrent clone workers feeding one
sequential analysis consumer; a semaphore sized to the on-disk cap provides
backpressure, so at no instant do more cloned repositories exist than allowed.
Every repository is deleted right after its analysis callback returns.
"""

from __future__ import annotations

import logging
import math
import os
import shutil
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from queue import Queue
from typing import Callable, Sequence

from .catalog import RepoRecord

log = logging.getLogger(__name__)


class WorkDirError(Exception):
    """The working directory cannot be created or written."""


def clone_score(stars: int, size_kb: int) -> float:
    """Ranking score: prefer well-starred repositories that are cheap to clone."""
    return math.sqrt(stars) / max(size_kb, 1)


@dataclass(frozen=True)
class SelectionPolicy:
    keep_fraction: float = 0.4
    score: Callable[[int, int], float] = clone_score

    def __post_init__(self) -> None:
        if not 0 < self.keep_fraction <= 1:
            raise ValueError("keep_fraction must be in (0, 1]")


def select_for_cloning(
    catalog: Sequence[RepoRecord], policy: SelectionPolicy = SelectionPolicy()
) -> list[RepoRecord]:
    """Keep the ceil(keep_fraction * n) best-scoring repositories.

    Pure function: descending score, ties broken by ascending full name.
    """
    if not catalog:
        raise ValueError("catalog must be non-empty")
    keep = math.ceil(policy.keep_fraction * len(catalog))
    ranked = sorted(
        catalog, key=lambda r: (-policy.score(r.stars, r.size_kb), r.full_name)
    )
    return ranked[:keep]


@dataclass
class PipelineConfig:
    work_dir: Path | str
    max_on_disk: int = 20
    cloner_workers: int = 4
    per_repo_timeout: float = 300.0

    def __post_init__(self) -> None:
        if self.cloner_workers < 1:
            raise ValueError("cloner_workers must be >= 1")
        if self.max_on_disk < self.cloner_workers:
            raise ValueError("max_on_disk must be >= cloner_workers")
        if self.per_repo_timeout <= 0:
            raise ValueError("per_repo_timeout must be positive")


@dataclass(frozen=True)
class RepoFailure:
    full_name: str
    stage: str  # "clone" or "analyze"
    detail: str


@dataclass
class PipelineStats:
    fetched: int = 0
    selected: int = 0
    cloned: int = 0
    failed: int = 0
    wall_times: dict[str, float] = field(default_factory=dict)
    max_on_disk_observed: int = 0
    failures: list[RepoFailure] = field(default_factory=list)


@dataclass(frozen=True)
class _Cloned:
    record: RepoRecord
    path: Path
    seconds: float


@dataclass(frozen=True)
class _CloneFailed:
    record: RepoRecord
    detail: str
    seconds: float


class _WorkerDone:
    pass


def _dest_name(full_name: str) -> str:
    owner, name = full_name.split("/", 1)
    return f"{owner}__{name}"


def _clone(url: str, dest: Path, timeout: float) -> str | None:
    """Run the clone; return an error description or None on success."""
    try:
        proc = subprocess.run(
            ["git", "clone", "--quiet", url, str(dest)],
            capture_output=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired:
        return f"clone timed out after {timeout:.0f}s"
    except OSError as exc:
        return f"cannot run git: {exc}"
    if proc.returncode != 0:
        stderr = proc.stderr.decode("utf-8", "replace").strip()
        if not stderr:
            return f"clone exited {proc.returncode}"
        return stderr if len(stderr) <= 4000 else stderr[:4000] + " [truncated]"
    return None


def _rmtree_quiet(path: Path) -> None:
    shutil.rmtree(path, ignore_errors=True)


def run_pipeline(
    selection: Sequence[RepoRecord],
    config: PipelineConfig,
    sink: Callable[[RepoRecord, Path], bool],
) -> PipelineStats:
    """Clone every selected repository, hand it to the sink once, then delete it.

    Individual failures (clone error, timeout, sink error or False return) are
    recorded and never abort the run. Workers communicate with the single
    consumer through messages; only the consumer mutates the stats. The
    observed on-disk high-water mark is tracked for verification.
    """
    work_dir = Path(config.work_dir)
    try:
        work_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WorkDirError(f"cannot create {work_dir}: {exc}") from exc
    if not os.access(work_dir, os.W_OK):
        raise WorkDirError(f"work directory not writable: {work_dir}")

    stats = PipelineStats(selected=len(selection))
    stats.wall_times["clone"] = 0.0
    if not selection:
        return stats

    todo: Queue = Queue()
    for record in selection:
        todo.put(record)
    for _ in range(config.cloner_workers):
        todo.put(None)
    handoff: Queue = Queue()
    slots = threading.BoundedSemaphore(config.max_on_disk)
    disk_lock = threading.Lock()
    on_disk = 0

    def slot_acquire() -> None:
        nonlocal on_disk
        slots.acquire()
        with disk_lock:
            on_disk += 1
            stats.max_on_disk_observed = max(stats.max_on_disk_observed, on_disk)

    def slot_release() -> None:
        nonlocal on_disk
        with disk_lock:
            on_disk -= 1
        slots.release()

    def clone_worker() -> None:
        while True:
            record = todo.get()
            if record is None:
                handoff.put(_WorkerDone())
                return
            slot_acquire()
            dest = work_dir / _dest_name(record.full_name)
            if dest.exists():
                _rmtree_quiet(dest)
            started = time.perf_counter()
            error = _clone(record.clone_url, dest, config.per_repo_timeout)
            elapsed = time.perf_counter() - started
            if error is None:
                handoff.put(_Cloned(record, dest, elapsed))
            else:
                _rmtree_quiet(dest)
                slot_release()
                handoff.put(_CloneFailed(record, error, elapsed))

    workers = [
        threading.Thread(target=clone_worker, name=f"cloner-{i}")
        for i in range(config.cloner_workers)
    ]
    for worker in workers:
        worker.start()

    done = 0
    while done < len(workers):
        msg = handoff.get()
        if isinstance(msg, _WorkerDone):
            done += 1
            continue
        stats.wall_times["clone"] += msg.seconds
        if isinstance(msg, _CloneFailed):
            stats.failed += 1
            stats.failures.append(RepoFailure(msg.record.full_name, "clone", msg.detail))
            log.warning("clone failed for %s: %s", msg.record.full_name, msg.detail)
            continue
        try:
            ok = bool(sink(msg.record, msg.path))
            detail = "" if ok else "sink reported failure"
        except Exception as exc:  # sink bugs must not kill the run
            ok = False
            detail = f"sink raised {exc!r}"
        # delete only after the sink returned, so analysis never races deletion
        _rmtree_quiet(msg.path)
        slot_release()
        if ok:
            stats.cloned += 1
        else:
            stats.failed += 1
            stats.failures.append(RepoFailure(msg.record.full_name, "analyze", detail))
            log.warning("analysis failed for %s: %s", msg.record.full_name, detail)

    for worker in workers:
        worker.join()
    return stats
