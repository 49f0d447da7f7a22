"""Author-summary extraction: run git's summarized log and parse its output."""

from __future__ import annotations

import re
import subprocess
from dataclasses import dataclass
from pathlib import Path


class NotARepository(Exception):
    """The given path does not point at a git repository."""


class ToolFailure(Exception):
    """git exited nonzero; captured stderr is attached."""

    def __init__(self, message: str, stderr: str = ""):
        super().__init__(message)
        self.stderr = stderr


@dataclass(frozen=True)
class ShortlogLine:
    """One author summary row, exactly as the tool encoded it (no normalization)."""

    commits: int
    name: str
    email: str


# "<spaces><count><tab><rest>"; git right-pads the count and separates with a tab.
_LINE_RE = re.compile(r"^\s*(\d+)\t(.*)$")


def _git(args: list[str], cwd: Path) -> subprocess.CompletedProcess:
    return subprocess.run(["git", *args], cwd=cwd, capture_output=True)


def collect_shortlog(repo_path: str | Path) -> str:
    """Return the author summary (`git shortlog -sne HEAD`) of a local repository.

    History reachable from the default head is summarized; a repository without
    any commit yields the empty string. Output bytes are decoded with
    surrogateescape so non-UTF8 author names survive losslessly.
    """
    path = Path(repo_path)
    if not path.is_dir():
        raise NotARepository(str(path))
    probe = _git(["rev-parse", "--git-dir"], path)
    if probe.returncode != 0:
        raise NotARepository(str(path))
    head = _git(["rev-parse", "--verify", "-q", "HEAD"], path)
    if head.returncode != 0:
        return ""
    result = _git(["shortlog", "-sne", "HEAD"], path)
    if result.returncode != 0:
        stderr = result.stderr.decode("utf-8", "replace")
        raise ToolFailure(f"git shortlog failed in {path}", stderr=stderr)
    return result.stdout.decode("utf-8", "surrogateescape")


def parse_shortlog(text: str) -> tuple[list[ShortlogLine], list[str]]:
    """Parse summary text into lines plus warnings for anything malformed.

    Total function: arbitrary input never raises. A well-formed line is
    `<spaces><count><tab><name> <<email>>`; the name is everything between the
    tab and the final ` <`, the email is the content of the final angle pair
    (an author name may itself contain '<').
    """
    lines: list[ShortlogLine] = []
    warnings: list[str] = []
    for raw in text.splitlines():
        if not raw.strip():
            continue
        m = _LINE_RE.match(raw)
        if not m or not raw.rstrip("\n").endswith(">"):
            warnings.append(raw)
            continue
        commits = int(m.group(1))
        rest = m.group(2)
        gt = len(rest) - 1
        lt = rest.rfind("<", 0, gt)
        if commits < 1 or rest[gt] != ">" or lt == -1:
            warnings.append(raw)
            continue
        name = rest[:lt]
        if name.endswith(" "):
            name = name[:-1]
        lines.append(ShortlogLine(commits, name, rest[lt + 1 : gt]))
    return lines, warnings


def displayable(s: str) -> str:
    """Re-encode a surrogate-escaped string with replacement characters for safe printing."""
    return s.encode("utf-8", "surrogateescape").decode("utf-8", "replace")
