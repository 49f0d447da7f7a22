"""Deterministic synthetic git corpora with known identity ground truth.

A corpus spec assigns (alias, email, commit count) tuples per synthetic person
per repository; generation materializes real local repositories realizing
exactly those author lines, so the full pipeline can be verified end to end
against the corpus's known identity partition.
"""

from __future__ import annotations

import json
import random
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .identity import brute_force_resolve, same_partition
from .shortlog import ShortlogLine, ToolFailure

EPOCH = 1577836800  # 2020-01-01T00:00:00Z, fixed so regeneration is byte-stable
COMMIT_STEP = 60
NOREPLY_SUFFIX = "@users.noreply.github.com"


def repo_full_name(index: int) -> str:
    return f"synth/repo{index:04d}"


def repo_dir_name(index: int) -> str:
    return f"repo{index:04d}"


@dataclass(frozen=True)
class CommitSpec:
    """One author line to realize: alias/email indexes into the owning person."""

    repo: int
    name: int
    email: int | None  # None commits with an empty email ("<>")
    count: int


@dataclass(frozen=True)
class SyntheticPerson:
    names: tuple[str, ...]
    emails: tuple[str, ...]
    commits: tuple[CommitSpec, ...]


@dataclass(frozen=True)
class CorpusSpec:
    seed: int
    repo_count: int
    persons: tuple[SyntheticPerson, ...]
    expected_partition: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        emitted = self.lines()
        combos = {(repo, line.name, line.email) for repo, line in emitted}
        if len(combos) != len(emitted):
            raise ValueError("duplicate (repo, name, email) line in corpus spec")
        if not same_partition(self.expected_partition, brute_force_resolve(emitted)):
            raise ValueError(
                "expected_partition disagrees with the match relation over the"
                " spec's emitted lines"
            )

    def lines(self) -> list[tuple[str, ShortlogLine]]:
        """Emitted author lines in canonical order (repo, then person, then spec)."""
        out: list[tuple[str, ShortlogLine]] = []
        for repo_index in range(self.repo_count):
            for person in self.persons:
                for cs in person.commits:
                    if cs.repo != repo_index:
                        continue
                    email = "" if cs.email is None else person.emails[cs.email]
                    out.append(
                        (
                            repo_full_name(repo_index),
                            ShortlogLine(cs.count, person.names[cs.name], email),
                        )
                    )
        return out


def build_corpus_spec(
    seed: int, repo_count: int, persons: Sequence[SyntheticPerson]
) -> CorpusSpec:
    """Assemble a spec, deriving the expected partition from person ownership.

    Construction fails if a person's lines are not connected under the match
    relation or if two persons accidentally collide: the generator-level
    consistency check against the brute-force oracle.
    """
    groups: dict[int, list[int]] = {}
    index = 0
    for repo_index in range(repo_count):
        for person_index, person in enumerate(persons):
            for cs in person.commits:
                if cs.repo != repo_index:
                    continue
                groups.setdefault(person_index, []).append(index)
                index += 1
    partition = tuple(tuple(g) for g in groups.values())
    return CorpusSpec(seed, repo_count, tuple(persons), partition)


# -- generation --------------------------------------------------------------


def _check_ident(name: str, email: str) -> None:
    for value, what in ((name, "alias"), (email, "email")):
        if any(ch in value for ch in "<>\n"):
            raise ValueError(f"{what} {value!r} cannot contain '<', '>' or newlines")


def _fast_import_stream(units: Sequence[tuple[str, str]]) -> bytes:
    chunks: list[bytes] = []
    for i, (name, email) in enumerate(units):
        when = EPOCH + i * COMMIT_STEP
        ident = f"{name} <{email}> {when} +0000".encode()
        message = f"update {i + 1}\n".encode()
        content = f"{i + 1}\n".encode()
        chunks.append(b"commit refs/heads/master\n")
        chunks.append(b"author " + ident + b"\n")
        chunks.append(b"committer " + ident + b"\n")
        chunks.append(b"data %d\n" % len(message) + message)
        chunks.append(b"M 100644 inline counter.txt\n")
        chunks.append(b"data %d\n" % len(content) + content)
        chunks.append(b"\n")
    return b"".join(chunks)


def _run_git(args: list[str], cwd: Path, stdin: bytes | None = None) -> None:
    proc = subprocess.run(["git", *args], cwd=cwd, capture_output=True, input=stdin)
    if proc.returncode != 0:
        raise ToolFailure(
            f"git {args[0]} failed in {cwd}",
            stderr=proc.stderr.decode("utf-8", "replace"),
        )


def generate_corpus(spec: CorpusSpec, out_dir: str | Path) -> list[Path]:
    """Create one real repository per spec repo; returns clone-source paths.

    Deterministic in the seed: commit order is a seeded shuffle and timestamps
    advance from a fixed epoch, so regeneration reproduces identical history.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []
    for repo_index in range(spec.repo_count):
        repo_dir = out / repo_dir_name(repo_index)
        if repo_dir.exists():
            shutil.rmtree(repo_dir)
        repo_dir.mkdir(parents=True)
        _run_git(["init", "-q", "-b", "master"], repo_dir)
        units: list[tuple[str, str]] = []
        for person in spec.persons:
            for cs in person.commits:
                if cs.repo != repo_index:
                    continue
                email = "" if cs.email is None else person.emails[cs.email]
                name = person.names[cs.name]
                _check_ident(name, email)
                units.extend([(name, email)] * cs.count)
        rng = random.Random(f"{spec.seed}:{repo_index}")
        rng.shuffle(units)
        if units:
            _run_git(["fast-import", "--quiet"], repo_dir, stdin=_fast_import_stream(units))
            # materialize the worktree so history-rewrite tooling sees a clean state
            _run_git(["reset", "-q", "--hard"], repo_dir)
        paths.append(repo_dir)
    return paths


# -- spec persistence ---------------------------------------------------------


def save_corpus_spec(spec: CorpusSpec, path: str | Path) -> None:
    payload = {
        "seed": spec.seed,
        "repo_count": spec.repo_count,
        "persons": [
            {
                "names": list(p.names),
                "emails": list(p.emails),
                "commits": [
                    {"repo": c.repo, "name": c.name, "email": c.email, "count": c.count}
                    for c in p.commits
                ],
            }
            for p in spec.persons
        ],
        "expected_partition": [list(g) for g in spec.expected_partition],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_corpus_spec(path: str | Path) -> CorpusSpec:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    persons = tuple(
        SyntheticPerson(
            names=tuple(p["names"]),
            emails=tuple(p["emails"]),
            commits=tuple(
                CommitSpec(c["repo"], c["name"], c["email"], c["count"])
                for c in p["commits"]
            ),
        )
        for p in data["persons"]
    )
    return CorpusSpec(
        seed=data["seed"],
        repo_count=data["repo_count"],
        persons=persons,
        expected_partition=tuple(tuple(g) for g in data["expected_partition"]),
    )


# -- randomized specs ---------------------------------------------------------


def random_corpus_spec(
    seed: int,
    *,
    max_lines: int = 400,
    repo_count: int | None = None,
    max_persons: int = 60,
) -> CorpusSpec:
    """Random but reproducible spec whose identity ground truth is person-exact.

    Persons are namespaced so they never collide with each other; their own
    lines are chained through shared aliases or emails so each person forms
    one connected identity group. Some persons mix real and noreply addresses
    (including an alias equal to the service username) to exercise the
    bridge-merge paths.
    """
    rng = random.Random(seed)
    repos = repo_count if repo_count is not None else rng.randint(2, 6)
    persons: list[SyntheticPerson] = []
    budget = max_lines
    for pidx in range(max_persons):
        if budget <= 0:
            break
        username = f"user{seed}x{pidx}"
        names = [f"Person {seed}.{pidx} Alias0"]
        for j in range(1, rng.randint(1, 3)):
            names.append(f"Person {seed}.{pidx} Alias{j}")
        emails: list[str] = []
        for j in range(rng.randint(0, 3)):
            roll = rng.random()
            if roll < 0.2:
                email = f"{rng.randint(1, 9999999)}+{username}{NOREPLY_SUFFIX}"
            elif roll < 0.3:
                email = f"{username}{NOREPLY_SUFFIX}"
            else:
                email = f"mail{j}.{pidx}.{seed}@host{pidx}.example"
            if email not in emails:  # two legacy rolls yield the same address
                emails.append(email)
        if emails and rng.random() < 0.15:
            # cross-link case: the display name IS the service username
            names.append(username)
        n_lines = min(rng.randint(1, 5), budget)
        combos: list[tuple[int, int | None]] = []
        first_email = rng.randrange(len(emails)) if emails else None
        combos.append((0, first_email))
        while len(combos) < n_lines:
            base_name, base_email = rng.choice(combos)
            if emails and rng.random() < 0.5 and base_email is not None:
                candidate = (rng.randrange(len(names)), base_email)
            else:
                email = rng.randrange(len(emails)) if emails and rng.random() < 0.8 else None
                candidate = (base_name, email)
            if candidate not in combos:
                combos.append(candidate)
            else:
                n_lines -= 1  # give up on this slot; duplicates are forbidden
        commits = []
        used: set[tuple[int, int, int | None]] = set()
        for name_i, email_i in combos:
            repo_i = rng.randrange(repos)
            if (repo_i, name_i, email_i) in used:
                continue
            used.add((repo_i, name_i, email_i))
            commits.append(CommitSpec(repo_i, name_i, email_i, rng.randint(1, 9)))
        if not commits:
            continue
        budget -= len(commits)
        persons.append(
            SyntheticPerson(tuple(names), tuple(emails), tuple(commits))
        )
    return build_corpus_spec(seed, repos, persons)
