"""Person database: email classification, identity merging, compromise detection.

Two author lines belong to the same person when they share a normalized name,
a normalized regular email address, or a hosting-service username extracted
from a noreply address. Names and usernames form one shared keyspace: a line
whose name equals a known username links to that person, and vice versa. The
database resolves this relation incrementally with hash indexes over a
union-find core, so each ingested line costs amortized constant time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .shortlog import ShortlogLine

NOREPLY_DOMAIN = "users.noreply.github.com"


class CanonicalityViolation(Exception):
    """Two live persons share a normalized match key."""


@dataclass(frozen=True)
class RegularEmail:
    address: str


@dataclass(frozen=True)
class NoreplyEmail:
    """Service-issued commit address; the account username is embedded in it."""

    numeric_id: int | None
    username: str


EmailClass = RegularEmail | NoreplyEmail


def classify_email(email: str) -> EmailClass:
    """Split noreply addresses (`[id+]username@` at the service domain) from regular ones."""
    local, sep, domain = email.partition("@")
    if sep and domain.lower() == NOREPLY_DOMAIN and local:
        prefix, plus, rest = local.partition("+")
        if plus and rest and prefix.isascii() and prefix.isdecimal():
            return NoreplyEmail(int(prefix), rest)
        return NoreplyEmail(None, local)
    return RegularEmail(email)


def normalize_name(name: str) -> str:
    """Trim and collapse internal whitespace; case is preserved (it carries signal)."""
    return " ".join(name.split())


def normalize_email(email: str) -> str:
    return email.lower()


def normalize_username(username: str) -> str:
    # service usernames are case-insensitive
    return username.lower()


@dataclass
class Person:
    """A merged identity: raw aliases, exposed regular emails, service usernames."""

    id: int
    names: set[str] = field(default_factory=set)
    emails: set[str] = field(default_factory=set)
    usernames: set[str] = field(default_factory=set)
    contributions: dict[str, int] = field(default_factory=dict)

    def total_commits(self) -> int:
        return sum(self.contributions.values())

    def repo_count(self) -> int:
        return len(self.contributions)

    def _content_size(self) -> int:
        return (
            len(self.names)
            + len(self.emails)
            + len(self.usernames)
            + len(self.contributions)
        )


def is_compromised(person: Person) -> bool:
    """True when a noreply-using identity was still linked to a real address."""
    return bool(person.usernames) and bool(person.emails)


@dataclass(frozen=True)
class Created:
    id: int


@dataclass(frozen=True)
class Absorbed:
    id: int


@dataclass(frozen=True)
class Unified:
    surviving_id: int
    absorbed_ids: tuple[int, ...]


MergeOutcome = Created | Absorbed | Unified


@dataclass(frozen=True)
class RepoIngestSummary:
    new_persons: int
    updated_persons: int


class PersonDatabase:
    """Incrementally merged person set with hash indexes from match keys to persons.

    Index values are internal union-find slots, so merging two persons never
    rewrites existing index entries; stale slots resolve to the surviving
    person through path-compressed lookups.
    """

    def __init__(self) -> None:
        self._parent: list[int] = []
        self._persons: dict[int, Person] = {}  # root slot -> person
        self.name_index: dict[str, int] = {}
        self.email_index: dict[str, int] = {}
        self.username_index: dict[str, int] = {}
        self.lines_ingested = 0
        self.warnings: list[str] = []
        self._next_id = 0
        self._frozen = False

    def __len__(self) -> int:
        return len(self._persons)

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> None:
        """Mark the database read-only; safe to share across threads afterwards."""
        self._frozen = True

    def persons(self) -> list[Person]:
        return sorted(self._persons.values(), key=lambda p: p.id)

    def person_by_id(self, person_id: int) -> Person:
        for person in self._persons.values():
            if person.id == person_id:
                return person
        raise KeyError(person_id)

    # -- union-find core -------------------------------------------------

    def _find(self, slot: int) -> int:
        root = slot
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[slot] != root:
            self._parent[slot], slot = root, self._parent[slot]
        return root

    def _new_slot(self) -> int:
        slot = len(self._parent)
        self._parent.append(slot)
        return slot

    # -- matching --------------------------------------------------------

    def _match_roots(self, nm: str, ec: EmailClass | None) -> set[int]:
        slots = []
        if nm:
            # names and usernames share a keyspace (probe both directions)
            slots.append(self.name_index.get(nm))
            slots.append(self.username_index.get(nm))
        if isinstance(ec, RegularEmail) and ec.address:
            slots.append(self.email_index.get(normalize_email(ec.address)))
        elif isinstance(ec, NoreplyEmail):
            un = normalize_username(ec.username)
            slots.append(self.username_index.get(un))
            slots.append(self.name_index.get(un))
        return {self._find(s) for s in slots if s is not None}

    def ingest_line(self, repo: str, line: ShortlogLine) -> MergeOutcome:
        """Merge one author line into the database and report what happened.

        No matching person creates one; exactly one match absorbs the line;
        several matches (a bridge line hitting distinct persons through
        different keys) first unifies them all into the lowest id.
        """
        if self._frozen:
            raise RuntimeError("database is frozen")
        if line.commits < 1:
            raise ValueError(f"commit count must be >= 1, got {line.commits}")
        nm = normalize_name(line.name)
        ec = classify_email(line.email) if line.email else None
        roots = self._match_roots(nm, ec)
        if not roots:
            slot = self._new_slot()
            person = Person(id=self._next_id)
            self._next_id += 1
            self._persons[slot] = person
            target = slot
            outcome: MergeOutcome = Created(person.id)
            if not nm and ec is None:
                person.names.add(line.name)
                self.warnings.append(
                    f"{repo}: line with empty name and email recorded as "
                    f"singleton person {person.id}"
                )
        elif len(roots) == 1:
            target = next(iter(roots))
            outcome = Absorbed(self._persons[target].id)
        else:
            target, outcome = self._unify(roots)
        self._absorb(target, repo, line, nm, ec)
        self.lines_ingested += 1
        return outcome

    def _unify(self, roots: set[int]) -> tuple[int, Unified]:
        pairs = sorted(((r, self._persons[r]) for r in roots), key=lambda rp: rp[1].id)
        surviving_id = pairs[0][1].id
        absorbed_ids = tuple(p.id for _, p in pairs[1:])
        # graft smaller contents onto the largest person; index entries for the
        # losers keep pointing at their old slots, which now resolve here
        target_root, target = max(pairs, key=lambda rp: rp[1]._content_size())
        for root, person in pairs:
            if root == target_root:
                continue
            self._parent[root] = target_root
            del self._persons[root]
            target.names |= person.names
            target.emails |= person.emails
            target.usernames |= person.usernames
            for repo, count in person.contributions.items():
                target.contributions[repo] = target.contributions.get(repo, 0) + count
        target.id = surviving_id
        return target_root, Unified(surviving_id, absorbed_ids)

    def _absorb(
        self, root: int, repo: str, line: ShortlogLine, nm: str, ec: EmailClass | None
    ) -> None:
        person = self._persons[root]
        if line.name:
            person.names.add(line.name)
        if nm:
            self.name_index.setdefault(nm, root)
        if isinstance(ec, RegularEmail) and ec.address:
            person.emails.add(ec.address)
            self.email_index.setdefault(normalize_email(ec.address), root)
        elif isinstance(ec, NoreplyEmail):
            person.usernames.add(ec.username)
            self.username_index.setdefault(normalize_username(ec.username), root)
        person.contributions[repo] = person.contributions.get(repo, 0) + line.commits

    def ingest_repository(
        self, repo: str, lines: Sequence[ShortlogLine]
    ) -> RepoIngestSummary:
        """Fold one repository's author lines in; count created vs merged outcomes."""
        new = updated = 0
        for line in lines:
            if isinstance(self.ingest_line(repo, line), Created):
                new += 1
            else:
                updated += 1
        return RepoIngestSummary(new, updated)

    # -- restore / validation (persistence support) ----------------------

    def restore_person(self, person: Person) -> None:
        """Re-insert a persisted person and rebuild its index entries."""
        if self._frozen:
            raise RuntimeError("database is frozen")
        slot = self._new_slot()
        self._persons[slot] = person
        self._next_id = max(self._next_id, person.id + 1)
        for name in person.names:
            nm = normalize_name(name)
            if nm:
                self._register(self.name_index, nm, slot, "name")
        for email in person.emails:
            self._register(self.email_index, normalize_email(email), slot, "email")
        for username in person.usernames:
            self._register(
                self.username_index, normalize_username(username), slot, "username"
            )

    def _register(self, index: dict[str, int], key: str, slot: int, kind: str) -> None:
        other = index.get(key)
        if other is not None and self._find(other) != self._find(slot):
            raise CanonicalityViolation(
                f"{kind} key {key!r} is shared by persons "
                f"{self._persons[self._find(other)].id} and {self._persons[self._find(slot)].id}"
            )
        index.setdefault(key, slot)

    def check_canonical(self) -> None:
        """Verify no two live persons share a key and every index entry is live.

        Names and usernames are checked as the single keyspace the matcher
        treats them as; a database where a person's name equals another
        person's username is a pre-merge state and therefore invalid.
        """
        owners: dict[tuple[str, str], int] = {}
        for person in self._persons.values():
            keys = [("x", normalize_name(n)) for n in person.names if normalize_name(n)]
            keys += [("e", normalize_email(e)) for e in person.emails]
            keys += [("x", normalize_username(u)) for u in person.usernames]
            for key in keys:
                prior = owners.setdefault(key, person.id)
                if prior != person.id:
                    raise CanonicalityViolation(
                        f"key {key[1]!r} is shared by persons {prior} and {person.id}"
                    )
        for index, kind in (
            (self.name_index, "x"),
            (self.email_index, "e"),
            (self.username_index, "x"),
        ):
            for key, slot in index.items():
                person = self._persons.get(self._find(slot))
                if person is None or owners.get((kind, key)) != person.id:
                    raise CanonicalityViolation(
                        f"index entry {key!r} does not point at the person holding it"
                    )


def _line_keys(
    repo_line: tuple[str, ShortlogLine]
) -> tuple[frozenset[str], str | None]:
    """Match keys of one line: the shared name/username keyspace plus the email key."""
    _, line = repo_line
    xs = set()
    nm = normalize_name(line.name)
    if nm:
        xs.add(nm)
    email = None
    if line.email:
        ec = classify_email(line.email)
        if isinstance(ec, RegularEmail):
            email = normalize_email(ec.address)
        else:
            xs.add(normalize_username(ec.username))
    return frozenset(xs), email


def brute_force_resolve(
    lines: Sequence[tuple[str, ShortlogLine]]
) -> list[list[int]]:
    """Test oracle: connected components of the pairwise match relation.

    Deliberately dumb quadratic scan over all line pairs, independent of the
    incremental database machinery.
    """
    n = len(lines)
    keys = [_line_keys(rl) for rl in lines]
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        xi, ei = keys[i]
        for j in range(i + 1, n):
            xj, ej = keys[j]
            if (xi and not xi.isdisjoint(xj)) or (ei is not None and ei == ej):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values())


def database_partition(
    db: PersonDatabase, lines: Sequence[tuple[str, ShortlogLine]]
) -> list[list[int]]:
    """Group line indices by the person that owns them after full ingestion.

    Lines carrying no match key are singletons by construction.
    """
    groups: dict[int, list[int]] = {}
    singletons: list[list[int]] = []
    for i, (repo, line) in enumerate(lines):
        nm = normalize_name(line.name)
        ec = classify_email(line.email) if line.email else None
        roots = db._match_roots(nm, ec)
        if not roots:
            singletons.append([i])
            continue
        if len(roots) != 1:
            raise CanonicalityViolation(
                f"line {i} resolves to {len(roots)} persons after ingestion"
            )
        groups.setdefault(db._persons[next(iter(roots))].id, []).append(i)
    return sorted(list(groups.values()) + singletons)


def same_partition(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> bool:
    return {frozenset(g) for g in a} == {frozenset(g) for g in b}


__all__ = [
    "NOREPLY_DOMAIN",
    "CanonicalityViolation",
    "RegularEmail",
    "NoreplyEmail",
    "EmailClass",
    "classify_email",
    "normalize_name",
    "normalize_email",
    "normalize_username",
    "Person",
    "is_compromised",
    "Created",
    "Absorbed",
    "Unified",
    "MergeOutcome",
    "RepoIngestSummary",
    "PersonDatabase",
    "brute_force_resolve",
    "database_partition",
    "same_partition",
]
