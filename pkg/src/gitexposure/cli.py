"""Command-line entry point and the operations it owns: database persistence,
exposure audits, and remediation-script emission.

Commands: fetch, run, stats, graph, recommend, estimate, audit,
rewrite-script, synth. Everything runs offline given fixtures; live fetching
and live cloning are strictly opt-in. Exit codes: 0 success, 1 usage error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import analytics, catalog, coherence, identity, pipeline, shortlog, synthcorpus
from .analytics import DbStats, Metric, database_stats, estimate, fit_curve
from .catalog import CatalogError, FixtureSource, LiveSource, fetch_top
from .coherence import build_graph, recommend
from .identity import CanonicalityViolation, Person, PersonDatabase, is_compromised
from .pipeline import PipelineConfig, SelectionPolicy, run_pipeline, select_for_cloning
from .shortlog import collect_shortlog, displayable, parse_shortlog

log = logging.getLogger(__name__)

DB_FORMAT = "persondb/1"


class CorruptRecord(Exception):
    """A persisted database line could not be decoded; carries the line number."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


# -- database persistence -----------------------------------------------------


def save_database(db: PersonDatabase, path: str | Path) -> None:
    """Write newline-delimited person records, deterministically ordered.

    One header record carries the ingested-line counter; then one person per
    line with sorted fields, ordered by id, so equal databases produce
    byte-identical files.
    """
    db.freeze()
    rows = []
    if db.lines_ingested:
        rows.append(
            json.dumps({"format": DB_FORMAT, "lines_ingested": db.lines_ingested})
        )
    for person in db.persons():
        rows.append(
            json.dumps(
                {
                    "id": person.id,
                    "names": sorted(person.names),
                    "emails": sorted(person.emails),
                    "usernames": sorted(person.usernames),
                    "contributions": {
                        repo: person.contributions[repo]
                        for repo in sorted(person.contributions)
                    },
                }
            )
        )
    Path(path).write_text("".join(row + "\n" for row in rows), encoding="utf-8")


def _person_from_record(data: dict) -> Person:
    if not isinstance(data.get("id"), int):
        raise TypeError("id must be an integer")
    for key in ("names", "emails", "usernames"):
        if not isinstance(data[key], list):
            raise TypeError(f"{key} must be a list")
    if not isinstance(data["contributions"], dict):
        raise TypeError("contributions must be an object")
    person = Person(
        id=data["id"],
        names=set(data["names"]),
        emails=set(data["emails"]),
        usernames=set(data["usernames"]),
        contributions=dict(data["contributions"]),
    )
    for value in person.contributions.values():
        if not isinstance(value, int) or value < 1:
            raise TypeError("contribution counts must be positive integers")
    if not person.names and not person.emails:
        raise TypeError("person needs at least one name or email")
    return person


def load_database(path: str | Path) -> PersonDatabase:
    """Rebuild a database from disk, re-validating canonicality."""
    db = PersonDatabase()
    seen_ids: set[int] = set()
    text = Path(path).read_text(encoding="utf-8")
    for line_no, raw in enumerate(text.splitlines(), 1):
        if not raw.strip():
            continue
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise CorruptRecord(line_no, f"invalid JSON: {exc}") from exc
        if line_no == 1 and isinstance(data, dict) and "format" in data:
            if data.get("format") != DB_FORMAT:
                raise CorruptRecord(line_no, f"unknown format {data.get('format')!r}")
            db.lines_ingested = int(data.get("lines_ingested", 0))
            continue
        try:
            person = _person_from_record(data)
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise CorruptRecord(line_no, str(exc)) from exc
        if person.id in seen_ids:
            raise CorruptRecord(line_no, f"duplicate person id {person.id}")
        seen_ids.add(person.id)
        db.restore_person(person)
    db.check_canonical()
    db.freeze()
    return db


# -- remediation script -------------------------------------------------------


def _sh_embed(value: str) -> str:
    """Escape a value for a double-quoted variable inside a single-quoted filter."""
    escaped = (
        value.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("$", "\\$")
        .replace("`", "\\`")
    )
    return escaped.replace("'", "'\\''")


def emit_rewrite_script(old_email: str, correct_name: str, correct_email: str) -> str:
    """Self-contained shell script rewriting every commit identity using old_email.

    Covers author and committer across all branches and tags. An empty
    correct_name preserves the original names and rewrites emails only.
    Commits never touching old_email are recreated byte-identically, so their
    hashes are preserved.
    """
    if not old_email:
        raise ValueError("old_email must be non-empty")
    name_exports = ""
    if correct_name:
        name_exports = f'CORRECT_NAME="{_sh_embed(correct_name)}"\n'
    committer_name = '    export GIT_COMMITTER_NAME="$CORRECT_NAME"\n' if correct_name else ""
    author_name = '    export GIT_AUTHOR_NAME="$CORRECT_NAME"\n' if correct_name else ""
    return (
        "#!/bin/sh\n"
        "# Rewrites author/committer identities that used OLD_EMAIL, across all\n"
        "# branches and tags. History is rewritten: affected commit hashes change\n"
        "# and remotes must be force-pushed afterwards.\n"
        "set -e\n"
        "export FILTER_BRANCH_SQUELCH_WARNING=1\n"
        "git filter-branch -f --env-filter '\n"
        f'OLD_EMAIL="{_sh_embed(old_email)}"\n'
        f"{name_exports}"
        f'CORRECT_EMAIL="{_sh_embed(correct_email)}"\n'
        'if [ "$GIT_COMMITTER_EMAIL" = "$OLD_EMAIL" ]\n'
        "then\n"
        f"{committer_name}"
        '    export GIT_COMMITTER_EMAIL="$CORRECT_EMAIL"\n'
        "fi\n"
        'if [ "$GIT_AUTHOR_EMAIL" = "$OLD_EMAIL" ]\n'
        "then\n"
        f"{author_name}"
        '    export GIT_AUTHOR_EMAIL="$CORRECT_EMAIL"\n'
        "fi\n"
        "' --tag-name-filter cat -- --branches --tags\n"
    )


# -- exposure audit -----------------------------------------------------------


@dataclass(frozen=True)
class AuditFilters:
    compromised_only: bool = False
    domain: str | None = None
    repository: str | None = None


@dataclass(frozen=True)
class PersonEntry:
    person_id: int
    emails: tuple[str, ...]
    usernames: tuple[str, ...]
    compromised: bool
    contributions: tuple[tuple[str, int], ...]
    recommendation_count: int
    suspect_overmerge: bool  # common-name over-merge flag (> 10 distinct emails)


@dataclass(frozen=True)
class ExposureReport:
    entries: tuple[PersonEntry, ...]
    summary: DbStats


def _empty_stats() -> DbStats:
    return DbStats(0, 0.0, 0.0, 0, 0.0, 0.0, 0.0)


def _matches_domain(person: Person, domain: str) -> bool:
    wanted = domain.lstrip("@").lower()
    return any(
        "@" in email and email.lower().rsplit("@", 1)[1] == wanted
        for email in person.emails
    )


def audit(
    db: PersonDatabase,
    filters: AuditFilters = AuditFilters(),
    graph: coherence.CoherenceGraph | None = None,
) -> ExposureReport:
    """Per-person exposure report over the frozen database."""
    if graph is None:
        graph = build_graph(db)
    entries = []
    for person in db.persons():
        if filters.compromised_only and not is_compromised(person):
            continue
        if filters.domain and not _matches_domain(person, filters.domain):
            continue
        if filters.repository and filters.repository not in person.contributions:
            continue
        k = max(len(graph.vertices), 1)
        recommendations = recommend(graph, person, k)
        entries.append(
            PersonEntry(
                person_id=person.id,
                emails=tuple(sorted(person.emails)),
                usernames=tuple(sorted(person.usernames)),
                compromised=is_compromised(person),
                contributions=tuple(sorted(person.contributions.items())),
                recommendation_count=len(recommendations),
                suspect_overmerge=len(person.emails) > 10,
            )
        )
    summary = database_stats(db) if len(db) else _empty_stats()
    return ExposureReport(tuple(entries), summary)


# -- command implementations --------------------------------------------------


def _is_remote_url(url: str) -> bool:
    if url.startswith(("http://", "https://", "git://", "ssh://")):
        return True
    head = url.split("/", 1)[0]
    return "@" in head and ":" in url  # scp-like user@host:path


def _cmd_fetch(args: argparse.Namespace) -> int:
    source = LiveSource() if args.live else FixtureSource(args.fixtures)
    started = time.perf_counter()
    records = fetch_top(args.num_repos, source)
    elapsed = time.perf_counter() - started
    catalog.save_catalog(records, args.out)
    print(f"fetched {len(records)} repositories in {elapsed:.1f}s -> {args.out}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    fetch_started = time.perf_counter()
    records = catalog.load_catalog(args.catalog)
    fetch_time = time.perf_counter() - fetch_started
    if not records:
        print("error: catalog is empty", file=sys.stderr)
        return 2
    selection = select_for_cloning(records, SelectionPolicy(args.keep))
    remote = [r for r in selection if _is_remote_url(r.clone_url)]
    if remote and not args.live:
        print(
            f"error: catalog selects {len(remote)} remote repositories; "
            "pass --live --i-own-these-repos to clone them",
            file=sys.stderr,
        )
        return 1
    if args.live and not args.i_own_these_repos:
        print(
            "error: --live requires --i-own-these-repos, acknowledging you are "
            "authorized to audit the targeted repositories",
            file=sys.stderr,
        )
        return 1

    db = PersonDatabase()
    phase = {"shortlog": 0.0, "merge": 0.0}

    def sink(record: catalog.RepoRecord, path: Path) -> bool:
        t0 = time.perf_counter()
        text = collect_shortlog(path)
        phase["shortlog"] += time.perf_counter() - t0
        lines, warnings = parse_shortlog(text)
        for warning in warnings:
            log.warning("%s: unparsed shortlog line: %s", record.full_name, warning)
        t1 = time.perf_counter()
        summary = db.ingest_repository(record.full_name, lines)
        phase["merge"] += time.perf_counter() - t1
        log.info(
            "%s: %d new persons, %d updated",
            record.full_name,
            summary.new_persons,
            summary.updated_persons,
        )
        return True

    config = PipelineConfig(
        work_dir=args.work_dir,
        max_on_disk=args.max_on_disk,
        cloner_workers=args.workers,
        per_repo_timeout=args.timeout,
    )
    stats = run_pipeline(selection, config, sink)
    stats.fetched = len(records)
    stats.wall_times["fetch"] = fetch_time
    stats.wall_times.update(phase)
    db.freeze()
    save_database(db, args.db)
    print(
        f"selected {stats.selected} of {stats.fetched} repositories; "
        f"cloned {stats.cloned}, failed {stats.failed}; "
        f"{len(db)} persons from {db.lines_ingested} shortlog lines -> {args.db}"
    )
    print(
        "phase seconds: "
        + ", ".join(f"{k}={v:.1f}" for k, v in sorted(stats.wall_times.items()))
    )
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    db = load_database(args.db)
    stats = database_stats(db)
    pct = analytics.format_pct
    print(f"total persons:        {stats.total_persons}")
    print(f">=2 repositories:     {pct(stats.persons_ge2_repos_pct)}%")
    print(f">=5 commits:          {pct(stats.persons_ge5_commits_pct)}%")
    print(f"shortlog lines:       {stats.shortlog_lines_total}")
    print(f"noreply enabled:      {pct(stats.noreply_enabled_pct)}%")
    print(f"still compromised:    {pct(stats.compromised_pct)}%")
    print(f"failed repositories:  {pct(stats.failed_repos_pct)}%")
    return 0


def _cmd_graph(args: argparse.Namespace) -> int:
    db = load_database(args.db)
    graph = build_graph(db)
    text = coherence.to_dot(graph) if args.format == "dot" else coherence.to_edge_list(graph)
    Path(args.out).write_text(text, encoding="utf-8")
    print(f"{len(graph.vertices)} vertices, {len(graph.edges)} edges -> {args.out}")
    return 0


def _cmd_recommend(args: argparse.Namespace) -> int:
    db = load_database(args.db)
    try:
        person = db.person_by_id(args.person)
    except KeyError:
        print(f"error: no person with id {args.person}", file=sys.stderr)
        return 2
    graph = build_graph(db)
    results = recommend(graph, person, args.k)
    if not results:
        print("no recommendations (no coherent repositories outside their own)")
    for full_name, score in results:
        print(f"{full_name}\t{score:.6f}")
    return 0


def _cmd_estimate(args: argparse.Namespace) -> int:
    metric = Metric(args.metric)
    if args.constants == "published":
        curve = analytics.PUBLISHED_CURVES[metric]
    else:
        points = json.loads(Path(args.constants).read_text(encoding="utf-8"))
        curve = fit_curve([(p[0], p[1]) for p in points], analytics.METRIC_FAMILY[metric])
    value = estimate(metric, args.num_repos, curve)
    if metric is Metric.TOTAL_TIME:
        print(f"{value:,.0f} s  (~{value / 3600:.1f} h)")
    elif metric is Metric.COMPROMISED_PCT:
        print(f"{analytics.format_pct(value)}%")
    else:
        print(f"{value:,.0f}")
    if metric is Metric.TOTAL_PERSONS:
        low, high = analytics.phishing_click_range(int(round(value)))
        print(f"potential phishing clicks: {low:,.0f} - {high:,.0f}")
    return 0


def _cmd_audit(args: argparse.Namespace) -> int:
    db = load_database(args.db)
    filters = AuditFilters(
        compromised_only=args.compromised_only,
        domain=args.domain,
        repository=args.repository,
    )
    report = audit(db, filters)
    if args.json:
        for entry in report.entries:
            print(
                json.dumps(
                    {
                        "person_id": entry.person_id,
                        "emails": list(entry.emails),
                        "usernames": list(entry.usernames),
                        "compromised": entry.compromised,
                        "contributions": dict(entry.contributions),
                        "recommendation_count": entry.recommendation_count,
                        "suspect_overmerge": entry.suspect_overmerge,
                    }
                )
            )
        print(json.dumps({"summary": report.summary.__dict__}))
        return 0
    s = report.summary
    print(
        f"{len(report.entries)} of {s.total_persons} persons match; "
        f"noreply enabled {analytics.format_pct(s.noreply_enabled_pct)}%, "
        f"still compromised {analytics.format_pct(s.compromised_pct)}%"
    )
    for entry in report.entries:
        flags = []
        if entry.compromised:
            flags.append("COMPROMISED")
        if entry.suspect_overmerge:
            flags.append("SUSPECT-OVERMERGE")
        repos = ", ".join(f"{name}:{count}" for name, count in entry.contributions)
        print(f"person {entry.person_id} {' '.join(flags)}".rstrip())
        if entry.emails:
            print(f"  emails:    {displayable(', '.join(entry.emails))}")
        if entry.usernames:
            print(f"  usernames: {displayable(', '.join(entry.usernames))}")
        print(f"  repos:     {displayable(repos)}")
        print(f"  related repositories available: {entry.recommendation_count}")
    return 0


def _cmd_rewrite_script(args: argparse.Namespace) -> int:
    sys.stdout.write(
        emit_rewrite_script(args.old_email, args.new_name or "", args.new_email)
    )
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = synthcorpus.load_corpus_spec(args.spec)
    paths = synthcorpus.generate_corpus(spec, args.out)
    for path in paths:
        print(path)
    return 0


# -- parser -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors must exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="gitexposure",
        description="Audit contributor email exposure across git repositories.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fetch", help="fetch a repository catalog via star windows")
    p.add_argument("--num-repos", type=int, required=True)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--live", action="store_true", help="query the live search API")
    mode.add_argument("--fixtures", metavar="DIR", help="replay recorded page files")
    p.add_argument("--out", required=True, help="catalog output (ndjson)")
    p.set_defaults(func=_cmd_fetch)

    p = sub.add_parser("run", help="select, clone, analyze, and build the database")
    p.add_argument("--catalog", required=True)
    p.add_argument("--keep", type=float, default=0.4, help="fraction kept for cloning")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--max-on-disk", type=int, default=20)
    p.add_argument("--timeout", type=float, default=300.0, help="per-clone timeout (s)")
    p.add_argument("--work-dir", default="gitexposure-work")
    p.add_argument("--db", required=True, help="person database output (ndjson)")
    p.add_argument("--live", action="store_true", help="allow cloning remote URLs")
    p.add_argument(
        "--i-own-these-repos",
        action="store_true",
        help="acknowledge you are authorized to audit the targeted repositories",
    )
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("stats", help="print database statistics")
    p.add_argument("--db", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("graph", help="export the repository coherence graph")
    p.add_argument("--db", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("edgelist", "dot"), default="edgelist")
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("recommend", help="rank related repositories for a person")
    p.add_argument("--db", required=True)
    p.add_argument("--person", type=int, required=True)
    p.add_argument("-k", type=int, default=5)
    p.set_defaults(func=_cmd_recommend)

    p = sub.add_parser("estimate", help="evaluate a scale estimate")
    p.add_argument(
        "--metric", required=True, choices=[m.value for m in Metric]
    )
    p.add_argument("--num-repos", type=int, required=True)
    p.add_argument(
        "--constants",
        default="published",
        help="'published' for the reference constants, or a JSON file of "
        "[x, y] points to refit",
    )
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("audit", help="report exposed emails per person")
    p.add_argument("--db", required=True)
    p.add_argument("--compromised-only", action="store_true")
    p.add_argument("--domain", help="only persons holding an email at this domain")
    p.add_argument("--repository", help="only persons who contributed to this repo")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--text", action="store_true", help="human-readable (default)")
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("rewrite-script", help="emit a commit-identity rewrite script")
    p.add_argument("--old-email", required=True)
    p.add_argument("--new-name", default="", help="empty preserves original names")
    p.add_argument("--new-email", required=True)
    p.set_defaults(func=_cmd_rewrite_script)

    p = sub.add_parser("synth", help="generate a synthetic corpus from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (
        CatalogError,
        CorruptRecord,
        CanonicalityViolation,
        pipeline.WorkDirError,
        shortlog.NotARepository,
        shortlog.ToolFailure,
        analytics.EmptyDatabase,
        analytics.DegenerateInput,
        analytics.FamilyMismatch,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
