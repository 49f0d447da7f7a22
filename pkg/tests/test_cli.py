from __future__ import annotations

import json
import random
import subprocess

import pytest

from gitexposure.catalog import RepoRecord, save_catalog, write_fixture_pages
from gitexposure.cli import (
    AuditFilters,
    CorruptRecord,
    audit,
    emit_rewrite_script,
    load_database,
    main,
    save_database,
)
from gitexposure.coherence import build_graph, recommend
from gitexposure.identity import (
    CanonicalityViolation,
    PersonDatabase,
    is_compromised,
)
from gitexposure.shortlog import ShortlogLine, collect_shortlog, parse_shortlog
from gitexposure.synthcorpus import generate_corpus, random_corpus_spec, repo_full_name

from conftest import commit_count, make_git_repo, run_git


def db_from_spec_lines(seed, max_lines=120):
    spec = random_corpus_spec(seed, max_lines=max_lines)
    db = PersonDatabase()
    for repo, line in spec.lines():
        db.ingest_line(repo, line)
    return db


def db_content(db):
    return {
        p.id: (
            tuple(sorted(p.names)),
            tuple(sorted(p.emails)),
            tuple(sorted(p.usernames)),
            tuple(sorted(p.contributions.items())),
        )
        for p in db.persons()
    }


class TestPersistence:
    @pytest.mark.parametrize("seed", range(5))
    def test_save_load_save_round_trip(self, seed, tmp_path):
        db = db_from_spec_lines(seed)
        first = tmp_path / "db1.ndjson"
        second = tmp_path / "db2.ndjson"
        save_database(db, first)
        loaded = load_database(first)
        save_database(loaded, second)
        assert first.read_bytes() == second.read_bytes()
        assert db_content(loaded) == db_content(db)
        assert loaded.lines_ingested == db.lines_ingested

    def test_empty_database_round_trip(self, tmp_path):
        path = tmp_path / "empty.ndjson"
        save_database(PersonDatabase(), path)
        assert path.read_bytes() == b""
        assert len(load_database(path)) == 0

    def test_save_is_deterministic(self, tmp_path):
        db = db_from_spec_lines(3)
        a, b = tmp_path / "a", tmp_path / "b"
        save_database(db, a)
        save_database(db, b)
        assert a.read_bytes() == b.read_bytes()

    def test_persons_ordered_by_id_with_sorted_fields(self, tmp_path):
        db = PersonDatabase()
        db.ingest_line("o/b", ShortlogLine(1, "Zed", "z@x"))
        db.ingest_line("o/a", ShortlogLine(2, "Zed", "a@x"))
        db.ingest_line("o/a", ShortlogLine(1, "Ann", "ann@x"))
        path = tmp_path / "db.ndjson"
        save_database(db, path)
        rows = [json.loads(l) for l in path.read_text().splitlines()]
        assert rows[0]["format"] == "persondb/1"
        persons = rows[1:]
        assert [p["id"] for p in persons] == [0, 1]
        assert persons[0]["emails"] == ["a@x", "z@x"]
        assert list(persons[0]["contributions"]) == ["o/a", "o/b"]

    def test_corrupt_line_number_reported(self, tmp_path):
        db = db_from_spec_lines(1)
        path = tmp_path / "db.ndjson"
        save_database(db, path)
        lines = path.read_text().splitlines()
        assert len(lines) >= 3
        lines[2] = lines[2][: len(lines[2]) // 2]  # truncate a field mid-record
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorruptRecord) as exc_info:
            load_database(path)
        assert exc_info.value.line_no == 3

    def test_missing_field_is_corrupt(self, tmp_path):
        path = tmp_path / "db.ndjson"
        path.write_text('{"id": 0, "names": ["A"]}\n')
        with pytest.raises(CorruptRecord):
            load_database(path)

    def test_duplicate_id_is_corrupt(self, tmp_path):
        record = {
            "id": 0,
            "names": ["A"],
            "emails": ["a@x"],
            "usernames": [],
            "contributions": {"o/r": 1},
        }
        other = dict(record, emails=["b@x"], names=["B"])
        path = tmp_path / "db.ndjson"
        path.write_text(json.dumps(record) + "\n" + json.dumps(other) + "\n")
        with pytest.raises(CorruptRecord):
            load_database(path)

    def test_shared_key_raises_canonicality_violation(self, tmp_path):
        a = {
            "id": 0,
            "names": ["A"],
            "emails": ["same@x"],
            "usernames": [],
            "contributions": {"o/r": 1},
        }
        b = {
            "id": 1,
            "names": ["B"],
            "emails": ["SAME@X"],
            "usernames": [],
            "contributions": {"o/r": 1},
        }
        path = tmp_path / "db.ndjson"
        path.write_text(json.dumps(a) + "\n" + json.dumps(b) + "\n")
        with pytest.raises(CanonicalityViolation):
            load_database(path)

    def test_keyless_singletons_survive_round_trip(self, tmp_path):
        db = PersonDatabase()
        db.ingest_line("o/r", ShortlogLine(2, "", ""))
        db.ingest_line("o/r", ShortlogLine(3, "", ""))
        path = tmp_path / "db.ndjson"
        save_database(db, path)
        loaded = load_database(path)
        assert len(loaded) == 2
        assert {p.contributions["o/r"] for p in loaded.persons()} == {2, 3}

    def test_surrogate_names_survive_round_trip(self, tmp_path):
        raw = b"J\xf6rg".decode("utf-8", "surrogateescape")
        db = PersonDatabase()
        db.ingest_line("o/r", ShortlogLine(1, raw, "j@x"))
        path = tmp_path / "db.ndjson"
        save_database(db, path)
        loaded = load_database(path)
        assert loaded.persons()[0].names == {raw}


class TestRewriteScript:
    def test_script_shape(self):
        script = emit_rewrite_script("old@x", "Ada", "new@x")
        assert script.startswith("#!/bin/sh")
        assert "FILTER_BRANCH_SQUELCH_WARNING=1" in script
        assert 'OLD_EMAIL="old@x"' in script
        assert 'CORRECT_NAME="Ada"' in script
        assert "--branches --tags" in script

    def test_empty_name_rewrites_emails_only(self):
        script = emit_rewrite_script("old@x", "", "new@x")
        assert "CORRECT_NAME" not in script
        assert "GIT_AUTHOR_NAME" not in script
        assert 'GIT_AUTHOR_EMAIL="$CORRECT_EMAIL"' in script

    def test_old_email_required(self):
        with pytest.raises(ValueError):
            emit_rewrite_script("", "A", "new@x")

    def test_awkward_values_are_escaped(self):
        script = emit_rewrite_script('o"ld@x', "A '$` B", "new@x")
        assert '\\"' in script and "\\$" in script and "\\`" in script

    def run_script(self, repo, script_text):
        script = repo / "fix.sh"
        script.write_text(script_text)
        proc = subprocess.run(
            ["sh", str(script)], cwd=repo, capture_output=True, timeout=60
        )
        assert proc.returncode == 0, proc.stderr.decode("utf-8", "replace")

    def test_rewrites_matching_commits(self, tmp_path):
        repo = make_git_repo(
            tmp_path / "repo",
            [
                ("Ada", "old@x.example"),
                ("Bob", "bob@y.example"),
                ("Ada", "old@x.example"),
                ("Ada", "old@x.example"),
                ("Bob", "bob@y.example"),
            ],
        )
        new_email = "123+ada@users.noreply.github.com"
        self.run_script(repo, emit_rewrite_script("old@x.example", "Ada", new_email))
        lines, _ = parse_shortlog(collect_shortlog(repo))
        by_email = {l.email: l.commits for l in lines}
        assert "old@x.example" not in by_email
        assert by_email[new_email] == 3
        assert commit_count(repo) == 5

    def test_preserves_names_when_new_name_empty(self, tmp_path):
        repo = make_git_repo(
            tmp_path / "repo",
            [("Ada One", "old@x.example"), ("Ada Two", "old@x.example")],
        )
        self.run_script(repo, emit_rewrite_script("old@x.example", "", "new@x.example"))
        lines, _ = parse_shortlog(collect_shortlog(repo))
        assert {(l.name, l.email) for l in lines} == {
            ("Ada One", "new@x.example"),
            ("Ada Two", "new@x.example"),
        }

    def test_noop_when_email_absent_preserves_hashes(self, tmp_path):
        repo = make_git_repo(tmp_path / "repo", [("Ada", "ada@x.example")] * 3)
        before = run_git(["rev-parse", "HEAD"], repo).stdout
        self.run_script(
            repo, emit_rewrite_script("absent@nowhere.example", "N", "new@x.example")
        )
        assert run_git(["rev-parse", "HEAD"], repo).stdout == before


class TestAudit:
    def build_db(self):
        db = PersonDatabase()
        db.ingest_line("o/a", ShortlogLine(3, "Ada", "ada@example.org"))
        db.ingest_line("o/b", ShortlogLine(1, "Ada", "ada@example.org"))
        db.ingest_line("o/a", ShortlogLine(2, "Bob", "bob@corp.example"))
        db.ingest_line("o/a", ShortlogLine(1, "Kay", "7+kay@users.noreply.github.com"))
        db.ingest_line("o/b", ShortlogLine(1, "Kay", "kay@example.org"))
        db.freeze()
        return db

    def test_no_filters_covers_all_persons(self):
        db = self.build_db()
        report = audit(db)
        assert len(report.entries) == len(db)
        assert report.summary.total_persons == len(db)

    def test_compromised_only(self):
        db = self.build_db()
        report = audit(db, AuditFilters(compromised_only=True))
        assert [e.person_id for e in report.entries] == [2]
        assert report.entries[0].compromised
        brute = [p for p in db.persons() if is_compromised(p)]
        assert len(report.entries) == len(brute)

    def test_domain_filter(self):
        db = self.build_db()
        report = audit(db, AuditFilters(domain="@example.org"))
        expected = [
            p.id
            for p in db.persons()
            if any(e.lower().endswith("@example.org") for e in p.emails)
        ]
        assert [e.person_id for e in report.entries] == expected

    def test_repository_filter(self):
        db = self.build_db()
        report = audit(db, AuditFilters(repository="o/b"))
        expected = [p.id for p in db.persons() if "o/b" in p.contributions]
        assert [e.person_id for e in report.entries] == expected

    def test_recommendation_count_matches_recommender(self):
        db = self.build_db()
        graph = build_graph(db)
        report = audit(db, graph=graph)
        for entry in report.entries:
            person = db.person_by_id(entry.person_id)
            expected = recommend(graph, person, max(len(graph.vertices), 1))
            assert entry.recommendation_count == len(expected)

    def test_overmerge_flag(self):
        db = PersonDatabase()
        for i in range(12):
            db.ingest_line("o/r", ShortlogLine(1, "John Smith", f"j{i}@host{i}.example"))
        db.freeze()
        report = audit(db)
        assert report.entries[0].suspect_overmerge

    def test_empty_database(self):
        db = PersonDatabase()
        db.freeze()
        report = audit(db)
        assert report.entries == ()
        assert report.summary.total_persons == 0


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli-corpus")
    spec = random_corpus_spec(17, max_lines=60, repo_count=6)
    paths = generate_corpus(spec, base / "repos")
    rng = random.Random(0)
    records = [
        RepoRecord(repo_full_name(i), str(p.resolve()), 5 + rng.randint(0, 90), rng.randint(1, 40))
        for i, p in enumerate(paths)
    ]
    write_fixture_pages(records, base / "pages")
    return base, records


class TestCommandLine:
    def test_fetch_run_stats_graph_audit_flow(self, cli_corpus, tmp_path, capsys):
        base, records = cli_corpus
        catalog_path = tmp_path / "catalog.ndjson"
        db_path = tmp_path / "db.ndjson"

        rc = main(
            [
                "fetch",
                "--num-repos",
                str(len(records)),
                "--fixtures",
                str(base / "pages"),
                "--out",
                str(catalog_path),
            ]
        )
        assert rc == 0
        assert len(catalog_path.read_text().splitlines()) == len(records)

        rc = main(
            [
                "run",
                "--catalog",
                str(catalog_path),
                "--keep",
                "1.0",
                "--workers",
                "2",
                "--db",
                str(db_path),
                "--work-dir",
                str(tmp_path / "work"),
            ]
        )
        assert rc == 0
        assert db_path.exists()
        assert list((tmp_path / "work").iterdir()) == []

        assert main(["stats", "--db", str(db_path)]) == 0
        out = capsys.readouterr().out
        assert "total persons:" in out

        edges = tmp_path / "edges.tsv"
        assert main(["graph", "--db", str(db_path), "--out", str(edges)]) == 0
        for row in edges.read_text().splitlines():
            src, dst, weight = row.split("\t")
            float(weight)

        dot = tmp_path / "graph.dot"
        assert (
            main(["graph", "--db", str(db_path), "--out", str(dot), "--format", "dot"])
            == 0
        )
        assert dot.read_text().startswith("digraph")

        assert main(["recommend", "--db", str(db_path), "--person", "0", "-k", "3"]) == 0

        capsys.readouterr()  # drain earlier command output
        assert main(["audit", "--db", str(db_path), "--json"]) == 0
        out = capsys.readouterr().out
        rows = [json.loads(line) for line in out.splitlines() if line.strip()]
        assert "summary" in rows[-1]
        entries = rows[:-1]
        loaded = load_database(db_path)
        assert len(entries) == len(loaded)

    def test_estimate_published_constants(self, capsys):
        assert main(["estimate", "--metric", "total-persons", "--num-repos", "100000"]) == 0
        out = capsys.readouterr().out
        assert "269,047" in out
        assert "phishing" in out

    def test_estimate_refit_from_points_file(self, tmp_path, capsys):
        points = [[x, 0.25 * x] for x in (10, 100, 1000)]
        path = tmp_path / "points.json"
        path.write_text(json.dumps(points))
        rc = main(
            [
                "estimate",
                "--metric",
                "total-time",
                "--num-repos",
                "1000",
                "--constants",
                str(path),
            ]
        )
        assert rc == 0
        assert "250" in capsys.readouterr().out

    def test_rewrite_script_command(self, capsys):
        rc = main(
            ["rewrite-script", "--old-email", "a@x", "--new-email", "b@y", "--new-name", "N"]
        )
        assert rc == 0
        assert "filter-branch" in capsys.readouterr().out

    def test_synth_command(self, tmp_path, capsys):
        from gitexposure.synthcorpus import save_corpus_spec

        spec = random_corpus_spec(2, max_lines=10, repo_count=2)
        spec_path = tmp_path / "spec.json"
        save_corpus_spec(spec, spec_path)
        rc = main(["synth", "--spec", str(spec_path), "--out", str(tmp_path / "out")])
        assert rc == 0
        assert (tmp_path / "out" / "repo0000" / ".git").exists()

    def test_usage_errors_exit_1(self, capsys):
        assert main(["estimate"]) == 1  # missing required arguments
        assert main(["no-such-command"]) == 1
        assert main(["fetch", "--num-repos", "5", "--out", "x"]) == 1  # no source

    def test_runtime_errors_exit_2(self, tmp_path, capsys):
        assert main(["stats", "--db", str(tmp_path / "missing.ndjson")]) == 2
        assert (
            main(
                [
                    "fetch",
                    "--num-repos",
                    "5",
                    "--fixtures",
                    str(tmp_path / "nope"),
                    "--out",
                    str(tmp_path / "c"),
                ]
            )
            == 2
        )

    def test_live_run_requires_acknowledgment(self, tmp_path, capsys):
        catalog_path = tmp_path / "catalog.ndjson"
        save_catalog(
            [RepoRecord("o/r", "https://github.example/o/r.git", 5, 1)], catalog_path
        )
        args = [
            "run",
            "--catalog",
            str(catalog_path),
            "--db",
            str(tmp_path / "db"),
            "--work-dir",
            str(tmp_path / "w"),
        ]
        assert main(args) == 1  # remote URLs without --live
        assert main(args + ["--live"]) == 1  # --live without the acknowledgment
        err = capsys.readouterr().err
        assert "--i-own-these-repos" in err

    def test_empty_db_stats_exits_2(self, tmp_path):
        path = tmp_path / "db.ndjson"
        save_database(PersonDatabase(), path)
        assert main(["stats", "--db", str(path)]) == 2
