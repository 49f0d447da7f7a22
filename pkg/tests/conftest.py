from __future__ import annotations

import subprocess
from pathlib import Path

import pytest


def run_git(args, cwd, check=True, stdin=None):
    proc = subprocess.run(["git", *args], cwd=cwd, capture_output=True, input=stdin)
    if check and proc.returncode != 0:
        raise AssertionError(
            f"git {' '.join(args)} failed: {proc.stderr.decode('utf-8', 'replace')}"
        )
    return proc


def make_git_repo(path: Path, commits: list[tuple[str, str]]) -> Path:
    """Build a repository with one commit per (author name, author email).

    Independent of the package's own corpus generator: plain `git commit`
    with identity environment variables.
    """
    path.mkdir(parents=True, exist_ok=True)
    run_git(["init", "-q", "-b", "master"], path)
    env_base = {
        "GIT_AUTHOR_DATE": "2020-01-01T00:00:00 +0000",
        "GIT_COMMITTER_DATE": "2020-01-01T00:00:00 +0000",
    }
    import os

    for i, (name, email) in enumerate(commits):
        (path / "f.txt").write_text(f"{i}\n")
        run_git(["add", "f.txt"], path)
        env = dict(os.environ)
        env.update(env_base)
        env.update(
            {
                "GIT_AUTHOR_NAME": name,
                "GIT_AUTHOR_EMAIL": email,
                "GIT_COMMITTER_NAME": name,
                "GIT_COMMITTER_EMAIL": email,
            }
        )
        proc = subprocess.run(
            ["git", "commit", "-q", "-m", f"c{i}"],
            cwd=path,
            env=env,
            capture_output=True,
        )
        if proc.returncode != 0:
            raise AssertionError(proc.stderr.decode("utf-8", "replace"))
    return path


def commit_count(path: Path) -> int:
    proc = run_git(["rev-list", "--count", "HEAD"], path)
    return int(proc.stdout.decode().strip())


@pytest.fixture
def git_repo_factory(tmp_path):
    counter = [0]

    def factory(commits):
        counter[0] += 1
        return make_git_repo(tmp_path / f"fixture-repo-{counter[0]}", commits)

    return factory
