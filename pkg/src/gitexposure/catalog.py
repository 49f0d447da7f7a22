"""Catalog fetching: star-window search pagination against the hosting API.

The search endpoint caps every query at 1,000 results, so the fetcher walks
star windows: start with `stars:>=5`, and each time a window's cap is
exhausted, requery with `stars:5..x` where x is the lowest star count seen.
Records reappearing across adjacent windows are deduplicated by full name.
A fixture source replays recorded pages so everything runs offline.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol

log = logging.getLogger(__name__)

SEARCH_RESULT_CAP = 1000  # hard API limit per search query
MIN_STARS = 5  # '>=5' keeps the API from returning incomplete results
TOKEN_ENV_VAR = "GIT_AUDIT_TOKEN"
DEFAULT_API_URL = "https://api.github.com/search/repositories"
RETRY_DELAYS = (1.0, 2.0)  # waits between the 3 attempts for one page


class CatalogError(Exception):
    """Base class for catalog fetching failures."""


class AuthError(CatalogError):
    """Live mode requires a valid token."""


class TransportError(CatalogError):
    """Network failure that survived the bounded retries."""


class FixtureError(CatalogError):
    """Fixture directory is missing or malformed."""


@dataclass(frozen=True)
class RepoRecord:
    """One catalog entry as consumed from the search API."""

    full_name: str
    clone_url: str
    stars: int
    size_kb: int
    main_language: str | None = None

    def __post_init__(self) -> None:
        if not self.full_name or self.full_name.count("/") != 1:
            raise ValueError(f"full_name must be 'owner/name', got {self.full_name!r}")
        if not self.clone_url:
            raise ValueError("clone_url must be non-empty")
        if self.stars < 0 or self.size_kb < 0:
            raise ValueError("stars and size_kb must be non-negative")


def record_from_item(item: Mapping) -> RepoRecord:
    """Build a record from a search response item (the five consumed fields)."""
    try:
        return RepoRecord(
            full_name=item["full_name"],
            clone_url=item["clone_url"],
            stars=int(item["stargazers_count"]),
            size_kb=int(item["size"]),
            main_language=item.get("language"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed repository item: {exc}") from exc


def record_to_item(record: RepoRecord) -> dict:
    return {
        "full_name": record.full_name,
        "clone_url": record.clone_url,
        "stargazers_count": record.stars,
        "size": record.size_kb,
        "language": record.main_language,
    }


@dataclass(frozen=True)
class StarWindow:
    """Current search range; an open window means `stars:>=lower_bound`."""

    lower_bound: int = MIN_STARS
    upper_bound: int | None = None

    def __post_init__(self) -> None:
        if self.upper_bound is not None and self.upper_bound < self.lower_bound:
            raise ValueError("upper_bound must be >= lower_bound")


def next_star_query(window: StarWindow) -> str:
    """Search qualifier for the window: open form or bounded range form."""
    if window.upper_bound is None:
        return f"stars:>={window.lower_bound}"
    return f"stars:{window.lower_bound}..{window.upper_bound}"


@dataclass(frozen=True)
class RateBudget:
    search_requests_per_minute: int = 30
    results_per_page: int = 100

    def __post_init__(self) -> None:
        if self.search_requests_per_minute < 1 or self.results_per_page < 1:
            raise ValueError("rate budget values must be positive")


class CatalogSource(Protocol):
    def search_page(self, query: str, page: int, per_page: int) -> list[RepoRecord]:
        """Return one page of records for the query (empty when exhausted)."""


class FixtureSource:
    """Replays a recorded search walk from `page-<window>-<k>.json` files.

    Each file holds one JSON document per repository (newline-delimited),
    mirroring live response items field-for-field for the consumed fields.
    Window indexes are assigned in order of first appearance of each distinct
    query, which matches the deterministic walk the fetcher performs.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise FixtureError(f"fixture directory not found: {self.directory}")
        self._window_by_query: dict[str, int] = {}
        self.requests = 0

    def search_page(self, query: str, page: int, per_page: int) -> list[RepoRecord]:
        window = self._window_by_query.setdefault(query, len(self._window_by_query))
        self.requests += 1
        path = self.directory / f"page-{window}-{page}.json"
        if not path.exists():
            return []
        records = []
        for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not raw.strip():
                continue
            try:
                records.append(record_from_item(json.loads(raw)))
            except (json.JSONDecodeError, ValueError) as exc:
                raise FixtureError(f"{path}:{line_no}: {exc}") from exc
        if len(records) > per_page:
            raise FixtureError(f"{path} holds more than {per_page} records")
        return records


class LiveSource:
    """Authenticated search client that never exceeds the per-minute budget."""

    def __init__(
        self,
        token: str | None = None,
        *,
        api_url: str = DEFAULT_API_URL,
        budget: RateBudget = RateBudget(),
        session=None,
        time_fn: Callable[[], float] = time.monotonic,
        sleep_fn: Callable[[float], None] = time.sleep,
    ):
        token = token if token is not None else os.environ.get(TOKEN_ENV_VAR, "")
        if not token:
            raise AuthError(
                f"live mode needs an API token; set {TOKEN_ENV_VAR} or pass token="
            )
        self._token = token
        self.api_url = api_url
        self.budget = budget
        self._time = time_fn
        self._sleep = sleep_fn
        self._sent: deque[float] = deque()
        self.request_log: list[float] = []  # timestamps, for budget assertions
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def _throttle(self) -> None:
        while True:
            now = self._time()
            while self._sent and now - self._sent[0] >= 60.0:
                self._sent.popleft()
            if len(self._sent) < self.budget.search_requests_per_minute:
                break
            self._sleep(60.0 - (now - self._sent[0]))
        self._sent.append(now)
        self.request_log.append(now)

    def search_page(self, query: str, page: int, per_page: int) -> list[RepoRecord]:
        import requests

        params = {"q": query, "sort": "stars", "page": page, "per_page": per_page}
        headers = {
            "Authorization": f"token {self._token}",
            "Accept": "application/vnd.github.v3+json",
        }
        attempts = len(RETRY_DELAYS) + 1
        last_error: Exception | None = None
        for attempt in range(attempts):
            self._throttle()
            try:
                resp = self._session.get(
                    self.api_url, params=params, headers=headers, timeout=30
                )
            except requests.RequestException as exc:
                last_error = exc
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"search API rejected the token ({resp.status_code})")
                if resp.status_code == 200:
                    try:
                        items = resp.json().get("items", [])
                        return [record_from_item(item) for item in items]
                    except ValueError as exc:
                        raise TransportError(f"unparseable search response: {exc}")
                last_error = TransportError(f"search returned HTTP {resp.status_code}")
                if resp.status_code < 500:
                    raise last_error
            if attempt < len(RETRY_DELAYS):
                self._sleep(RETRY_DELAYS[attempt])
        raise TransportError(f"page request failed after {attempts} attempts: {last_error}")


def fetch_top(
    n: int, source: CatalogSource, budget: RateBudget = RateBudget()
) -> list[RepoRecord]:
    """Fetch the n most-starred repositories, walking star windows as needed.

    Stops early once n distinct records are collected; a window returning a
    short page means the corpus is exhausted (the window already covers
    everything down to the minimum star count).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    per_page = budget.results_per_page
    pages_per_window = math.ceil(SEARCH_RESULT_CAP / per_page)
    window = StarWindow()
    seen: dict[str, RepoRecord] = {}
    while True:
        query = next_star_query(window)
        lowest_star: int | None = None
        exhausted = False
        for page in range(1, pages_per_window + 1):
            records = source.search_page(query, page, per_page)
            for record in records:
                lowest_star = (
                    record.stars
                    if lowest_star is None
                    else min(lowest_star, record.stars)
                )
                seen.setdefault(record.full_name, record)
            if len(records) < per_page:
                exhausted = True
                break
            if len(seen) >= n:
                break
        if len(seen) >= n or exhausted or lowest_star is None:
            break
        advanced = StarWindow(window.lower_bound, lowest_star)
        if advanced == window:
            log.warning("star window stuck at %s; stopping past the result cap", query)
            break
        window = advanced
    return list(seen.values())[:n]


def write_fixture_pages(
    records: Iterable[RepoRecord],
    directory: str | Path,
    budget: RateBudget = RateBudget(),
) -> list[Path]:
    """Simulate the live server over a full corpus and record the page files.

    Useful for tests and for preparing offline runs: the resulting directory
    replays exactly the star-window walk `fetch_top` performs.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    per_page = budget.results_per_page
    pool = sorted(records, key=lambda r: (-r.stars, r.full_name))
    window = StarWindow()
    written: list[Path] = []
    window_index = 0
    while True:
        if window.upper_bound is None:
            matching = [r for r in pool if r.stars >= window.lower_bound]
        else:
            matching = [
                r
                for r in pool
                if window.lower_bound <= r.stars <= window.upper_bound
            ]
        served = matching[:SEARCH_RESULT_CAP]
        for page_index in range(math.ceil(len(served) / per_page)):
            chunk = served[page_index * per_page : (page_index + 1) * per_page]
            path = directory / f"page-{window_index}-{page_index + 1}.json"
            path.write_text(
                "".join(json.dumps(record_to_item(r)) + "\n" for r in chunk),
                encoding="utf-8",
            )
            written.append(path)
        if len(matching) <= SEARCH_RESULT_CAP or not served:
            break
        advanced = StarWindow(window.lower_bound, served[-1].stars)
        if advanced == window:
            break
        window = advanced
        window_index += 1
    return written


def save_catalog(records: Iterable[RepoRecord], path: str | Path) -> None:
    """Persist fetch results as newline-delimited records, preserving rank order."""
    rows = []
    for r in records:
        rows.append(
            json.dumps(
                {
                    "full_name": r.full_name,
                    "clone_url": r.clone_url,
                    "stars": r.stars,
                    "size_kb": r.size_kb,
                    "main_language": r.main_language,
                }
            )
        )
    Path(path).write_text("".join(row + "\n" for row in rows), encoding="utf-8")


def load_catalog(path: str | Path) -> list[RepoRecord]:
    records = []
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        try:
            data = json.loads(raw)
            records.append(
                RepoRecord(
                    full_name=data["full_name"],
                    clone_url=data["clone_url"],
                    stars=int(data["stars"]),
                    size_kb=int(data["size_kb"]),
                    main_language=data.get("main_language"),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{line_no}: malformed catalog record: {exc}") from exc
    return records
