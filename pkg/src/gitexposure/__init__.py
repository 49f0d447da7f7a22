"""gitexposure: audit contributor email exposure across git repositories.

Pipeline: fetch a star-ranked catalog, clone a size-scored subset under a
bounded producer/consumer, extract author summaries, merge identities into a
person database, then report exposed addresses, coherence graphs, and scale
estimates.
"""

from .analytics import (
    DbStats,
    LinearCurve,
    LogLinearCurve,
    Metric,
    PUBLISHED_CURVES,
    PowerCurve,
    database_stats,
    estimate,
    fit_curve,
    phishing_click_range,
)
from .catalog import (
    RateBudget,
    RepoRecord,
    StarWindow,
    FixtureSource,
    LiveSource,
    fetch_top,
    next_star_query,
)
from .cli import (
    AuditFilters,
    ExposureReport,
    audit,
    emit_rewrite_script,
    load_database,
    main,
    save_database,
)
from .coherence import CoherenceGraph, build_graph, recommend
from .identity import (
    NoreplyEmail,
    Person,
    PersonDatabase,
    RegularEmail,
    brute_force_resolve,
    classify_email,
    is_compromised,
)
from .pipeline import (
    PipelineConfig,
    PipelineStats,
    SelectionPolicy,
    run_pipeline,
    select_for_cloning,
)
from .shortlog import ShortlogLine, collect_shortlog, parse_shortlog
from .synthcorpus import CorpusSpec, generate_corpus, random_corpus_spec

__version__ = "0.1.0"
