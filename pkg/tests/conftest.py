"""Shared fixtures plus the acceptance summary hook.

Any test named ``test_criterion_<NN>_<slug>`` is treated as an acceptance
criterion; the terminal summary prints one PASS/FAIL line per criterion so the
whole gate is readable at a glance.
"""

import re

import pytest

from srl_rewriter.generator import GeneratorConfig, sample_corpus
from srl_rewriter.packing import build_vocabulary

_CRITERION_RE = re.compile(r"test_criterion_(\d+)_([a-zA-Z0-9_]+)")


@pytest.fixture(scope="session")
def tiny_corpus():
    """Twelve char-mode sessions covering omissions, pronouns, and negation."""
    return sample_corpus(GeneratorConfig(n_sessions=12, seed=99, neg_rate=0.5))


@pytest.fixture(scope="session")
def tiny_vocab(tiny_corpus):
    return build_vocabulary(tiny_corpus)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results: dict[int, tuple[str, str]] = {}
    order = {"PASS": 0, "SKIP": 1, "FAIL": 2}
    for outcome, label in (("passed", "PASS"), ("skipped", "SKIP"), ("failed", "FAIL"),
                           ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            match = _CRITERION_RE.search(getattr(report, "nodeid", ""))
            if not match:
                continue
            if getattr(report, "when", "call") not in ("call", "setup"):
                continue
            number = int(match.group(1))
            slug = match.group(2)
            previous = results.get(number)
            if previous is None or order[label] > order[previous[1]]:
                results[number] = (slug, label)
    reports = getattr(config, "_acceptance_reports", {})
    if not results and not reports:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        slug, label = results[number]
        terminalreporter.write_line(f"[ACCEPTANCE] criterion {number} ({slug}): {label}")
    for title, text in reports.items():
        terminalreporter.write_sep("-", title)
        for line in text.splitlines():
            terminalreporter.write_line(line)
