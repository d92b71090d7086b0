import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "varseq",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("varseq")

CORPUS = os.path.join(os.path.dirname(__file__), "..", "src", "varseq", "corpus")


def corpus_path(name):
    return os.path.normpath(os.path.join(CORPUS, name + ".vp"))


@pytest.fixture(scope="session")
def corpus():
    from varseq.dsl import load_problem

    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_problem(corpus_path(name))
        return cache[name]

    return get


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
