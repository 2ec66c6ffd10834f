import io

import pytest

from canopy import testkit
from canopy.cli import build_forest_from_corpus
from canopy.config import EngineConfig
from canopy.model import Corpus, ingest_stream
from canopy.providers import CountingProvider, MockProvider


@pytest.fixture(scope="session")
def scenario():
    spec = testkit.default_scenario()
    documents, manifest, queries = testkit.generate(spec)
    return spec, documents, manifest, queries


@pytest.fixture(scope="session")
def corpus(scenario):
    _, documents, _, _ = scenario
    return Corpus(ingest_stream(io.StringIO(t)) for t in documents.values())


@pytest.fixture(scope="session")
def forest(corpus):
    provider = CountingProvider(MockProvider(corpus.dim))
    return build_forest_from_corpus(corpus, EngineConfig(), provider)


@pytest.fixture()
def mock_provider(corpus):
    return CountingProvider(MockProvider(corpus.dim))


def to_plain_tree(tree):
    """Engine tree -> the oracle's plain node shape."""

    def conv(node_id):
        node = tree.nodes[node_id]
        return testkit.PlainSearchNode(
            node.node_id,
            node.identity_tokens(),
            node.depth,
            [conv(c) for c in node.children],
        )

    return conv(tree.root_id)
