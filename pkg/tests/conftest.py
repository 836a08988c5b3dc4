import random
import pytest
from cacherag.config import GOLDEN_DOMAIN, GOLDEN_KG, GOLDEN_SCRIPT
from cacherag.kg_store import load_triples, load_triples_file
from cacherag.llm_adapter import LlmClient, load_script, register_script


@pytest.fixture
def golden_kg():
    return load_triples_file(GOLDEN_KG, GOLDEN_DOMAIN)


@pytest.fixture
def golden_llm():
    return LlmClient(load_script(GOLDEN_SCRIPT))


@pytest.fixture
def scripted():
    """Build an LlmClient from (template_id, matcher, response) rules."""
    def build(rules=(), default='NA'):
        return LlmClient(register_script(rules, default))
    return build


@pytest.fixture
def make_kg():
    def build(lines, domain='test'):
        return load_triples(['\t'.join(fields) for fields in lines], domain)
    return build


@pytest.fixture
def rng():
    return random.Random(20240301)
