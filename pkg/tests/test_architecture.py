"""Layout rules: prompt text and network access stay inside the LLM adapter."""
import ast
from pathlib import Path
from cacherag.llm_adapter import TemplateId

PACKAGE = Path(__file__).resolve().parent.parent / "cacherag"
PROMPTS = PACKAGE / "llm_adapter" / "prompts"


def python_files():
    return sorted(p for p in PACKAGE.rglob("*.py") if "llm_adapter" not in p.parts)


def first_lines():
    for template_id in TemplateId:
        body = (PROMPTS / f"{template_id.value}.txt").read_text(encoding='utf-8')
        yield template_id, body.strip().splitlines()[0]


def test_every_template_ships_as_a_file():
    assert sorted(p.stem for p in PROMPTS.glob("*.txt")) == sorted(t.value for t in TemplateId)


def test_prompt_text_is_not_inlined_elsewhere():
    sources = {p: p.read_text(encoding='utf-8') for p in python_files()}
    for template_id, line in first_lines():
        for path, source in sources.items():
            assert line not in source, f"{template_id.value} text found in {path}"


def test_only_the_adapter_talks_to_the_network():
    for path in python_files():
        tree = ast.parse(path.read_text(encoding='utf-8'))
        for node in ast.walk(tree):
            if isinstance(node, ast.Import):
                names = [alias.name for alias in node.names]
            elif isinstance(node, ast.ImportFrom):
                names = [node.module or '']
            else:
                continue
            assert not any(n.split('.')[0] in ('urllib', 'http', 'socket', 'requests') for n in names), path
