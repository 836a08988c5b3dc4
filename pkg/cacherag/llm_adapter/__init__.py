"""
LLM adapter for cacherag

Every language-model call in the engine goes through an LlmClient. Prompt
bodies live as text files under prompts/ (one per template id) and are filled
with str.format-style {slot} placeholders. Two backends are provided:

  LiveBackend      - plain-text POST to a single HTTP endpoint, bearer auth
  ScriptedBackend  - first-match rules over (template id, filled prompt)
"""
import logging
import socket
import string
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from cacherag import metrics
from cacherag.config import PROMPTS_DIR, LLM_URL, LLM_TOKEN, LLM_TIMEOUT_MS, LLM_RETRIES

logger = logging.getLogger(__name__)


class TemplateId(str, Enum):
    ISR_EXTRACT = 'ISR_EXTRACT'
    QUERY_COMPILE = 'QUERY_COMPILE'
    DISPATCH_JUDGE = 'DISPATCH_JUDGE'
    SUMMARIZE = 'SUMMARIZE'
    AUTOGEN_QUESTIONS = 'AUTOGEN_QUESTIONS'
    AUTOGEN_FILTER = 'AUTOGEN_FILTER'
    DOMAIN_ROUTE = 'DOMAIN_ROUTE'
    DOMAIN_DESC_UPDATE = 'DOMAIN_DESC_UPDATE'
    DIRECT_ANSWER = 'DIRECT_ANSWER'

    def __str__(self):
        return self.value


class PromptUsageError(ValueError):
    """A template was used wrongly (unknown id, missing slot)."""


class TransportError(RuntimeError):
    """The live backend could not be reached after all retries."""


# Sentence the ISR template must carry so extraction stays schema-agnostic
ISR_PROHIBITION = "Do NOT generate KG predicates or schema-specific terms"


@dataclass(frozen=True)
class PromptTemplate:
    id: TemplateId
    body: str

    @property
    def slots(self) -> frozenset:
        return frozenset(name for _, name, _, _ in string.Formatter().parse(self.body) if name)

    def render(self, slots: dict) -> str:
        missing = sorted(self.slots - set(slots))
        if missing:
            raise PromptUsageError(f"{self.id}: missing slot(s) {', '.join(missing)}")
        return self.body.format_map({k: '' if v is None else str(v) for k, v in slots.items()})


@dataclass(frozen=True)
class Completion:
    text: str
    latency: float
    backend: str


def load_templates(prompt_dir=None) -> dict:
    """Read prompts/<TEMPLATE_ID>.txt for every template id."""
    prompt_dir = Path(prompt_dir) if prompt_dir else PROMPTS_DIR
    templates = {}
    for template_id in TemplateId:
        path = prompt_dir / f"{template_id.value}.txt"
        if not path.exists():
            raise FileNotFoundError(f"Prompt template not found: {path}")
        templates[template_id] = PromptTemplate(template_id, path.read_text(encoding='utf-8'))
    if ISR_PROHIBITION not in templates[TemplateId.ISR_EXTRACT].body:
        raise PromptUsageError("ISR_EXTRACT template must forbid schema-specific predicates")
    return templates


_default_templates = None
_templates_lock = threading.Lock()


def default_templates() -> dict:
    global _default_templates
    with _templates_lock:
        if _default_templates is None:
            _default_templates = load_templates()
        return _default_templates


# ---------------------------------------------------------------------------
# Scripted backend
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScriptRule:
    template_id: TemplateId
    matcher: str
    response: str


class ScriptedBackend:
    """Pure function of (template id, filled prompt): first matching rule wins."""
    name = 'scripted'

    def __init__(self, rules, default: str = 'NA'):
        self.rules = tuple(rules)
        self.default = default

    def complete(self, template_id, prompt: str) -> str:
        template_id = TemplateId(template_id)
        for rule in self.rules:
            if rule.template_id == template_id and rule.matcher in prompt:
                return rule.response
        return self.default


def register_script(rules, default: str = 'NA') -> ScriptedBackend:
    """Build a scripted backend from (template_id, matcher, response) tuples."""
    built = []
    for template_id, matcher, response in rules:
        if not matcher:
            raise ValueError(f"Script rule for {template_id} has an empty matcher")
        built.append(ScriptRule(TemplateId(template_id), matcher, response))
    return ScriptedBackend(built, default)


def _unescape(value: str) -> str:
    return value.replace('\\t', '\t').replace('\\n', '\n')


def parse_script(text: str) -> tuple[list, str]:
    """Parse the line-keyed script format.

        DEFAULT: NA
        RULE: DISPATCH_JUDGE
        MATCH: Dunkirk\\tnominated
        RESPONSE:
        STATUS: COMPLETE
        END
    """
    rules = []
    default = 'NA'
    current = None
    body = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        if body is not None:
            if raw.strip() == 'END':
                if not current.get('match'):
                    raise ValueError(f"Script rule ending on line {line_no} has no MATCH")
                rules.append((current['rule'], current['match'], '\n'.join(body)))
                current, body = None, None
            else:
                body.append(raw)
            continue
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        key, _, value = line.partition(':')
        key = key.strip().upper()
        value = value.strip()
        if key == 'DEFAULT':
            default = _unescape(value)
        elif key == 'RULE':
            try:
                current = {'rule': TemplateId(value)}
            except ValueError:
                raise ValueError(f"Unknown template id {value!r} on line {line_no}") from None
        elif key == 'MATCH' and current is not None:
            current['match'] = _unescape(value)
        elif key == 'RESPONSE' and current is not None:
            body = [value] if value else []
        else:
            raise ValueError(f"Unexpected script line {line_no}: {raw!r}")
    if body is not None:
        raise ValueError("Script ended inside a RESPONSE block (missing END)")
    return rules, default


def load_script(path) -> ScriptedBackend:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Script file not found: {path}")
    rules, default = parse_script(path.read_text(encoding='utf-8'))
    logger.info("Loaded %s script rules from %s", len(rules), path)
    return register_script(rules, default)


# ---------------------------------------------------------------------------
# Live backend
# ---------------------------------------------------------------------------

class LiveBackend:
    """POST the filled prompt as text/plain; the response body is the completion."""
    name = 'live'

    def __init__(self, url: str, token: str = '', timeout_ms: int = 30000, retries: int = 3,
                 backoff: float = 0.5, opener=None):
        if not url:
            raise ValueError("Live LLM backend needs a URL (CACHERAG_LLM_URL)")
        self.url = url
        self.token = token
        self.timeout = timeout_ms / 1000.0
        self.retries = max(0, retries)
        self.backoff = backoff
        self._opener = opener

    def complete(self, template_id, prompt: str) -> str:
        import http.client
        import urllib.request
        import urllib.error

        opener = self._opener or urllib.request.urlopen
        headers = {'Content-Type': 'text/plain; charset=utf-8', 'X-Template-Id': str(template_id)}
        if self.token:
            headers['Authorization'] = f"Bearer {self.token}"

        last_error = None
        for attempt in range(self.retries + 1):
            if attempt:
                metrics.record_llm_retry()
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            req = urllib.request.Request(self.url, data=prompt.encode('utf-8'), headers=headers, method='POST')
            try:
                with opener(req, timeout=self.timeout) as resp:
                    body = resp.read()
            except urllib.error.HTTPError as e:
                if e.code < 500:
                    raise TransportError(f"LLM endpoint returned HTTP {e.code}") from e
                last_error = f"HTTP {e.code}"
            except urllib.error.URLError as e:
                last_error = f"cannot reach endpoint: {getattr(e, 'reason', e)}"
            except (socket.timeout, TimeoutError):
                last_error = f"timed out after {self.timeout:.1f}s"
            except (ConnectionError, http.client.HTTPException) as e:
                last_error = f"connection dropped: {type(e).__name__}: {e}"
            else:
                try:
                    return body.decode('utf-8')
                except UnicodeDecodeError as e:
                    raise TransportError(
                        f"LLM endpoint sent a body that is not UTF-8 ({e.reason} at byte {e.start})") from e
            logger.warning("LLM call %s failed (attempt %s/%s): %s",
                           template_id, attempt + 1, self.retries + 1, last_error)
        raise TransportError(f"LLM endpoint unavailable after {self.retries + 1} attempts: {last_error}")


def build_backend(cfg):
    """Backend for a Config: the scripted rules file or the live endpoint."""
    if cfg.llm == 'live':
        return LiveBackend(LLM_URL, LLM_TOKEN, LLM_TIMEOUT_MS, LLM_RETRIES)
    if not cfg.llm_script:
        logger.warning("Scripted backend without a script file; every call answers NA")
        return ScriptedBackend([])
    return load_script(cfg.llm_script)


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CallRecord:
    template_id: TemplateId
    prompt: str
    text: str
    latency: float


class LlmClient:
    """The handle the engine holds. Fills templates, calls the backend, keeps a
    shared call log and writes an `llm` trace record per call when bound."""

    def __init__(self, backend, templates=None, trace=None, _calls=None, _lock=None):
        self.backend = backend
        self.templates = templates if templates is not None else default_templates()
        self.trace = trace
        self.calls = _calls if _calls is not None else []
        self._lock = _lock or threading.Lock()

    def with_trace(self, trace) -> 'LlmClient':
        return LlmClient(self.backend, self.templates, trace, self.calls, self._lock)

    @property
    def call_count(self) -> int:
        with self._lock:
            return len(self.calls)

    def calls_for(self, template_id) -> list:
        template_id = TemplateId(template_id)
        with self._lock:
            return [c for c in self.calls if c.template_id == template_id]

    def render(self, template_id, slots: dict) -> str:
        try:
            template = self.templates[TemplateId(template_id)]
        except (KeyError, ValueError):
            raise PromptUsageError(f"Unknown template id {template_id!r}") from None
        return template.render(slots)

    def complete(self, template_id, slots: dict) -> Completion:
        template_id = TemplateId(template_id)
        try:
            prompt = self.render(template_id, slots)
        except PromptUsageError:
            metrics.record_llm_error(template_id.value, 'usage')
            raise
        backend_name = getattr(self.backend, 'name', 'scripted')
        started = time.perf_counter()
        try:
            text = self.backend.complete(template_id, prompt)
        except TransportError as e:
            metrics.record_llm_error(template_id.value, 'transport')
            if self.trace is not None:
                self.trace.record('llm', template=template_id.value, backend=backend_name,
                                  elapsed_ms=(time.perf_counter() - started) * 1000, error=str(e))
            raise
        latency = time.perf_counter() - started
        text = text if text is not None else ''

        with self._lock:
            self.calls.append(CallRecord(template_id, prompt, text, latency))
        metrics.record_llm_call(template_id.value, backend_name, latency)
        if self.trace is not None:
            self.trace.record('llm', template=template_id.value, backend=backend_name,
                              elapsed_ms=latency * 1000, prompt_chars=len(prompt), response=text)
        logger.debug("LLM %s answered in %.1f ms", template_id.value, latency * 1000)
        return Completion(text=text, latency=latency, backend=backend_name)


def complete(template_id, slots: dict, backend, templates=None) -> Completion:
    """One-off completion without a long-lived client."""
    return LlmClient(backend, templates).complete(template_id, slots)
