"""
Configuration module for cacherag
"""
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from dotenv import load_dotenv, dotenv_values

# Package root is one level up from cacherag/config/, project root one more
PACKAGE_DIR = Path(__file__).parent.parent
PROJECT_ROOT = PACKAGE_DIR.parent

# Load environment variables from .env file in project root
load_dotenv(PROJECT_ROOT / ".env")

ENV_PREFIX = "CACHERAG_"


def _env_path(name, default: Path) -> Path:
    value = os.getenv(ENV_PREFIX + name, '').strip().strip('"').strip("'")
    return Path(value) if value else default


# Shipped data - fixture KG, golden script, initial domain descriptions
DATA_DIR = _env_path('DATA_DIR', PACKAGE_DIR / "data")
PROMPTS_DIR = _env_path('PROMPTS_DIR', PACKAGE_DIR / "llm_adapter" / "prompts")
ASPECTS_FILE = _env_path('ASPECTS_FILE', PACKAGE_DIR / "semantic_parser" / "aspects.conf")
GOLDEN_KG = DATA_DIR / "inception.tsv"
GOLDEN_SCRIPT = DATA_DIR / "golden.script"
DOMAINS_FILE = DATA_DIR / "domains.txt"
GOLDEN_DOMAIN = "movies"
GOLDEN_QUESTION = ("Which other films directed by the director of Inception have been nominated "
                   "for the Academy Award for Best Picture in 2018?")

# Live LLM backend
LLM_URL = os.getenv('CACHERAG_LLM_URL', '')
LLM_TOKEN = os.getenv('CACHERAG_LLM_TOKEN', '')
LLM_TIMEOUT_MS = int(os.getenv('CACHERAG_LLM_TIMEOUT_MS', '30000'))
LLM_RETRIES = int(os.getenv('CACHERAG_LLM_RETRIES', '3'))

# Optional log file; logs go to stderr when unset
_log_file_env = os.getenv('CACHERAG_LOG_FILE', '').strip()
LOG_FILE = Path(_log_file_env) if _log_file_env else None


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in ('1', 'true', 'yes', 'on')


def _parse_optional_int(value):
    if value is None:
        return None
    text = str(value).strip().lower()
    if text in ('', 'none', 'off', '0'):
        return None
    return int(text)


def _parse_paths(value):
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [p.strip() for p in str(value).split(',') if p.strip()]


@dataclass
class Config:
    """Every engine tunable. Defaults follow the reference configuration:
    lambda 0.5, k 5, k_depth 3, k_degree 30, relevance floor 0.1."""
    lam: float = 0.5
    k: int = 5
    k_depth: int = 3
    k_degree: int = 30
    capacity: int | None = None
    relevance_floor: float = 0.1
    llm: str = 'script'
    llm_script: str = ''
    kg_paths: list = field(default_factory=list)
    domain: str = ''
    prompt_dir: str = ''
    cache_path: str = ''
    descriptions_path: str = ''
    single_domain: bool = False
    # Ablation switches
    use_cache: bool = True
    use_mmr: bool = True
    aspect_index: bool = True
    depth_expansion: bool = True
    breadth_expansion: bool = True

    def as_dict(self) -> dict:
        return asdict(self)


# Config key -> parser. 'lambda' is accepted as an alias of 'lam' in files/env.
_PARSERS = {
    'lam': float,
    'k': int,
    'k_depth': int,
    'k_degree': int,
    'capacity': _parse_optional_int,
    'relevance_floor': float,
    'llm': str,
    'llm_script': str,
    'kg_paths': _parse_paths,
    'domain': str,
    'prompt_dir': str,
    'cache_path': str,
    'descriptions_path': str,
    'single_domain': _parse_bool,
    'use_cache': _parse_bool,
    'use_mmr': _parse_bool,
    'aspect_index': _parse_bool,
    'depth_expansion': _parse_bool,
    'breadth_expansion': _parse_bool,
}
_ALIASES = {'lambda': 'lam', 'tau': 'relevance_floor', 'b': 'capacity', 'kg': 'kg_paths'}


def _normalise_key(key: str) -> str | None:
    key = key.strip().lower().replace('-', '_')
    if key.startswith(ENV_PREFIX.lower()):
        key = key[len(ENV_PREFIX):]
    key = _ALIASES.get(key, key)
    return key if key in _PARSERS else None


def _apply(values: dict, source: dict, origin: str):
    for raw_key, raw_value in source.items():
        if raw_value is None:
            continue
        key = _normalise_key(raw_key)
        if key is None:
            continue
        try:
            values[key] = _PARSERS[key](raw_value)
        except (TypeError, ValueError) as e:
            raise ValueError(f"Invalid value for {key} in {origin}: {raw_value!r} ({e})") from e


def load_config(config_file=None, environ=None, overrides=None) -> Config:
    """Resolve the effective config: defaults, then the key=value file, then
    CACHERAG_* environment variables, then explicit overrides (CLI flags)."""
    values = Config().as_dict()
    if config_file:
        path = Path(config_file)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        _apply(values, dotenv_values(path), str(path))
    env = os.environ if environ is None else environ
    _apply(values, {k: v for k, v in env.items() if k.startswith(ENV_PREFIX)
                    and _normalise_key(k) is not None}, 'environment')
    if overrides:
        _apply(values, {k: v for k, v in overrides.items() if v is not None}, 'flags')
    known = {f.name for f in fields(Config)}
    return Config(**{k: v for k, v in values.items() if k in known})


def validate_config(cfg: Config) -> list[str]:
    """Validate that the config is usable. Returns a list of problems."""
    errors = []

    if not 0.0 <= cfg.lam <= 1.0:
        errors.append(f"lambda must be within [0, 1], got {cfg.lam}")
    if cfg.k < 1:
        errors.append(f"k must be at least 1, got {cfg.k}")
    if cfg.k_depth < 1:
        errors.append(f"k_depth must be at least 1, got {cfg.k_depth}")
    if cfg.k_degree < 1:
        errors.append(f"k_degree must be at least 1, got {cfg.k_degree}")
    if cfg.capacity is not None and cfg.capacity < 1:
        errors.append(f"capacity must be at least 1 when set, got {cfg.capacity}")
    if not 0.0 <= cfg.relevance_floor <= 1.0:
        errors.append(f"relevance_floor must be within [0, 1], got {cfg.relevance_floor}")
    if cfg.llm not in ('live', 'script'):
        errors.append(f"llm must be 'live' or 'script', got {cfg.llm!r}")
    if cfg.llm == 'live' and not LLM_URL:
        errors.append("live backend selected but CACHERAG_LLM_URL is not set")

    return errors
