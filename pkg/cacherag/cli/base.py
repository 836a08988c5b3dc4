"""Shared CLI plumbing: the raising argument parser and the builders every
command uses to turn the effective config into engine parts."""
import argparse
import logging
from datetime import datetime, timezone
from pathlib import Path
from cacherag.config import DOMAINS_FILE, Config
from cacherag.kg_store import KnowledgeGraph, load_triples_file
from cacherag.llm_adapter import LlmClient, build_backend, load_templates
from cacherag.semantic_cache import CacheConfig, SemanticCache
from cacherag.semantic_cache.store import init_cache, save_cache
from cacherag.semantic_parser import DescriptionStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INTERNAL = 2


class UsageError(Exception):
    """Bad command line, missing input file or unusable config (exit 1)."""


class CliArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so the caller owns exit codes."""

    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def parse_time(value: str | None) -> datetime | None:
    if not value:
        return None
    try:
        parsed = datetime.fromisoformat(value)
    except ValueError:
        raise UsageError(f"--time expects an ISO-8601 timestamp, got {value!r}") from None
    return parsed if parsed.tzinfo else parsed.replace(tzinfo=timezone.utc)


def kg_paths_for(args, cfg: Config) -> list[str]:
    paths = list(getattr(args, 'kg', None) or []) or list(cfg.kg_paths)
    if not paths:
        raise UsageError("No KG given; pass --kg FILE or set kg_paths in the config")
    return paths


def load_kgs(paths, domain: str = '') -> list[KnowledgeGraph]:
    """Each file's domain label is its stem, unless a single file gets --domain."""
    if domain and len(paths) > 1:
        raise UsageError("--domain applies to a single KG only")
    return [load_triples_file(p, domain) for p in paths]


def build_llm(cfg: Config) -> LlmClient:
    templates = load_templates(cfg.prompt_dir) if cfg.prompt_dir else None
    return LlmClient(build_backend(cfg), templates)


def open_cache(cfg: Config) -> SemanticCache:
    return init_cache(CacheConfig.from_config(cfg), cfg.cache_path or None)


def persist_cache(cfg: Config, cache: SemanticCache) -> bool:
    if not cfg.cache_path:
        return False
    save_cache(cache, cfg.cache_path)
    return True


def load_descriptions(cfg: Config) -> DescriptionStore:
    path = Path(cfg.descriptions_path) if cfg.descriptions_path else DOMAINS_FILE
    if cfg.descriptions_path or path.exists():
        return DescriptionStore.load(path)
    return DescriptionStore()


def build_engine(cfg: Config, paths, domain: str = ''):
    from cacherag.pipeline import Engine

    kgs = load_kgs(paths, (domain or cfg.domain) if len(paths) == 1 else domain)
    return Engine(kgs, open_cache(cfg), build_llm(cfg), cfg, load_descriptions(cfg))
