"""Per-area command mixins for CacheRagCli."""
