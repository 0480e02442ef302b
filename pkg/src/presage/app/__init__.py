"""CLI entry points and the HTTP service exposing the engine."""
