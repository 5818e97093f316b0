"""Bundled circuit files."""
