"""Configuration-driven scenario runner."""
