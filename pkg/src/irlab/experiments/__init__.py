"""Config-driven experiment runner and CLI."""
