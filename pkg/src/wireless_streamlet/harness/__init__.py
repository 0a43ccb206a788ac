"""Scenario harness: configs, experiments E1-E6, result tables and the CLI."""
