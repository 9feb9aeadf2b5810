"""Shared collector for the acceptance pass/fail lines."""

LINES = []
