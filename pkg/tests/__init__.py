"""Tests for fed-hpo."""
