"""Tests for sparse-ep."""
