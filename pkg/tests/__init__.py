"""Tests for secure_cra_isac."""
