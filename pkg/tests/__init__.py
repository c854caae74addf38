"""Tests for the hybridprop package."""
