"""Test suite for tap-doublespend."""
