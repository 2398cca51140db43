"""Tests for the ISAQN simulator."""
