"""Detector backends speaking the harness line protocol."""
