"""Bundled example inputs: scenarios, a radar config, calibration points."""
