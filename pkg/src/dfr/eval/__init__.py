"""Keypoint and classification metrics, reports and throughput timing."""
