"""Temporal-pair self-supervision toolkit for camera-trap re-identification."""
