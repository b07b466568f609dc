"""Diarization-guided target-speaker extraction front end and scoring tools."""
