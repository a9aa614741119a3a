"""Desk-scale any-to-any voice conversion: disentangled representation
extraction, content grouping, prosody-predictive mel synthesis, and an
evaluation harness, all on a deterministic synthetic corpus."""

__version__ = "0.1.0"
