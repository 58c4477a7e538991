"""Temporal graph-aware entity linking: corpus ingest, snapshot graph
construction, joint text/graph training, and temporal-gap evaluation."""

__version__ = "0.1.0"
