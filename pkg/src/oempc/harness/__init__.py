"""Experiment orchestration and the ``oempc`` command line."""
