"""Global configuration stuff.

Experiment settings belong in a `PipelineConfig` (see `mlho.settings`);
this module only holds process-wide switches. Importers read them as
``config.log_experiments`` so tests and the CLI can flip them at runtime.
"""
import os

root_dir = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
cache_dir = os.path.join(root_dir, "cache")
log_experiments = True
