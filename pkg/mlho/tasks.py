"""doit tasks behind the ``mlho`` command.

Every task takes ``--config``, ``--seed``, ``--out`` and ``--jobs``;
``ingest``, ``phase1`` and ``run-all`` also take ``--data``, the
directory holding the three cohort files. Intermediate results are
pickled under ``<out>/cache`` so the phases can run as separate calls.
"""
import functools
import os

from doit.exceptions import TaskFailed
from nengo.utils.stdlib import Timer

from . import cache, reports
from .cohort import cohort_summary, read_cohort
from .exceptions import DataError, MlhoError
from .experiments import (
    PHASE1_KEY, PHASE2_KEY, Phase1Report, Phase2Report, run_phase1,
    run_phase2)
from .settings import PipelineConfig
from .synth import write_synthetic
from .utils import log

COHORT_KEY = 'cohort'
CONFIG_FILE = 'config.txt'
REPORTS_DIR = 'reports'

# Exit code of the last failed task; read by `mlho.main.main`
status = {'exit_code': 0}


def param(name, default, type_=str, help_=""):
    return {'name': name, 'long': name, 'type': type_, 'default': default,
            'help': help_}


common_params = [
    param('config', '', help_="key=value settings file"),
    param('seed', -1, int, help_="master seed (default: from config)"),
    param('out', 'mlho-out', help_="output directory"),
    param('jobs', 0, int, help_="worker processes (default: from config)"),
]
data_param = param('data', '', help_="directory with the cohort files")
clusters_param = param('clusters', '',
                       help_="code,cluster_label file for influence rows")


def guarded(func):
    """Turn mlho errors into task failures that remember their exit code."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            func(*args, **kwargs)
        except MlhoError as e:
            status['exit_code'] = e.exit_code
            return TaskFailed("%s: %s" % (type(e).__name__, e))
        except Exception as e:
            status['exit_code'] = 4
            return TaskFailed("%s: %s" % (type(e).__name__, e))
    return wrapper


def load_config(path, seed=-1, jobs=0, seed_key='seed'):
    config = (PipelineConfig.from_file(path) if path
              else PipelineConfig())
    if seed >= 0:
        config.set(seed_key, seed)
    if jobs > 0:
        config.set('jobs', jobs)
    return config.validate()


def cache_root(out):
    return os.path.join(out, 'cache')


def load_cohort(data, out):
    if data:
        return do_ingest(data, out)
    root = cache_root(out)
    if not cache.cache_file_exists(COHORT_KEY, root=root):
        raise DataError("no cohort: pass --data or run 'mlho ingest' first")
    return cache.load_obj(COHORT_KEY, root=root)


def load_phase(klass, key, out, what):
    if not cache.cache_file_exists(key, root=cache_root(out)):
        raise DataError("no %s results in '%s'; run 'mlho %s' first"
                        % (key, out, what))
    return klass.load(key, root=cache_root(out))


def do_ingest(data, out):
    if not data:
        raise DataError("ingest needs --data")
    with Timer() as t:
        cohort = read_cohort(data)
    log("Ingested %d patients in %.3f seconds" % (len(cohort), t.duration))
    log(cohort_summary(cohort).to_string())
    cache.cache_obj(cohort, key=COHORT_KEY, root=cache_root(out))
    return cohort


def do_phase1(config, cohort, out):
    with Timer() as t:
        phase1 = run_phase1(cohort, config)
    log("Phase 1 done in %.3f seconds" % t.duration)
    phase1.save(PHASE1_KEY, root=cache_root(out))
    config.save(os.path.join(out, CONFIG_FILE))
    return cohort, phase1


def do_phase2(config, cohort, phase1, out):
    with Timer() as t:
        phase2 = run_phase2(cohort, config, phase1)
    log("Phase 2 done in %.3f seconds" % t.duration)
    phase2.save(PHASE2_KEY, root=cache_root(out))
    return phase2


def do_report(phase1, phase2, out, clusters):
    return reports.emit_reports(phase1, phase2,
                                os.path.join(out, REPORTS_DIR),
                                clusters=clusters or None)


@guarded
def ingest(config, seed, out, jobs, data):
    load_config(config, seed, jobs)
    do_ingest(data, out)


@guarded
def synth(config, seed, out, jobs):
    config = load_config(config, seed, jobs, seed_key='synth.seed')
    _, truth, paths = write_synthetic(config.synth, out, jobs=config.jobs)
    log("Wrote %d files to %s (outcome-free rate %.3f)"
        % (len(paths), out, truth.none_rate))


@guarded
def phase1(config, seed, out, jobs, data):
    config = load_config(config, seed, jobs)
    do_phase1(config, load_cohort(data, out), out)


@guarded
def phase2(config, seed, out, jobs):
    saved = load_phase(Phase1Report, PHASE1_KEY, out, 'phase1')
    if config:
        config = load_config(config, seed, jobs)
    else:
        config = PipelineConfig.loads(saved.config)
        if seed >= 0:
            config.set('seed', seed)
        if jobs > 0:
            config.set('jobs', jobs)
    do_phase2(config, load_cohort('', out), saved, out)


@guarded
def report(config, seed, out, jobs, clusters):
    p1 = load_phase(Phase1Report, PHASE1_KEY, out, 'phase1')
    p2 = load_phase(Phase2Report, PHASE2_KEY, out, 'phase2')
    do_report(p1, p2, out, clusters)


@guarded
def run_all(config, seed, out, jobs, data, clusters):
    config = load_config(config, seed, jobs)
    cohort, p1 = do_phase1(config, load_cohort(data, out), out)
    p2 = do_phase2(config, cohort, p1, out)
    do_report(p1, p2, out, clusters)


def _task(action, extra=(), basename=None):
    task = {'actions': [action],
            'params': common_params + list(extra),
            'uptodate': [False],
            'verbosity': 2}
    if basename is not None:
        task['basename'] = basename
    return task


def task_ingest():
    """Validate the cohort files and cache the cohort."""
    return _task(ingest, [data_param])


def task_synth():
    """Write a synthetic cohort with its ground truth to --out."""
    return _task(synth)


def task_phase1():
    """Iterative feature and algorithm selection."""
    return _task(phase1, [data_param])


def task_phase2():
    """Final models for each outcome and feature class."""
    return _task(phase2)


def task_report():
    """Write the report files and their manifest."""
    return _task(report, [clusters_param])


def task_run_all():
    """Ingest, both phases and the reports in one go."""
    return _task(run_all, [data_param, clusters_param], basename='run-all')