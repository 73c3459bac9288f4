"""Experiment configuration and its flat ``key=value`` file format.

Pipeline-level keys are written bare (``seed=0``); grouped keys carry
their group as prefix (``msmr.jmi_budget=400``). Lists are comma
separated, booleans are ``true``/``false`` and unset optional values are
``none``. Lines starting with ``#`` and blank lines are ignored.
"""
import io

from nengo.exceptions import ValidationError

from . import params
from .cohort import OUTCOMES
from .exceptions import ConfigError
from .params import ParamsObject
from .synth import GeneratorSpec

DEMOGRAPHIC = 'demographic'
CLINICAL = 'clinical'
COMBINED = 'combined'
FEATURE_CLASSES = (DEMOGRAPHIC, CLINICAL, COMBINED)
UNION_MODES = ('per-outcome', 'pooled')


class PipelineParams(ParamsObject):
    outcomes = params.ListParam('outcomes', default=list(OUTCOMES))
    feature_classes = params.ListParam(
        'feature_classes', default=list(FEATURE_CLASSES))
    clinical_kinds = params.ListParam(
        'clinical_kinds', default=['raw', 'sequence'])
    learners = params.ListParam('learners', default=['gbm', 'elastic_net'])
    cv_folds_phase1 = params.IntParam('cv_folds_phase1', default=10, low=2)
    cv_folds_phase2 = params.IntParam('cv_folds_phase2', default=5, low=2)
    n_top_algorithms = params.IntParam('n_top_algorithms', default=2, low=1)
    union_mode = params.StringParam('union_mode', default='per-outcome')
    calibration_bins = params.IntParam('calibration_bins', default=10, low=2)
    calibration_scheme = params.StringParam(
        'calibration_scheme', default='equal-width')
    seed = params.IntParam('seed', default=0, low=0, high=2**64 - 1)
    jobs = params.IntParam('jobs', default=1, low=1)
    render_figures = params.BoolParam('render_figures', default=False)


class CohortParams(ParamsObject):
    buffer_days = params.IntParam('buffer_days', default=14, low=0)
    buffer_inclusive = params.BoolParam('buffer_inclusive', default=True)
    test_fraction = params.NumberParam(
        'test_fraction', default=0.2, low=0, high=1,
        low_open=True, high_open=True)
    stratify = params.BoolParam('stratify', default=True)
    n_resamples = params.IntParam('n_resamples', default=10, low=1)


class MsmrParams(ParamsObject):
    min_prevalence = params.NumberParam(
        'min_prevalence', default=0.002, low=0, high=1, high_open=True)
    mi_keep = params.IntParam('mi_keep', default=30000, low=1)
    jmi_budget = params.IntParam('jmi_budget', default=400, low=1)
    mine_prefilter = params.BoolParam('mine_prefilter', default=True)
    max_pairs = params.IntParam('max_pairs', default=None, low=1,
                                optional=True)


class GbmParams(ParamsObject):
    n_trees = params.ListParam('n_trees', default=[100, 300], item=int)
    shrinkage = params.ListParam('shrinkage', default=[0.05, 0.1],
                                 item=float)
    max_depth = params.ListParam('max_depth', default=[2, 3], item=int)
    bag_fraction = params.NumberParam('bag_fraction', default=0.5,
                                      low=0, high=1, low_open=True)
    min_leaf = params.IntParam('min_leaf', default=10, low=1)


class ElasticNetParams(ParamsObject):
    alpha = params.NumberParam('alpha', default=0.5, low=0, high=1)
    n_lambdas = params.IntParam('n_lambdas', default=50, low=1)
    lambda_min_ratio = params.NumberParam(
        'lambda_min_ratio', default=1e-3, low=0, high=1,
        low_open=True, high_open=True)
    tol = params.NumberParam('tol', default=1e-10, low=0, low_open=True)
    max_iter = params.IntParam('max_iter', default=1000, low=1)


GROUPS = (('', 'pipeline', PipelineParams),
          ('cohort', 'cohort', CohortParams),
          ('msmr', 'msmr', MsmrParams),
          ('gbm', 'gbm', GbmParams),
          ('elastic_net', 'elastic_net', ElasticNetParams),
          ('synth', 'synth', GeneratorSpec))


def _format(value):
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, list):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_scalar(text, kind):
    if kind is bool:
        if text.lower() not in ('true', 'false'):
            raise ValueError("expected true or false, got '%s'" % text)
        return text.lower() == 'true'
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def _parse(text, param):
    text = text.strip()
    if text.lower() == 'none' and getattr(param, 'optional', False):
        return None
    if isinstance(param, params.ListParam):
        return [_parse_scalar(t.strip(), param.item)
                for t in text.split(',') if t.strip() != '']
    if isinstance(param, params.BoolParam):
        return _parse_scalar(text, bool)
    if isinstance(param, params.IntParam):
        return _parse_scalar(text, int)
    if isinstance(param, params.NumberParam):
        return _parse_scalar(text, float)
    return text


class PipelineConfig(object):
    """All settings for one pipeline run.

    Pipeline-level settings are reachable directly (``config.seed``);
    the others through their group (``config.msmr.jmi_budget``).
    """

    def __init__(self, **kwargs):
        for _, attr, klass in GROUPS:
            self.__dict__[attr] = klass()
        for key, value in kwargs.items():
            self.set(key, value)

    def __getattr__(self, key):
        if key.startswith('_') or 'pipeline' not in self.__dict__:
            raise AttributeError(key)
        return getattr(self.__dict__['pipeline'], key)

    def __setattr__(self, key, value):
        if key in self.__dict__:
            raise AttributeError("Cannot replace group '%s'" % key)
        setattr(self.pipeline, key, value)

    def _locate(self, key):
        prefix, _, name = key.rpartition('.')
        for group_prefix, attr, klass in GROUPS:
            if group_prefix == prefix:
                param = getattr(klass, name, None)
                if param is not None and params.is_param(param):
                    return getattr(self, attr), param
        raise ConfigError("Unknown configuration key '%s'" % key)

    def set(self, key, value):
        """Set ``key`` (dotted for grouped settings) with validation."""
        group, param = self._locate(key)
        if (isinstance(param, params.NumberParam)
                and not isinstance(param, params.IntParam)
                and isinstance(value, int) and not isinstance(value, bool)):
            value = float(value)
        try:
            setattr(group, param.name, value)
        except (ValidationError, ValueError, TypeError) as e:
            raise ConfigError("Invalid value for '%s': %s" % (key, e))

    def get(self, key):
        group, param = self._locate(key)
        return getattr(group, param.name)

    def items(self):
        """``(key, value)`` for every setting, sorted by key."""
        out = []
        for prefix, attr, _ in GROUPS:
            for name, value in getattr(self, attr).kwargs().items():
                out.append(("%s.%s" % (prefix, name) if prefix else name,
                            value))
        return sorted(out)

    def validate(self):
        """Cross-field checks the individual parameters cannot express."""
        from .learners import registry
        from .evaluation import SCHEMES
        from .tspm import DEMOGRAPHIC as DEMO_KIND, KINDS

        def check(values, allowed, key):
            bad = [v for v in values if v not in allowed]
            if len(bad) > 0 or len(set(values)) != len(values):
                raise ConfigError(
                    "'%s' must be distinct values from %s; got %s"
                    % (key, ", ".join(allowed), ", ".join(values)))

        check(self.outcomes, OUTCOMES, 'outcomes')
        check(self.feature_classes, FEATURE_CLASSES, 'feature_classes')
        check(self.clinical_kinds,
              [k for k in KINDS if k != DEMO_KIND], 'clinical_kinds')
        check(self.learners, sorted(registry), 'learners')
        check([self.union_mode], UNION_MODES, 'union_mode')
        check([self.calibration_scheme], SCHEMES, 'calibration_scheme')
        if self.n_top_algorithms > len(self.learners):
            raise ConfigError("n_top_algorithms (%d) exceeds the number of "
                              "learners (%d)" % (self.n_top_algorithms,
                                                 len(self.learners)))
        return self

    def dumps(self):
        return "".join("%s=%s\n" % (key, _format(value))
                       for key, value in self.items())

    @classmethod
    def loads(cls, text):
        config = cls()
        for lineno, line in enumerate(io.StringIO(text), start=1):
            line = line.strip()
            if line == '' or line.startswith('#'):
                continue
            if '=' not in line:
                raise ConfigError("line %d: expected key=value, got '%s'"
                                  % (lineno, line))
            key, value = (s.strip() for s in line.split('=', 1))
            _, param = config._locate(key)
            try:
                parsed = _parse(value, param)
            except ValueError as e:
                raise ConfigError("line %d: %s: %s" % (lineno, key, e))
            config.set(key, parsed)
        return config.validate()

    @classmethod
    def from_file(cls, path):
        try:
            with io.open(path, encoding='utf-8') as fp:
                return cls.loads(fp.read())
        except (IOError, OSError) as e:
            raise ConfigError("Cannot read config file: %s" % e)

    def save(self, path):
        with io.open(path, 'w', encoding='utf-8', newline='\n') as fp:
            fp.write(self.dumps())

    def __eq__(self, other):
        return isinstance(other, PipelineConfig) and (
            self.dumps() == other.dumps())

    def __ne__(self, other):
        return not self == other

    __hash__ = None

    def __getstate__(self):
        return self.dumps()

    def __setstate__(self, state):
        for _, attr, klass in GROUPS:
            self.__dict__[attr] = klass()
        for key, value in PipelineConfig.loads(state).items():
            self.set(key, value)

    def __repr__(self):
        return "PipelineConfig(%s)" % ", ".join(
            "%s=%r" % kv for kv in self.items())
