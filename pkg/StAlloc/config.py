import os
from dataclasses import dataclass, fields

from StAlloc.pointprocess import TOPOLOGIES, TORUS, BOX
from StAlloc.percolation import ADJACENCIES, FACE
from StAlloc.sim_utils import RNG_ID
from StAlloc._version import __version__

ALLOCATE = 'allocate'
SWEEP = 'sweep'
PM_ESTIMATE = 'pm'
TAIL_BOUND = 'tailbound'
DIAGNOSTICS = 'diagnostics'
KINDS = (ALLOCATE, SWEEP, PM_ESTIMATE, TAIL_BOUND, DIAGNOSTICS)

# Environment variable holding the default output directory
ENV_OUTDIR = 'STALLOC_OUTDIR'
DEFAULT_OUTDIR = 'stalloc_out'

DEFAULT_ALPHA = {
    ALLOCATE: [0.6],
    SWEEP: [0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85],
    PM_ESTIMATE: [1.0],
    TAIL_BOUND: [1.0],
    DIAGNOSTICS: [0.5, 0.8, 1.0],
}
DEFAULT_REPLICAS = {ALLOCATE: 1, SWEEP: 200, PM_ESTIMATE: 1000, TAIL_BOUND: 10000, DIAGNOSTICS: 100}


class ConfigError(ValueError):
    """Invalid configuration; carries the file and line when it comes from a config file"""
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        if line is not None:
            message = '{}:{}: {}'.format(path or '<config>', line, message)
        super().__init__(message)


def _bool(raw):
    value = raw.strip().lower()
    if value in ('1', 'true', 'yes', 'on'):
        return True
    if value in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError('expected a boolean, got {!r}'.format(raw))


def _float_list(raw):
    values = [float(x) for x in raw.replace(',', ' ').split()]
    if not values:
        raise ValueError('expected at least one number')
    return values


def _choice(options):
    def parse(raw):
        value = raw.strip().lower()
        if value not in options:
            raise ValueError('expected one of {}, got {!r}'.format(', '.join(options), raw))
        return value
    return parse


def _int(raw):
    return int(raw.strip())


def _str(raw):
    value = raw.strip()
    if not value:
        raise ValueError('empty value')
    return value


# key -> parser for the raw text value
PARSERS = {
    'kind': _choice(KINDS),
    'dimension': _int,
    'sides': _float_list,
    'topology': _choice(TOPOLOGIES),
    'h': float,
    'intensity': float,
    'alpha': _float_list,
    'replicas': _int,
    'seed': _int,
    'adjacency': _choice(ADJACENCIES),
    'outdir': _str,
    'render': _bool,
    'snapshot': _bool,
    'render_scale': _int,
    'workers': _int,
    'm_values': _float_list,
    'a_values': _float_list,
}


@dataclass
class ExperimentConfig:
    """Resolved experiment parameters (lengths in model units)"""
    kind: str
    dimension: int = 2
    sides: list = None
    topology: str = None
    h: float = 0.05
    intensity: float = 1.0
    alpha: list = None
    replicas: int = None
    seed: int = 1
    adjacency: str = FACE
    outdir: str = None
    render: bool = True
    snapshot: bool = False
    render_scale: int = 2
    workers: int = 1
    m_values: list = None
    a_values: list = None

    def __post_init__(self):
        if self.sides is None:
            self.sides = [20.0] * self.dimension
        if self.topology is None:
            self.topology = BOX if self.kind == SWEEP else TORUS
        if self.alpha is None:
            self.alpha = list(DEFAULT_ALPHA.get(self.kind, [1.0]))
        if self.replicas is None:
            self.replicas = DEFAULT_REPLICAS.get(self.kind, 1)
        if self.outdir is None:
            self.outdir = os.environ.get(ENV_OUTDIR, DEFAULT_OUTDIR)
        if self.m_values is None:
            self.m_values = [10.0, 20.0, 40.0]
        if self.a_values is None:
            self.a_values = [1.0, 2.0, 3.0]

    def validate(self, lines=None, path=None):
        """Check documented ranges; lines maps keys to the config line they came from"""
        lines = lines or {}

        def fail(key, message):
            raise ConfigError('{}: {}'.format(key, message), path, lines.get(key))

        if self.kind not in KINDS:
            fail('kind', 'unknown experiment kind {!r}'.format(self.kind))
        if self.dimension < 2:
            fail('dimension', 'must be >= 2')
        if len(self.sides) != self.dimension:
            fail('sides', 'expected {} side lengths, got {}'.format(self.dimension, len(self.sides)))
        if min(self.sides) <= 0:
            fail('sides', 'side lengths must be > 0')
        if not self.h > 0:
            fail('h', 'must be > 0')
        for L in self.sides:
            n = round(L / self.h)
            if n < 1 or abs(n * self.h - L) > 1e-9 * max(L, 1.0):
                fail('h', 'cell size {} does not divide side length {}'.format(self.h, L))
        if self.intensity < 0:
            fail('intensity', 'must be >= 0')
        if min(self.alpha) < 0:
            fail('alpha', 'appetites must be >= 0')
        if self.kind == SWEEP:
            if any(b <= a for a, b in zip(self.alpha, self.alpha[1:])):
                fail('alpha', 'sweep values must be strictly increasing')
            if self.topology != BOX:
                fail('topology', 'crossing sweeps need a box window')
        if self.replicas < 1:
            fail('replicas', 'must be >= 1')
        if self.seed < 0 or self.seed >= 2**64:
            fail('seed', 'must be in [0, 2^64)')
        if self.render_scale < 1:
            fail('render_scale', 'must be >= 1')
        if self.workers < 1:
            fail('workers', 'must be >= 1')
        if min(self.m_values) <= 0:
            fail('m_values', 'cube levels must be > 0')
        if min(self.a_values) <= 0:
            fail('a_values', 'radii must be > 0')
        if self.kind == TAIL_BOUND and not self.intensity > 0:
            fail('intensity', 'tail bounds need intensity > 0')

        return self

    def manifest_lines(self):
        lines = ['# engine_version = {}'.format(__version__), '# rng = {}'.format(RNG_ID)]
        for f in fields(self):
            lines.append('{} = {}'.format(f.name, _format(getattr(self, f.name))))
        return lines


def _format(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return '%.17g' % value
    if isinstance(value, (list, tuple)):
        return ','.join(_format(float(v)) for v in value)
    return str(value)


def read_config_file(path):
    """Raw key=value pairs of a config file.

    Returns:
      dict key -> (raw value, line number)
    """
    raw = {}
    try:
        with open(path) as fin:
            text = fin.readlines()
    except OSError as e:
        raise ConfigError('cannot read config file {}: {}'.format(path, e))

    for lineno, line in enumerate(text, start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError('expected key = value, got {!r}'.format(line), path, lineno)
        key, value = (x.strip() for x in line.split('=', 1))
        if key not in PARSERS:
            raise ConfigError('unknown key {!r}'.format(key), path, lineno)
        if key in raw:
            raise ConfigError('duplicate key {!r} (first on line {})'.format(key, raw[key][1]), path, lineno)
        raw[key] = (value, lineno)

    return raw


def build_config(raw, path=None):
    """ExperimentConfig from raw values (dict key -> (text, line or None)), validated"""
    values = {}
    lines = {}
    for key, (text, lineno) in raw.items():
        if key not in PARSERS:
            raise ConfigError('unknown key {!r}'.format(key), path, lineno)
        try:
            values[key] = PARSERS[key](text)
        except ValueError as e:
            raise ConfigError('{}: {}'.format(key, e), path, lineno)
        lines[key] = lineno

    if 'kind' not in values:
        raise ConfigError('missing experiment kind', path)

    return ExperimentConfig(**values).validate(lines, path)


def load_config(path, overrides=None):
    """Config file values, then overrides (dict key -> text) on top"""
    raw = read_config_file(path) if path else {}
    for key, text in (overrides or {}).items():
        raw[key] = (text, None)

    return build_config(raw, path)


def write_manifest(config, path):
    with open(path, 'w') as fout:
        fout.write('\n'.join(config.manifest_lines()) + '\n')
