"""Flat ``key = value`` configuration files.

Plain keys address :class:`TrainConfig` fields; keys prefixed ``synth.``
address :class:`SynthConfig` fields (plus ``synth.n_brains``).  Blank lines
and ``#`` comments are ignored.  Tuple values are comma-separated.
"""

from __future__ import annotations

from dataclasses import fields, replace

from .errors import BadConfig
from .harness.data import TrainConfig
from .synth import SynthConfig

SYNTH_PREFIX = "synth."
SYNTH_EXTRA = {"n_brains": 3}


def _coerce(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        items = [s for s in (p.strip() for p in raw.split(",")) if s]
        kind = type(default[0]) if default else float
        return tuple(kind(s) for s in items)
    return raw


def parse_pairs(text: str, source: str = "<config>") -> list[tuple[str, str, str]]:
    """``(key, value, where)`` triples; malformed lines are reported together."""
    pairs, problems = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            problems.append(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
            continue
        key, value = s.split("=", 1)
        pairs.append((key.strip(), value.strip(), f"{source}:{lineno}"))
    if problems:
        raise BadConfig(problems)
    return pairs


def resolve(pairs: list[tuple[str, str, str]], train: TrainConfig | None = None,
            synth: SynthConfig | None = None) -> tuple[TrainConfig, SynthConfig, dict]:
    """Apply ``pairs`` in order over the defaults and validate the result.

    Every unknown key, unparsable value and validation failure is collected
    before :class:`BadConfig` is raised.
    """
    train = train or TrainConfig()
    synth = synth or SynthConfig()
    t_defaults = {f.name: getattr(train, f.name) for f in fields(TrainConfig)}
    s_defaults = {f.name: getattr(synth, f.name) for f in fields(SynthConfig)}
    t_over, s_over, extra = {}, {}, dict(SYNTH_EXTRA)
    problems = []
    for key, value, where in pairs:
        if key.startswith(SYNTH_PREFIX):
            name = key[len(SYNTH_PREFIX):]
            if name in s_defaults:
                target, default = s_over, s_defaults[name]
            elif name in SYNTH_EXTRA:
                target, default = extra, SYNTH_EXTRA[name]
            else:
                problems.append(f"{where}: unknown config key {key!r}")
                continue
        elif key in t_defaults:
            name, target, default = key, t_over, t_defaults[key]
        else:
            problems.append(f"{where}: unknown config key {key!r}")
            continue
        try:
            target[name] = _coerce(value, default)
        except ValueError as exc:
            problems.append(f"{where}: bad value for {key!r}: {exc}")
    train = replace(train, **t_over)
    synth = replace(synth, **s_over)
    problems += train.problems()
    try:
        synth.validate()
    except BadConfig as exc:
        problems += [f"synth: {p}" for p in exc.problems]
    if extra["n_brains"] < 1:
        problems.append("synth.n_brains must be >= 1")
    if problems:
        raise BadConfig(problems)
    return train, synth, extra


def load(path: str | None, overrides: list[str] = ()) -> tuple[TrainConfig, SynthConfig, dict]:
    """Read ``path`` (if any), then apply ``key=value`` command-line overrides."""
    pairs = []
    if path:
        with open(path, encoding="utf-8") as fh:
            pairs += parse_pairs(fh.read(), path)
    bad = [o for o in overrides if "=" not in o]
    if bad:
        raise BadConfig([f"override {o!r} is not key=value" for o in bad])
    pairs += [(k.strip(), v.strip(), "--set") for k, v in (o.split("=", 1) for o in overrides)]
    return resolve(pairs)


def dump(train: TrainConfig, synth: SynthConfig, extra: dict | None = None) -> str:
    """Render a config file that :func:`load` maps back to the same objects."""

    def fmt(v):
        if isinstance(v, tuple):
            return ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = [f"{f.name} = {fmt(getattr(train, f.name))}" for f in fields(TrainConfig)]
    lines += [f"{SYNTH_PREFIX}{f.name} = {fmt(getattr(synth, f.name))}" for f in fields(SynthConfig)]
    for k, v in (extra or SYNTH_EXTRA).items():
        lines.append(f"{SYNTH_PREFIX}{k} = {fmt(v)}")
    return "\n".join(lines) + "\n"


def as_dict(train: TrainConfig, synth: SynthConfig, extra: dict) -> dict:
    d = train.to_dict()
    for f in fields(SynthConfig):
        v = getattr(synth, f.name)
        d[SYNTH_PREFIX + f.name] = list(v) if isinstance(v, tuple) else v
    for k, v in extra.items():
        d[SYNTH_PREFIX + k] = v
    return d
