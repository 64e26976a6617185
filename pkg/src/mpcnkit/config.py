"""INI-style run configuration.

Sections and keys (all values are plain text)::

    [target]      family = student|gaussian|genexp, dim, alpha | sigma | c, p
    [kernel]      kind = rwm|pcn|mpcn, rho (pcn/mpcn), scale, increment (rwm)
    [run]         n_steps, burn_in, thin, seed, stream_id,
                  x0 = comma list  or  x0_norm = r (start at r * e_1),
                  functionals = comma list of built-in names
    [diagnostic]  name, n, states (norm:e1|random), norms, s, C, r_grid, rho,
                  grid, delta
    [experiment]  name plus experiment-specific grid keys

Grid-valued keys take comma-separated lists.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, MpcnError
from .kernels import DEFAULT_RHO, MhKernel, ProposalKernel
from .targets import make_target

__all__ = ["Config", "load_config", "parse_config_text"]


class Config:
    """Parsed config with typed, field-naming accessors."""

    def __init__(self, parser: configparser.ConfigParser, source: str = "<string>"):
        self._p = parser
        self.source = source
        self.overrides = {}

    def has(self, section, key=None):
        if key is None:
            return self._p.has_section(section)
        return self._p.has_option(section, key)

    def raw(self, section, key, default=None, required=False):
        if (section, key) in self.overrides:
            return str(self.overrides[(section, key)])
        if self._p.has_option(section, key):
            return self._p.get(section, key).strip()
        if required:
            raise ConfigError(f"missing required field '{section}.{key}'")
        return default

    def get_str(self, section, key, default=None, required=False):
        v = self.raw(section, key, default, required)
        return v if v is None else str(v)

    def get_float(self, section, key, default=None, required=False):
        v = self.raw(section, key, None, required)
        if v is None:
            return default
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"field '{section}.{key}' must be a number, got {v!r}") from None

    def get_int(self, section, key, default=None, required=False):
        v = self.raw(section, key, None, required)
        if v is None:
            return default
        try:
            f = float(v)
        except ValueError:
            raise ConfigError(f"field '{section}.{key}' must be an integer, got {v!r}") from None
        if not f.is_integer():
            raise ConfigError(f"field '{section}.{key}' must be an integer, got {v!r}")
        return int(f)

    def get_list(self, section, key, conv=float, default=None, required=False):
        v = self.raw(section, key, None, required)
        if v is None:
            return default
        items = [s.strip() for s in v.split(",") if s.strip()]
        try:
            return [conv(s) for s in items]
        except ValueError:
            raise ConfigError(f"field '{section}.{key}' has an invalid entry: {v!r}") from None

    def set_override(self, section, key, value):
        self.overrides[(section, key)] = value

    def canonical(self) -> dict:
        doc = {s: dict(sorted(self._p.items(s))) for s in sorted(self._p.sections())}
        for (s, k), v in sorted(self.overrides.items()):
            doc.setdefault(s, {})[k] = str(v)
        return doc

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    # ---- builders ---------------------------------------------------------

    def target(self, section="target", dim=None, **fixed):
        family = self.get_str(section, "family", required=True)
        d = dim if dim is not None else self.get_int(section, "dim", required=True)
        params = {}
        for key in ("alpha", "sigma", "c", "p"):
            if key in fixed:
                params[key] = fixed[key]
            elif self.has(section, key):
                params[key] = self.get_float(section, key)
        try:
            return make_target(family, d, **params)
        except MpcnError as exc:
            raise ConfigError(f"[{section}] {exc}") from exc
        except TypeError as exc:
            raise ConfigError(f"[{section}] missing parameter for family {family!r}: {exc}") from exc

    def kernel(self, target, section="kernel", kind=None):
        kind = kind or self.get_str(section, "kind", required=True)
        try:
            if kind == "rwm":
                return MhKernel(target, ProposalKernel.rwm(
                    self.get_float(section, "scale", 1.0),
                    self.get_str(section, "increment", "gaussian")))
            if kind in ("pcn", "mpcn"):
                return MhKernel(target, ProposalKernel(kind, rho=self.get_float(section, "rho", DEFAULT_RHO)))
        except MpcnError as exc:
            raise ConfigError(f"[{section}] {exc}") from exc
        raise ConfigError(f"field '{section}.kind' must be one of rwm, pcn, mpcn; got {kind!r}")

    def x0(self, dim, section="run"):
        if self.has(section, "x0") or (section, "x0") in self.overrides:
            x = self.get_list(section, "x0")
            if len(x) != dim:
                raise ConfigError(f"field '{section}.x0' has {len(x)} entries, target dimension is {dim}")
            return np.array(x)
        r = self.get_float(section, "x0_norm", None)
        if r is None:
            raise ConfigError(f"missing required field '{section}.x0' (or '{section}.x0_norm')")
        x = np.zeros(dim)
        x[0] = r
        return x


def parse_config_text(text: str, source="<string>") -> Config:
    p = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        p.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return Config(p, source)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))
