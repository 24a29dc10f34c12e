"""Environment spec files (TOML).

Three kinds are understood::

    kind = "strip"            # i.i.d. triples from a finite support
    m = 2
    epsilon = 0.05            # optional: measured from the support if omitted
    l = 1                     # optional power in the R clause, default 1
    name = "..."              # optional

    [[atom]]
    prob = 0.5
    P = [[0.4, 0.15], [0.1, 0.35]]      # row-major m x m
    Q = [[0.05, 0.1], [0.1, 0.1]]
    R = [[0.15, 0.15], [0.2, 0.15]]

    kind = "oned"             # 1D walk with jumps in [-m, m], lifted to the strip
    m = 2
    [[atom]]
    prob = 1.0
    p = [0.25, 0.25, 0.0, 0.25, 0.25]   # p(-m), ..., p(m)

    kind = "dirichlet"        # continuous family with entrywise floor epsilon
    m = 3
    epsilon = 0.05
    alpha = 1.0

Atom probabilities must sum to 1. Malformed files raise ``SpecFileError``;
well-formed files describing an invalid environment raise ``SpecError``.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .envgen import EnvSpec, OneDSpec, SpecError, Triple, discrete_spec, lift_1d

KINDS = ("strip", "oned", "dirichlet")


class SpecFileError(ValueError):
    """The file cannot be read or does not follow the grammar."""


@dataclass(frozen=True)
class LoadedSpec:
    spec: EnvSpec
    digest: str
    source: str
    raw: dict

    @property
    def oned(self) -> OneDSpec | None:
        return self.spec.oned


def canonical_digest(raw: dict) -> str:
    """sha256 of the parsed content, independent of formatting and key order."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _need(raw, key, typ):
    if key not in raw:
        raise SpecFileError(f"missing key {key!r}")
    v = raw[key]
    if typ is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, typ) or isinstance(v, bool):
        raise SpecFileError(f"key {key!r} must be of type {typ.__name__}")
    return v


def _matrix(v, m, what):
    try:
        a = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise SpecFileError(f"{what} is not a numeric matrix") from None
    if a.shape != (m, m):
        raise SpecFileError(f"{what} must be {m} x {m}, got shape {a.shape}")
    return a


def spec_from_dict(raw: dict) -> EnvSpec:
    kind = raw.get("kind", "strip")
    if kind not in KINDS:
        raise SpecFileError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    m = _need(raw, "m", int)
    if m < 1:
        raise SpecError("m must be >= 1")
    l = raw.get("l", 1)
    name = str(raw.get("name", ""))
    eps = raw.get("epsilon")
    if eps is not None:
        eps = float(eps)
    if kind == "dirichlet":
        if eps is None:
            raise SpecFileError("dirichlet specs need epsilon")
        return EnvSpec(m=m, epsilon=eps, l=l, kind="dirichlet",
                       alpha=float(raw.get("alpha", 1.0)), name=name)
    atoms = raw.get("atom")
    if not isinstance(atoms, list) or not atoms:
        raise SpecFileError("at least one [[atom]] table is required")
    probs = np.array([float(_need(a, "prob", float)) for a in atoms])
    if kind == "strip":
        triples = []
        for k, a in enumerate(atoms):
            P, Q, R = (_matrix(a.get(x), m, f"atom {k} {x}") for x in "PQR")
            triples.append(Triple(P, Q, R))
        return discrete_spec(triples, probs, epsilon=eps, l=l, name=name)
    vecs = []
    for k, a in enumerate(atoms):
        p = np.array(_need(a, "p", list), dtype=float)
        if p.shape != (2 * m + 1,):
            raise SpecFileError(f"atom {k} p must have 2m+1 = {2 * m + 1} entries")
        vecs.append(p)
    oned = OneDSpec(m, np.array(vecs), probs)
    spec = lift_1d(oned, epsilon=eps, l=l)
    if name:
        spec = EnvSpec(m=spec.m, epsilon=spec.epsilon, l=spec.l, kind="lift1d", oned=oned,
                       name=name)
    return spec


def load_spec(path: str | Path) -> LoadedSpec:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise SpecFileError(f"cannot read {path}: {exc.strerror or exc}") from None
    return loads_spec(data.decode("utf-8", errors="strict"), str(path))


def loads_spec(text: str, source: str = "<string>") -> LoadedSpec:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecFileError(f"{source}: {exc}") from None
    return LoadedSpec(spec_from_dict(raw), canonical_digest(raw), source, raw)


def shipped_specs() -> list[str]:
    d = resources.files("stripwalk") / "data" / "specs"
    return sorted(p.name for p in d.iterdir() if p.name.endswith(".toml"))


def shipped_spec_path(name: str) -> Path:
    return Path(str(resources.files("stripwalk") / "data" / "specs" / name))
