import numpy as np
import pytest

from stripwalk.envgen import SpecError
from stripwalk.specfile import (SpecFileError, canonical_digest, load_spec, loads_spec,
                                shipped_spec_path, shipped_specs)

STRIP = """
kind = "strip"
m = 1
[[atom]]
prob = 0.5
P = [[0.3]]
Q = [[0.7]]
R = [[0.0]]
[[atom]]
prob = 0.5
P = [[0.7]]
Q = [[0.3]]
R = [[0.0]]
"""


def test_three_shipped_specs_load():
    names = shipped_specs()
    assert names == ["oned_zero_drift.toml", "scalar_symmetric.toml", "strip2_mirror.toml"]
    for n in names:
        ls = load_spec(shipped_spec_path(n))
        assert len(ls.digest) == 64
        assert ls.spec.validate() == [] or not ls.spec.validate()


def test_oned_spec_exposes_site_law():
    ls = load_spec(shipped_spec_path("oned_zero_drift.toml"))
    assert ls.oned is not None and ls.oned.m == 2
    assert np.allclose(ls.oned.drifts(), 0.0)


def test_digest_ignores_formatting():
    a = loads_spec(STRIP)
    b = loads_spec("# comment\n" + STRIP.replace(" = ", "="))
    assert a.digest == b.digest
    c = loads_spec(STRIP.replace("0.3]]\nQ", "0.30000001]]\nQ").replace("[[0.7]]\nR", "[[0.69999999]]\nR", 1))
    assert c.digest != a.digest
    assert canonical_digest({"b": 1, "a": 2}) == canonical_digest({"a": 2, "b": 1})


@pytest.mark.parametrize("text,err", [
    ("m = 2\nkind = 'weird'", SpecFileError),
    ("kind = 'strip'", SpecFileError),
    ("kind = 'strip'\nm = 2", SpecFileError),
    ("kind = 'strip'\nm = 1\n[[atom]]\nprob = 1.0\nP = [[0.5, 0.5]]\nQ = [[0.5]]\nR = [[0]]",
     SpecFileError),
    ("this is = not toml [", SpecFileError),
    ("kind = 'dirichlet'\nm = 2", SpecFileError),
    ("kind = 'strip'\nm = 1\n[[atom]]\nprob = 1.0\nP = [[0.5]]\nQ = [[0.6]]\nR = [[0]]",
     SpecError),
    ("kind = 'oned'\nm = 1\n[[atom]]\nprob = 1.0\np = [0.5, 0.5]", SpecFileError),
])
def test_malformed_or_invalid(text, err):
    with pytest.raises(err):
        loads_spec(text)


def test_missing_file():
    with pytest.raises(SpecFileError):
        load_spec("/nonexistent/spec.toml")
