"""The compiled kernels and their pure-Python twin must agree bit for bit."""

from __future__ import annotations

import math
import os
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aspecteval import _kernels_py, kernels

from oracles import brute_pair_counts, brute_ranks

try:
    from aspecteval import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")

finite = st.floats(-1e6, 1e6, allow_nan=False)
tie_rich = st.lists(st.integers(0, 4).map(float), min_size=2, max_size=12)


def outcome(fn, *args):
    """Return value or exception type, so error behaviour is compared too."""
    try:
        return fn(*args)
    except ValueError as exc:
        return type(exc), str(exc)


def test_pair_counts_example():
    assert kernels.pair_counts([1, 2, 2, 3], [1, 2, 3, 3]) == (4, 0, 1, 1)


@given(x=tie_rich, data=st.data())
def test_python_kernels_match_oracles(x, data):
    y = data.draw(st.lists(st.integers(0, 4).map(float), min_size=len(x), max_size=len(x)))
    assert _kernels_py.pair_counts(x, y) == brute_pair_counts(x, y)
    assert _kernels_py.average_ranks(x) == brute_ranks(x)


@needs_compiled
def test_compiled_kernels_are_in_use():
    if os.environ.get("ASPECTEVAL_PURE_PYTHON"):
        pytest.skip("pure-Python kernels forced by environment")
    assert kernels.IMPLEMENTATION == "cython"


@needs_compiled
@given(x=st.lists(finite, min_size=2, max_size=30), data=st.data())
def test_bit_identical_on_random_floats(x, data):
    y = data.draw(st.lists(finite, min_size=len(x), max_size=len(x)))
    assert compiled.average_ranks(x) == _kernels_py.average_ranks(x)
    assert compiled.pair_counts(x, y) == _kernels_py.pair_counts(x, y)
    a, b = compiled.pearson(x, y), _kernels_py.pearson(x, y)
    assert (math.isnan(a) and math.isnan(b)) or a == b
    assert outcome(compiled.cosine, x, y) == outcome(_kernels_py.cosine, x, y)


@needs_compiled
@given(x=tie_rich, data=st.data())
def test_bit_identical_on_tie_rich_vectors(x, data):
    y = data.draw(st.lists(st.integers(0, 4).map(float), min_size=len(x), max_size=len(x)))
    assert compiled.pair_counts(x, y) == _kernels_py.pair_counts(x, y)
    assert compiled.average_ranks(y) == _kernels_py.average_ranks(y)


@needs_compiled
def test_same_errors():
    for impl in (compiled, _kernels_py):
        with pytest.raises(ValueError):
            impl.cosine([0.0, 0.0], [1.0, 0.0])
        with pytest.raises(ValueError):
            impl.cosine([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            impl.pearson([1.0], [1.0])
        assert math.isnan(impl.pearson([1.0, 1.0], [1.0, 2.0]))


def test_env_var_forces_fallback():
    code = "import aspecteval.kernels as k; print(k.IMPLEMENTATION)"
    env = {**os.environ, "ASPECTEVAL_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
