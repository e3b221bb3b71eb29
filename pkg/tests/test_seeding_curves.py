import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sffdl import _kernels
from sffdl.curves import Curve, log_times, mean_and_stderr
from sffdl.seeding import derive_seed, kind_code, splitmix64, stream


def test_splitmix64_reference_values():
    # first outputs of the reference splitmix64 generator seeded with 0
    state, outs = 0, []
    for _ in range(3):
        outs.append(splitmix64(state))
        state = (state + 0x9E3779B97F4A7C15) & ((1 << 64) - 1)
    assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


@settings(deadline=None)
@given(st.integers(0, 2**63), st.integers(0, 10**9))
def test_derive_seed_matches_compiled_version(master, index):
    k = "master_sim/trajectory"
    ref = derive_seed(master, k, index)
    got = int(_kernels.derive_seed(np.uint64(master), np.uint64(kind_code(k)), np.uint64(index)))
    assert got == ref


def test_streams_are_distinct_and_reproducible():
    a = stream(1, "chain", 0).random(4)
    np.testing.assert_array_equal(a, stream(1, "chain", 0).random(4))
    assert not np.allclose(a, stream(1, "chain", 1).random(4))
    assert not np.allclose(a, stream(1, "spin/open", 0).random(4))
    assert not np.allclose(a, stream(2, "chain", 0).random(4))


def test_curve_roundtrip(tmp_path):
    t = np.array([0.5, 1.0, 2.0])
    v = np.arange(6.0).reshape(3, 2)
    c = Curve(t, v, 10, 0.1 * v, {"L": 4}, ("x",), (np.array([-1, 1]),))
    csv_path, json_path = c.write(tmp_path / "c", "C")
    assert csv_path.read_text().startswith("# schema=1\n")
    back = Curve.from_csv(csv_path)
    np.testing.assert_array_equal(back.times, t)
    np.testing.assert_array_equal(back.values, v)
    np.testing.assert_array_equal(back.stderr, 0.1 * v)
    side = json.loads(json_path.read_text())
    assert side["n_realizations"] == 10 and side["L"] == 4


def test_curve_validation():
    with pytest.raises(ValueError):
        Curve([1.0, 0.5], [1.0, 2.0])
    with pytest.raises(ValueError):
        Curve([1.0, 2.0], [1.0, 2.0, 3.0])


def test_log_times_and_stderr():
    t = log_times(0.1, 10.0, 10)
    assert t[0] == pytest.approx(0.1) and t[-1] == pytest.approx(10.0) and t.size == 21
    x = np.array([1.0, 2.0, 3.0, 4.0])
    m, e = mean_and_stderr(x.sum(), (x * x).sum(), 4)
    assert m == 2.5 and e == pytest.approx(x.std(ddof=1) / 2)
