"""Smoke test for the tci_spde_py extension module.

Build and install first:  pip install --no-build-isolation ./crates/py
Then run:                 python python/smoke_test.py   (or pytest python/)
"""

import json
import math

import tci_spde_py as tci


def test_t2_constant_at_zero_lipschitz():
    r = tci.t2_constant(1.0, 0.0, 1.0)
    assert abs(r["value"] / 4.0 - 1.0) < 1e-4
    assert r["warnings"] == []


def test_wasserstein():
    assert tci.w2_sorted_1d([0.0, 1.0], [0.0, 3.0]) == math.sqrt(2.0)
    assert tci.w2_small_cloud([[0.0, 0.0], [1.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]) == 1.0


def test_errors_become_value_errors():
    try:
        tci.w2_sorted_1d([0.0], [0.0, 1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("size mismatch must raise")


def test_constants_run():
    cfg = json.loads(tci.reference_config("heat"))
    report, failures = tci.run("constants", json.dumps(cfg))
    report = json.loads(report)
    assert failures == 0
    assert abs(report["results"]["C_T2"] / 4.0 - 1.0) < 1e-4
    assert report["config_hash"] and "timestamp" not in report


def test_small_verify_t2():
    cfg = json.loads(tci.reference_config("heat"))
    cfg["replicates"] = 32
    cfg["solver"] = {"dt": 0.01, "T": 0.5}
    report, failures = tci.run("verify-t2", json.dumps(cfg))
    assert failures == 0, report


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"{name}: ok")
