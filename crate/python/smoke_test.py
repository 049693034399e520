"""Smoke test for the gravcollapse_py extension module.

Build first, e.g. `maturin develop -m crates/python/Cargo.toml`, or copy
`target/release/libgravcollapse_py.so` next to this file as
`gravcollapse_py.so`.
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import gravcollapse_py as gc  # noqa: E402


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    rho = gc.Distribution.gaussian(mass=1.0, sigma=1.0)
    assert rho.kind == "gaussian" and rho.total_mass == 1.0

    d = 3.0
    s = gc.Scenario(rho, [d, 0.0, 0.0])
    r = gc.collapse_rate(s)
    expected = gc.G * (1 / math.sqrt(math.pi) - math.erf(d / 2) / d)
    assert close(r["e_delta"], expected, 1e-12), r
    assert close(r["lambda"] * gc.HBAR, r["e_delta"], 1e-12)
    assert close(r["lambda"] * r["tau"], 1.0, 1e-12)
    assert r["convention"] == "minimal-decoherence-half"
    assert gc.collapse_rate(gc.Scenario(rho, [0.0, 0.0, 0.0]))["tau"] is None

    q = gc.Quadrature(cell_size=0.5, padding=2.0)
    s2 = gc.Scenario(rho, [2.0, 0.0, 0.0])
    brute = gc.e_delta_bruteforce(s2, q)
    run = gc.dephasing_sim(s2, 2 * gc.HBAR / brute, 10, 2000, 1, q)
    assert abs(run["slope_ratio"] - 1.0) < 0.1, run["slope_ratio"]
    assert run["variance_curve"][0] == [0.0, 0.0]

    branches, times = gc.collapse_mc(1.0, 20000, 42)
    assert (branches, times) == gc.collapse_mc(1.0, 20000, 42)
    assert abs(branches.count(1) / len(branches) - 0.5) < 0.015
    assert abs(sum(times) / len(times) - 1.0) < 0.03

    rows = gc.sweep_separation(s, [0.0, 1.0, 3.0])
    assert rows[0]["lambda"] == 0.0 and close(rows[2]["e_delta"], r["e_delta"], 1e-12)

    qg, gg = gc.g_uncertainties(gc.optimal_testmass(1e-6, 1.0), 1e-6, 1.0)
    assert close(qg, gg, 1e-12)
    assert gc.unruh_c_difference() == "0" and gc.unruh_c_difference(False) != "0"

    assert close(gc.newtonian_transform(2.0), 1 / (8 * math.pi), 5e-2)
    table = gc.newtonian_limit_check([1.0, 2.0], [1e3, 2e3])
    assert table["flat_in_c"] and table["flat_in_r"]

    try:
        gc.Distribution.gaussian(mass=-1.0, sigma=1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative mass accepted")
    try:
        gc.dephasing_sim(s2, 1.0, 1, 1, 1, gc.Quadrature(0.5, 2.0, max_cells=10))
    except gc.ResourceError:
        pass
    else:
        raise AssertionError("cell cap ignored")

    print("smoke test passed")


if __name__ == "__main__":
    main()
