"""Smoke test for the tgv_py extension module.

Build and run from the repository root:

    cargo build -p tgv-py --release --features extension-module
    cp target/release/libtgv_py.so python/tgv_py.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import tgv_py as t


def main():
    f = t.gen_disk(16, 0.3)
    assert f.shape == (16, 16) and f.dims == 2
    assert f.to_list() == [row[::-1] for row in f.to_list()]

    noisy = t.add_noise(f, 0.1, seed=3)
    assert noisy.to_list() == t.add_noise(f, 0.1, seed=3).to_list()

    cfg = t.SolverConfig(max_iter=3000, step_ratio=1e-2)
    tv = t.solve_tv(noisy, 0.3, cfg)
    tgv = t.solve_tgv2(noisy, 0.3, 0.6, cfg)
    assert tv.u.shape == (16, 16) and tv.w is None
    assert len(tgv.w) == 2 and len(tgv.w[0]) == 256
    assert tgv.objective > 0 and tgv.history()

    ramp = t.ScalarField([[0.5 * i - 0.25 * j for j in range(8)] for i in range(8)])
    assert abs(t.eval_tgv(ramp, 1.0, 1.0)) < 1e-6
    fitted, coeffs = t.linear_regression(ramp)
    assert fitted.rel_l2_distance(ramp) < 1e-12 and len(coeffs) == 3

    step = t.ScalarField([0.0] * 16 + [1.0] * 16)
    assert step.dims == 1
    tv2 = t.solve_tv2_1d(step, 0.5)
    assert len(tv2.u) == 32
    beta = t.find_beta_star(step, 0.1, t.SolverConfig(max_iter=2000))
    assert math.isnan(beta) or beta > 0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "f.txt")
        noisy.save(path)
        assert t.ScalarField.load(path).to_list() == noisy.to_list()

    try:
        t.solve_tv(f, -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative alpha accepted")

    print("RESULT smoke=pass tv_objective=%r tgv_objective=%r beta_star=%r" % (tv.objective, tgv.objective, beta))


if __name__ == "__main__":
    main()
