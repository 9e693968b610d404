#!/usr/bin/env python3
"""Smoke test for the Python bindings.

Builds nothing itself: run `cargo build --release -p cfspat-py` first. The
script copies the cdylib next to itself under the importable name and
exercises the main entry points.
"""
import math
import os
import shutil
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)


def stage_module():
    for profile in ("release", "debug"):
        src = os.path.join(ROOT, "target", profile, "libcfspat_py.so")
        if os.path.exists(src):
            dst = os.path.join(HERE, "cfspat_py.so")
            if not os.path.exists(dst) or os.path.getmtime(src) > os.path.getmtime(dst):
                shutil.copyfile(src, dst)
            return
    sys.exit("build the bindings first: cargo build --release -p cfspat-py")


stage_module()
sys.path.insert(0, HERE)

import cfspat_py as cf  # noqa: E402

checks = 0


def check(cond, msg):
    global checks
    assert cond, msg
    checks += 1


# pattern construction and statistics
p = cf.PointPattern([[0.5, 0.5]])
check(len(p) == 1 and p.dim == 2, "pattern basics")
delta = cf.cf_statistic(p, 1.0)
hand = 1.0 - 2.0 * (2.0 - 2.0 * math.exp(-0.5)) ** 2 + (2.0 / math.e) ** 2
check(abs(delta - hand) < 1e-12, f"closed form: {delta} vs {hand}")

tri = cf.omega_bar_squared(p)
check(abs(tri - (1.0 - 2.0 * 0.5625 + 4.0 / 9.0) / 4.0) < 1e-12, "omega bar")

# moments
check(abs(cf.null_mean(1.0, 2) - (1.0 - (2.0 / math.e) ** 2)) < 1e-12, "null mean")
check(cf.null_variance(1.0, 2, 25) > 0.0, "null variance")

# simulators are deterministic per seed
a = cf.sim_csr(40, 2, 7)
b = cf.sim_csr(40, 2, 7)
check(a.points() == b.points(), "csr determinism")
ssi = cf.sim_ssi(30, 0.05, 1)
pts = ssi.points()
dmin = min(
    math.dist(pts[i], pts[j]) for i in range(len(pts)) for j in range(i + 1, len(pts))
)
check(dmin >= 0.05, "ssi inhibition")

# analytic test on a CSR draw, both methods
rep = cf.cf_test(a, 1.0)
check(rep["method"] == "imhof" and 0.0 < rep["p_value"] <= 1.0, f"imhof test: {rep}")
rep_hi = cf.cf_test(a, 60.0)
check(rep_hi["method"] == "high_rho", f"high-rho switch: {rep_hi}")

# data set round trip through the published cell pattern
cells = cf.PointPattern.from_csv(os.path.join(ROOT, "data", "cells.csv"))
check(len(cells) == 42, "cells load")
rep = cf.cf_test(cells, 1.0)
check(rep["p_value"] < 0.02, f"cells regularity detected: {rep['p_value']}")
check(cf.clark_evans(cells) > 2.0, "clark-evans sees regularity")

omni = cf.omnibus_test(cells, mc_reps=2000, seed=11)
check(omni["p_value"] < 0.05 and len(omni["rho"]) == 3, f"omnibus: {omni}")

# envelope bands nest
env = cf.envelope(cf.sim_csr(30, 2, 3), grid_points=6)
for lo99, lo95, hi95, hi99 in zip(env["lo99"], env["lo95"], env["hi95"], env["hi99"]):
    check(lo99 <= lo95 < hi95 <= hi99, "band nesting")

print(f"ok - {checks} checks passed")
