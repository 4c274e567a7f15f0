#!/usr/bin/env python3
"""Smoke test for the cmlearn_py extension module.

Locates the cdylib built by `cargo build --release -p cmlearn-py`, copies it
next to this script under the importable name, and exercises the API:
kernels, greedy selection, constrained fitting, model round-trip, and the
reduced-dynamics diagnostics on the 1-d example system.

Run from the repository root:
    cargo build --release -p cmlearn-py
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import sysconfig
import tempfile
from pathlib import Path

HERE = Path(__file__).resolve().parent
REPO = HERE.parent


def locate_extension() -> Path:
    """Copy the built cdylib next to this script with an importable name."""
    ext_suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libcmlearn_py.so", "cmlearn_py.dll", "libcmlearn_py.dylib")
    ]
    built = next((c for c in candidates if c.exists()), None)
    if built is None:
        sys.exit(
            "built extension not found; run `cargo build --release -p cmlearn-py` first"
        )
    dest = HERE / f"cmlearn_py{ext_suffix}"
    if not dest.exists() or built.stat().st_mtime > dest.stat().st_mtime:
        shutil.copy2(built, dest)
    return dest


locate_extension()
sys.path.insert(0, str(HERE))
import cmlearn_py as cm  # noqa: E402

failures = []


def check(name: str, ok: bool, detail: str = ""):
    print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
    if not ok:
        failures.append(name)


# --- kernels ---------------------------------------------------------------
poly = cm.Kernel.polynomial(0.5, 4)
gauss = cm.Kernel.gaussian(1.0)
wend = cm.Kernel.wendland()
check("kernel names", poly.name.startswith("poly") and "1" in gauss.name)
check(
    "polynomial kernel value",
    abs(poly.eval([0.2], [0.1]) - (1 + 0.5 * 0.02) ** 4) < 1e-15,
)
check("gaussian kernel at x=y", abs(gauss.eval([0.1, 0.2], [0.1, 0.2]) - 1.0) < 1e-15)
g = gauss.grad([0.0, 0.0], [0.1, 0.0])
fd = (gauss.eval([0.0, 0.0], [0.1 + 1e-6, 0.0]) - gauss.eval([0.0, 0.0], [0.1 - 1e-6, 0.0])) / 2e-6
check("kernel gradient vs finite difference", abs(g[0] - fd) < 1e-8, f"{g[0]:.6f}")

# --- dataset + greedy + fit on the 1-d example -----------------------------
sys1 = cm.System.example(1)
x, y = sys1.generate_dataset(t_final=200.0)
check("dataset harvested", len(x) == len(y) > 1000, f"N={len(x)}")

idx, power = cm.greedy_select(x, poly, math.sqrt(1e-15), 50)
check("greedy selects a small set", 1 <= len(idx) <= 50, f"n={len(idx)}")
check("greedy power history decreases", power == sorted(power, reverse=True))

model = cm.fit([x[i] for i in idx], [y[i] for i in idx], poly, 1e-13)
check("constraint h(0)=0", abs(model.value([0.0])) < 1e-8)
check("constraint Dh(0)=0", abs(model.gradient([0.0])[0]) < 1e-8)
train = max(abs(model.value(x[i]) - y[i]) for i in idx)
check("training residual small", train < 1e-4, f"{train:.2e}")

coeffs = dict((tuple(m), c) for m, c in model.taylor(4))
check(
    "quadratic Taylor coefficient near -1",
    abs(coeffs.get((2,), 0.0) + 1.0) < 0.05,
    f"{coeffs.get((2,), 0.0):.4f}",
)

res = sys1.max_residual(model)
check("invariance defect on test grid", res < 1e-3, f"{res:.2e}")

times, states = sys1.simulate_reduced(model, [0.1], t_final=50.0, newton_tol=1e-10)
check(
    "reduced trajectory decays toward origin",
    abs(states[-1][0]) < abs(states[0][0]),
    f"|x(50)|={abs(states[-1][0]):.2e}",
)

# --- model round-trip ------------------------------------------------------
with tempfile.TemporaryDirectory() as td:
    path = str(Path(td) / "model.txt")
    model.save(path)
    loaded = cm.Model.load(path)
    check(
        "save/load round-trip",
        loaded.num_centers == model.num_centers
        and abs(loaded.value([0.05]) - model.value([0.05])) < 1e-15,
    )

print()
if failures:
    print(f"{len(failures)} smoke checks FAILED: {failures}")
    sys.exit(1)
print("all smoke checks passed")
