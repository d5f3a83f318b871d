"""The numba kernels and the pure-numpy fallback must agree."""

import json
import os
import subprocess
import sys

import numpy as np

from bayesfblin import _accel, dynamics
from bayesfblin.dynamics import PendulumParams, PendulumPlant

SCRIPT = """
import json
from dataclasses import replace
from bayesfblin import backend, harness
cfg = harness.ExperimentConfig.load("experiments/exp1.json")
print(json.dumps({"backend": backend(), "metrics": harness.metrics(harness.run(replace(cfg, t_f=4.0)))}))
"""


def _run(flag):
    env = dict(os.environ, BAYESFBLIN_NUMBA=flag)
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, cwd=root, capture_output=True,
                         text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_env_flag_selects_backend_and_results_agree():
    fast, slow = _run("1"), _run("0")
    assert slow["backend"] == "numpy"
    assert fast["backend"] == ("numba" if _accel.numba is not None else "numpy")
    for key in ("energy", "error"):
        assert abs(fast["metrics"][key] - slow["metrics"][key]) <= 1e-9 * abs(slow["metrics"][key])
    assert fast["metrics"]["n_data_a"] == slow["metrics"]["n_data_a"]


def test_integrator_kernel_matches_python_call():
    p = PendulumParams(l=1, m=0.5, r=1)
    fn = getattr(dynamics._dopri_pendulum, "py_func", dynamics._dopri_pendulum)
    args = (0.4, -1.0, 0.3, 0.01, p.g / p.l, p.r / p.inertia, 1 / p.inertia, 1e-8, 0.0, 0.0, 0.0,
            dynamics._A, dynamics._B5, dynamics._E, dynamics._C)
    ref = fn(*args)
    x = dynamics.integrate_hold(PendulumPlant.from_params(p), [0.4, -1.0], [0.3], 0.01)
    np.testing.assert_allclose(x, ref[:2], rtol=1e-13, atol=1e-15)
