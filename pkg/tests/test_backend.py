import os
import subprocess
import sys

import pytest

from tritail import _kernels as K

SNIPPET = """
import hashlib, numpy as np
from tritail import _kernels as K
from tritail.glauber import ConstraintSet, run_chain
from tritail.oracle import enumerate_joint
from tritail.rates import ProblemSpec, TiltParams
spec = ProblemSpec(0.2, 0.3)
h = hashlib.sha1()
for tilt, con in ((TiltParams.triangle(spec, 1.0, check=False), ConstraintSet.cap(0.4272)),
                  (TiltParams(-0.4, 2.0, 0.5), None)):
    run = run_chain(tilt, 12, 60_000, 5_000, seed=3, spec=spec, constraint=con, batches=4)
    h.update(run.acc.tobytes()); h.update(run.hist.tobytes())
h.update(enumerate_joint(5).counts.tobytes())
print(K.BACKEND, h.hexdigest())
"""


def run_snippet(disable: bool) -> tuple[str, str]:
    env = dict(os.environ, TRITAIL_DISABLE_JIT="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True, text=True, check=True)
    backend, digest = out.stdout.split()
    return backend, digest


@pytest.mark.skipif(not K.JIT_ENABLED, reason="numba not available")
def test_fallback_bit_identical_to_numba():
    jit = run_snippet(False)
    py = run_snippet(True)
    assert jit[0] == "numba" and py[0] == "python"
    assert jit[1] == py[1]


def test_backend_flag_reported():
    assert K.BACKEND == ("numba" if K.JIT_ENABLED else "python")
