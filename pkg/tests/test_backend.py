import subprocess
import sys

import pytest

from abpsim import _backend, _pycore


def test_python_forced():
    assert _backend.get("python") is _pycore
    assert _backend.name_of(_pycore) == "python"


def test_env_selects_fallback():
    code = ("from abpsim import _backend; from abpsim.engine import *; "
            "from abpsim.model import *; "
            "r = run_abp(ABPSetup(DynamicsSpec('brownian', potential_preset('bessel1d'))), "
            "SimConfig(t_final=0.01)); print(r.backend)")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"ABPSIM_BACKEND": "python", "PATH": ""}, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.skipif("compiled" not in _backend.available, reason="extension not built")
def test_auto_prefers_compiled():
    assert _backend.name_of(_backend.get("auto")) == "compiled"
