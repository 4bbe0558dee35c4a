import shutil
import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def engine():
    """Path of the installed engine binary; the harness needs nothing else."""
    path = shutil.which("softfem")
    if path is None:
        pytest.skip("softfem binary not installed")
    return path


@pytest.fixture(scope="session")
def leg_scene_path(engine, tmp_path_factory):
    out = tmp_path_factory.mktemp("scenes")
    subprocess.run([engine, "make-scenes", "--out-dir", str(out)], check=True,
                   capture_output=True)
    return out / "leg.json"


@pytest.fixture(scope="session")
def quadratic_stub(tmp_path_factory):
    """A tiny CLI objective with a known analytic maximum of 1.0 at (0.3, 0.7)."""
    d = tmp_path_factory.mktemp("stub")
    script = d / "stub.py"
    script.write_text(
        "import sys\n"
        "x, y = float(sys.argv[1]), float(sys.argv[2])\n"
        "print(1.0 - (x - 0.3) ** 2 - (y - 0.7) ** 2)\n")
    return [sys.executable, str(script), "{x}", "{y}"]
