import json
import os
import shutil
import subprocess

import pytest


@pytest.fixture(scope="session")
def cli():
    exe = os.environ.get("AMF_CLI") or shutil.which("amf")
    if not exe:
        pytest.skip("amf executable not found (set AMF_CLI)")

    def run(*args, cwd=None):
        return subprocess.run([exe, *map(str, args)], cwd=cwd, capture_output=True, text=True)

    return run


@pytest.fixture
def write_json(tmp_path):
    def write(name, obj):
        path = tmp_path / name
        path.write_text(json.dumps(obj))
        return path

    return write


RATIONAL = {"family": "rational-attractive", "params": [1.0, 1.0], "sup_bound": 1.0, "holder_exponent": 1.0}
FPE = {"h": 0.02, "k": 0.01, "x_max": 8, "initial": {"kind": "gaussian", "center": 1.0, "width": 0.1}}
