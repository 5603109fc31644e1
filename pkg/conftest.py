import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    # no stray config.yaml or output directory from the environment
    monkeypatch.delenv("ERGOLAB_OUTPUT_DIR", raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def trace_file(tmp_path):
    path = tmp_path / "arrivals.txt"
    path.write_text("".join("{}\n".format(v) for v in [0, 1, 1, 0.5, 0, 2, 0, 1] * 64), encoding="utf-8")
    return path
