import io
import logging

import pytest

from src.cli import run


@pytest.fixture(autouse=True)
def restore_root_logger(clean_env):
    root = logging.getLogger()
    level, handlers = root.level, list(root.handlers)
    yield
    root.handlers = handlers
    root.setLevel(level)


@pytest.fixture
def cli():
    """Run the command line in-process; returns (exit code, stdout, stderr)."""

    def invoke(*argv):
        out, err = io.StringIO(), io.StringIO()
        code = run([str(a) for a in argv], out=out, err=err)
        return code, out.getvalue(), err.getvalue()

    return invoke


@pytest.fixture
def pattern_toy(cli, tmp_path):
    path = tmp_path / "toy.bin"
    code, _, err = cli("gen-toy", "--kind", "patterns", "--out", path, "--count", 300, "--seed", 1)
    assert code == 0, err
    return path
