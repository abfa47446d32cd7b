import os
import subprocess
import sys
import warnings

import pytest

warnings.filterwarnings("ignore", message="The TBB threading layer")


def run_cli(args, cwd, env_extra=None):
    env = dict(os.environ)
    env["PYTHONWARNINGS"] = "ignore"
    if env_extra:
        env.update(env_extra)
    return subprocess.run([sys.executable, "-m", "sgdescape.cli", *args], cwd=cwd, env=env,
                          capture_output=True, text=True)


@pytest.fixture
def cli(tmp_path):
    def _run(*args, env_extra=None):
        return run_cli(list(args), tmp_path, env_extra)
    _run.dir = tmp_path
    return _run


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def record_criterion(request):
    """Store a one-line verdict for the acceptance summary."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def _record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}"
        store.setdefault(number, []).append(line)
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store, key=str):
        for line in store[number]:
            terminalreporter.write_line(line)
