import logging
import operator
import os
import subprocess
import sys
import tempfile

import appdirs
import pytest

from sustain import cohort, dirs, settings, signal_io, synth


# https://docs.pytest.org/en/latest/example/simple.html#dynamically-adding-command-line-options
#
# use 'pytest --skip-slow' when iterating on something, the slow tests
# synthesize and analyse whole recordings
def pytest_addoption(parser):
    parser.addoption(
        "--skip-slow", action="store_true", default=False, help="skip tests marked as slow"
    )


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return
    skip_slow = pytest.mark.skip(reason="--skip-slow given")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


class MonkeypatchedAppDirs(appdirs.AppDirs):
    user_cache_dir = property(operator.attrgetter("_cache"))
    user_config_dir = property(operator.attrgetter("_config"))
    user_log_dir = property(operator.attrgetter("_logs"))


@pytest.fixture(scope="session", autouse=True)
def monkeypatch_dirs():
    with tempfile.TemporaryDirectory() as d:
        # This is a hack because:
        #   - pytest monkeypatch fixture doesn't work (not for scope='session')
        #   - assigning to dirs.user_cache_dir doesn't work (appdirs uses @property)
        #   - "sustain.dirs = blahblah" doesn't work (from sustain import dirs)
        dirs.__class__ = MonkeypatchedAppDirs
        dirs._cache = os.path.join(d, "cache")
        dirs._config = os.path.join(d, "config")
        dirs._logs = os.path.join(d, "logs")
        assert dirs.user_config_dir.startswith(d)
        yield d


@pytest.fixture(autouse=True)
def no_seed_from_environment(monkeypatch):
    monkeypatch.delenv(settings.SEED_ENV_VAR, raising=False)


@pytest.fixture(scope="function", autouse=True)
def check_nothing_logged(request):
    if "caplog" in request.fixturenames:
        # Test uses caplog fixture, expects to get logging errors
        yield
    else:
        # Fail test if it logs an error
        def emit(record: logging.LogRecord):
            raise RuntimeError(f"test logged error: {record}")

        handler = logging.Handler()
        handler.setLevel(logging.ERROR)
        handler.emit = emit
        logging.getLogger().addHandler(handler)
        yield
        logging.getLogger().removeHandler(handler)


@pytest.fixture
def run_sustain(tmp_path):
    env = dict(os.environ)
    env.pop(settings.SEED_ENV_VAR, None)
    # keep the user's config and logs out of it, appdirs respects these on linux
    env["XDG_CONFIG_HOME"] = str(tmp_path / "xdg-config")
    env["XDG_CACHE_HOME"] = str(tmp_path / "xdg-cache")

    def actually_run_sustain(args, expected_exit_status, *, extra_env={}):
        run_result = subprocess.run(
            [sys.executable, "-m", "sustain"] + [str(arg) for arg in args],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            encoding="utf-8",
            env={**env, **extra_env},
        )
        assert run_result.returncode == expected_exit_status, run_result.stdout
        return run_result.stdout

    return actually_run_sustain


# in-process command line runs, without creating log files
@pytest.fixture
def cli(mocker):
    from sustain.__main__ import main

    mocker.patch("sustain.__main__._logs.setup")
    return lambda args: main([str(arg) for arg in args])


@pytest.fixture
def write_voice(tmp_path):
    def actually_write_voice(name="voice.wav", **spec_fields):
        spec_fields.setdefault("sample_rate", 16000)
        spec_fields.setdefault("duration", 2.0)
        w, truth = synth.synth_voice(synth.SynthSpec(**spec_fields))
        path = tmp_path / name
        signal_io.write_wav(path, w)
        return path, truth

    return actually_write_voice


@pytest.fixture(scope="session")
def separable_cohort():
    return cohort.make_cohort(cohort.CohortSpec(separation=8), seed=1)


@pytest.fixture(scope="session")
def null_cohort():
    return cohort.make_cohort(cohort.CohortSpec(separation=0), seed=2)
