import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from advrobust import _pykernels, kernels

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

try:
    from advrobust import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = ["python"] + (["cython"] if _ckernels is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    impl = _pykernels if request.param == "python" else _ckernels
    monkeypatch.setattr(kernels, "estimating_sums", impl.estimating_sums)
    monkeypatch.setattr(kernels, "batch_roots", impl.batch_roots)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- registry of every designed psi built during the session ------------------------

import advrobust  # noqa: E402
from advrobust import design as _design  # noqa: E402

DESIGN_REGISTRY = []
_DESIGNERS = ("min_aif_location", "min_aif_scale", "tradeoff_location", "tradeoff_scale", "exponential_tradeoff")


def _recording(fn):
    def wrapper(*args, **kwargs):
        out = fn(*args, **kwargs)
        DESIGN_REGISTRY.append((fn.__name__, out))
        return out

    wrapper.__wrapped__ = fn
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


for _name in _DESIGNERS:
    _wrapped = _recording(getattr(_design, _name))
    setattr(_design, _name, _wrapped)
    setattr(advrobust, _name, _wrapped)

_from_dict = _design.DesignedPsi.from_dict.__func__


def _recorded_from_dict(cls, d):
    out = _from_dict(cls, d)
    DESIGN_REGISTRY.append(("from_dict", out))
    return out


_design.DesignedPsi.from_dict = classmethod(_recorded_from_dict)


# -- acceptance criteria report -------------------------------------------------------

CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    number, title = mark.args
    entry = CRITERIA.setdefault(number, {"title": title, "passed": 0, "failed": 0})
    entry["failed" if rep.failed else "passed"] += 1


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(CRITERIA):
        e = CRITERIA[number]
        verdict = "FAIL" if e["failed"] else "PASS"
        tr.write_line(f"criterion {number:2d}: {verdict}  {e['title']}  ({e['passed']} passed, {e['failed']} failed)")
