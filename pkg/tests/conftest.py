import numpy as np
import pytest
from hypothesis import strategies as st

from gkdist import QdParams
from gkdist.validity import is_valid

_ACCEPTANCE: list[str] = []


def random_valid_params(rng: np.random.Generator, family: str) -> QdParams:
    """Random parameters certified valid by the validity module.

    About a quarter of g-and-k draws take a negative ``k``, which must pass
    the numerical check.
    """
    while True:
        A = rng.uniform(-5, 5)
        B = float(np.exp(rng.uniform(np.log(0.1), np.log(5.0))))
        g = rng.uniform(-4, 4)
        if family == "gk":
            kh = rng.uniform(-0.3, 0.0) if rng.random() < 0.25 else rng.uniform(0.0, 1.5)
        else:
            kh = rng.uniform(0.0, 0.6)
        p = QdParams(family, A, B, g, kh)
        if is_valid(p).valid:
            return p


@st.composite
def valid_params(draw, family=None):
    fam = family or draw(st.sampled_from(["gk", "gh"]))
    A = draw(st.floats(-10, 10))
    B = draw(st.floats(0.05, 10))
    g = draw(st.floats(-5, 5))
    kh = draw(st.floats(0.0, 1.5 if fam == "gk" else 0.6))
    return QdParams(fam, A, B, g, kh)


@pytest.fixture
def record_acceptance(request):
    def record(label: str, ok: bool | None, detail: str) -> None:
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        _ACCEPTANCE.append(f"{status}  {label}: {detail}")
        request.node.acceptance_recorded = True

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    # a criterion test that raised before recording still gets a FAIL line
    if (
        rep.when == "call"
        and rep.failed
        and "record_acceptance" in getattr(item, "fixturenames", ())
        and not getattr(item, "acceptance_recorded", False)
    ):
        _ACCEPTANCE.append(f"FAIL  {item.name}: raised {call.excinfo.typename}: {call.excinfo.value}")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
