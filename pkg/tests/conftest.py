import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    Use as ``with report("C1", "detail"):``; the line is printed at the end of
    the run and the assertion error, if any, still fails the test.
    """
    lines = request.config.stash.setdefault(_RESULTS, [])

    class _Ctx:
        def __init__(self, tag, what):
            self.tag, self.what, self.detail = tag, what, ""

        def __enter__(self):
            return self

        def __exit__(self, et, ev, tb):
            status = "PASS" if et is None else "FAIL"
            msg = f"{self.tag} {status}  {self.what}"
            if self.detail:
                msg += f"  [{self.detail}]"
            if et is not None:
                msg += f"  ({str(ev).splitlines()[0] if str(ev) else et.__name__})"
            lines.append(msg)
            print(msg)
            return False

    return _Ctx


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_RESULTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for ln in sorted(lines, key=lambda s: (int(s.split()[0][1:].rstrip("abc")), s.split()[0])):
            terminalreporter.write_line(ln)
