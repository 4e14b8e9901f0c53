import pytest

from randcsp import gen_ksat
from randcsp.oracle import count_exact

ACCEPTANCE = {}


def corpus(size=50, base_seed=1000):
    """Satisfiable random 3-SAT instances with n <= 10 and 2 <= m <= 6."""
    out, s = [], base_seed
    while len(out) < size:
        n, m = 6 + s % 5, 2 + s % 5
        f = gen_ksat(3, n, m, s)
        s += 1
        if f.m >= 1 and count_exact(f) > 0:
            out.append(f)
    return out


@pytest.fixture(scope="session")
def acceptance_corpus():
    return corpus()


def record(number, ok, detail=""):
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
