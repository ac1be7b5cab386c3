import pytest

_LOG_KEY = pytest.StashKey[list]()


class Criterion:
    """Collects named checks for one acceptance criterion and records a single verdict line."""

    def __init__(self, log, number, title):
        self.log, self.number, self.title = log, number, title
        self.results = []

    def check(self, name, value, bound, kind="<="):
        ok = value <= bound if kind == "<=" else value >= bound
        self.results.append((name, float(value), float(bound), kind, bool(ok)))
        return ok

    def require(self, name, condition):
        self.results.append((name, float(bool(condition)), 1.0, "==", bool(condition)))
        return condition

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        failed = [r for r in self.results if not r[4]]
        if exc is not None:
            verdict, detail = "FAIL", f"{exc_type.__name__}: {exc}"
        elif failed or not self.results:
            verdict = "FAIL"
            detail = "; ".join(f"{n}={v:.3e} (needs {k} {b:.1e})" for n, v, b, k, _ in failed) or "no checks ran"
        else:
            verdict = "PASS"
            worst = max((r for r in self.results if r[3] == "<="), key=lambda r: r[1] / max(r[2], 1e-300),
                        default=None)
            detail = f"{len(self.results)} checks" + (
                f", tightest {worst[0]}={worst[1]:.2e} <= {worst[2]:.1e}" if worst else "")
        line = f"criterion {self.number:2d} [PRIMARY] {self.title}: {verdict} ({detail})"
        self.log.append(line)
        print(line)
        if exc is None and verdict == "FAIL":
            raise AssertionError(line)
        return False


@pytest.fixture
def criterion(request):
    log = request.config.stash.setdefault(_LOG_KEY, [])

    def make(number, title):
        return Criterion(log, number, title)
    return make


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_LOG_KEY, [])
    if log:
        terminalreporter.section("acceptance criteria")
        for line in sorted(log, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
