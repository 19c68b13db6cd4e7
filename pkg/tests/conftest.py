import os

# Pin BLAS threads before numpy loads anywhere: single-threaded runs are
# what the latency/determinism criteria assume.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def record_acceptance(name: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    line = f"[acceptance] {name}: {status}" + (f"  ({detail})" if detail else "")
    _ACCEPTANCE_RESULTS.append((name, line))
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in _ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
