"""Collects one verdict line per acceptance criterion for the end-of-run summary."""
LINES: list[str] = []


def record(number: int, title: str, passed: bool, detail: str) -> bool:
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    LINES.append(line)
    print(line)
    return passed
