"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

RESULTS: list = []


def record(number: int, title: str, ok: bool, detail: str = "", gating: bool = True) -> None:
    tag = "PASS" if ok else "FAIL"
    note = "" if gating else " (non-gating)"
    line = f"[{tag}] criterion {number:2d}{note}: {title}" + (f" | {detail}" if detail else "")
    RESULTS.append(line)
    print(line)
