"""Shared store for the per-criterion acceptance lines."""

LINES: list[str] = []


def record(number, title, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {number}: {title}" + (f" -- {detail}" if detail else "")
    LINES.append(line)
    print(line)
    return ok
