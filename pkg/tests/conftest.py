"""Shared helpers for driving the CLI in-process."""

import io
import json
import sys

from seqgp import cli


def run_cli(argv, stdin_text=None):
    """Invoke the entry point; returns (exit_code, stdout, stderr)."""
    out, err = io.StringIO(), io.StringIO()
    old = sys.stdout, sys.stderr, sys.stdin
    sys.stdout, sys.stderr = out, err
    if stdin_text is not None:
        sys.stdin = io.StringIO(stdin_text)
    try:
        code = cli.main(argv)
    finally:
        sys.stdout, sys.stderr, sys.stdin = old
    return code, out.getvalue(), err.getvalue()


def parse_report(text):
    """Split CLI output into (header, data rows as dicts, summary dict)."""
    lines = [ln for ln in text.splitlines() if ln]
    summary = json.loads(lines[-1])
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:-1]:
        cells = ln.split(",")
        rows.append({h: (float(c) if c != "" else None) for h, c in zip(header, cells)})
    return header, rows, summary
