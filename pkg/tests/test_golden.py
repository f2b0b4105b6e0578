"""Regression of every builtin's metrics against tests/golden/<name>.json.

Regenerate with ``pytest tests/test_golden.py --update-golden`` after an
intentional change, and review the diff.
"""

import json
import math
from pathlib import Path

import pytest

from conftest import run_builtin
from jcrsim.export import clean
from jcrsim.scenario import list_builtin_scenarios

GOLDEN = Path(__file__).parent / "golden"
NAMES = [n for n, _ in list_builtin_scenarios()]


def flatten(obj, prefix=""):
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            out.update(flatten(v, f"{prefix}.{k}" if prefix else str(k)))
        return out
    if isinstance(obj, list):
        out = {}
        for i, v in enumerate(obj):
            out.update(flatten(v, f"{prefix}[{i}]"))
        return out
    return {prefix: obj}


def tolerance(key, value):
    """Per-field tolerance written into the golden file next to each value."""
    if not isinstance(value, float):
        return None
    if key.endswith("_db") or "_db." in key or "lines_rel_db" in key:
        # lines at the numerical floor (beyond -200 dB) only need to stay there
        if abs(value) > 200:
            return {"abs": 60.0}
        return {"abs": 1e-3}
    return {"rel": 1e-6, "abs": 1e-12}


def golden_doc(metrics):
    flat = flatten(clean(metrics))
    return {"fields": {k: {"value": v, "tol": tolerance(k, v)} for k, v in sorted(flat.items())}}


@pytest.mark.slow
@pytest.mark.parametrize("name", NAMES)
def test_golden_metrics(name, request):
    bundle, _ = run_builtin(name)
    doc = golden_doc(bundle.metrics)
    path = GOLDEN / f"{name}.json"
    if request.config.getoption("--update-golden"):
        GOLDEN.mkdir(exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        pytest.skip("golden file rewritten")
    assert path.is_file(), f"missing golden file {path.name}; run with --update-golden"
    want = json.loads(path.read_text())["fields"]
    got = doc["fields"]
    assert sorted(got) == sorted(want), "metric fields changed"
    bad = []
    for key, entry in want.items():
        ref, tol, val = entry["value"], entry["tol"], got[key]["value"]
        if tol is None or not isinstance(val, float):
            ok = val == ref
        else:
            ok = math.isclose(val, ref, rel_tol=tol.get("rel", 0.0), abs_tol=tol.get("abs", 0.0))
        if not ok:
            bad.append(f"{key}: {val!r} vs golden {ref!r} (tol {tol})")
    assert not bad, "\n".join(bad)
