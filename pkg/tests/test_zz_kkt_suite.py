"""Runs last: KKT residuals of every designed psi built anywhere in the session."""
import pytest

from advrobust import design as D

from conftest import DESIGN_REGISTRY


@pytest.mark.criterion(12, "KKT residuals of every designed psi")
def test_every_design_in_the_session():
    assert DESIGN_REGISTRY, "no designs were recorded"
    seen, failures = set(), []
    for origin, d in DESIGN_REGISTRY:
        if id(d) in seen:
            continue
        seen.add(id(d))
        res = D.kkt_residuals(d)
        if not D.kkt_ok(res):
            failures.append((origin, d.model.describe() if d.model else None, d.xi, res))
    print(f"checked {len(seen)} designs")
    assert not failures, failures
