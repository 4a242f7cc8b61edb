import sys

import numpy as np
import pytest
from hypothesis import settings

from ppca_quotient.model import PpcaParams

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_orthogonal(q, rng):
    """Haar-ish orthogonal matrix from the QR of a Gaussian matrix (reflections included)."""
    a = rng.standard_normal((q, q))
    qm, r = np.linalg.qr(a)
    return qm * np.sign(np.diag(r))


def random_theta(rng, p=None, q=None):
    p = p or int(rng.integers(2, 9))
    q = q or int(rng.integers(1, p))
    return PpcaParams(rng.standard_normal((p, q)), float(rng.uniform(0.2, 3.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
