import numpy as np
import pytest


def smooth_bump_gradient(center, radius, cutoff=1e-3):
    """Gradient of a C-infinity bump supported in the disc around ``center``.

    The bump is exp(1 - rho^2/(rho^2 - |y-c|^2)) inside the disc and 0
    outside; all derivatives vanish at the support boundary, so composite
    Gauss quadrature converges fast through the seam.
    """
    c = np.asarray(center, dtype=float)
    rho2 = float(radius) ** 2

    def grad(pts):
        pts = np.asarray(pts, dtype=float)
        d = pts - c
        s = np.sum(d**2, axis=-1)
        out = np.zeros(pts.shape)
        ok = s < rho2 * (1.0 - cutoff)
        w = np.exp(1.0 - rho2 / (rho2 - s[ok])) * (-2.0 * rho2 / (rho2 - s[ok]) ** 2)
        out[ok] = w[..., None] * d[ok]
        return out

    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
