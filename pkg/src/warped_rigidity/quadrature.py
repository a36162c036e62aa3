import numpy as np

NODES_PER_PANEL = 16
_GL_CACHE = {}


def _rule(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def gauss_legendre_panels(edges, order: int = NODES_PER_PANEL):
    """Composite Gauss-Legendre nodes/weights with one panel per interval of ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x0, w0 = _rule(order)
    left, right = edges[:-1, None], edges[1:, None]
    half = 0.5 * (right - left)
    x = (left + right) * 0.5 + half * x0[None, :]
    w = half * w0[None, :]
    return x.ravel(), w.ravel()
