import numpy as np
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")


class QuadraticCritic:
    """Stand-in critic Q(s, a) = -||a - a*||^2 with the Mlp forward/backward API."""

    def __init__(self, target):
        self.target = np.asarray(target, dtype=float)

    def forward(self, s, a):
        a = np.atleast_2d(a)
        q = -np.sum((a - self.target) ** 2, axis=1, keepdims=True)
        return q, a

    def __call__(self, s, a):
        return self.forward(s, a)[0]

    def backward(self, cache, dout):
        a = cache
        return [], None, dout * (-2.0) * (a - self.target)


def central_difference(f, params, h=1e-5):
    """Numerical gradient of scalar f() w.r.t. each array in ``params`` (in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = f()
            p[i] = old - h
            down = f()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_rel_error(a, b, floor=1e-4):
    """Max elementwise |a - b| / (|a| + |b|).

    Entries far below the gradient's own scale are compared against
    ``floor * max|b|`` instead, since central differences cannot resolve
    them relative to themselves.
    """
    a = np.concatenate([np.ravel(x) for x in a])
    b = np.concatenate([np.ravel(x) for x in b])
    denom = np.maximum(np.abs(a) + np.abs(b), floor * np.max(np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
