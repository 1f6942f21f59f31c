import numpy as np
import pytest

from mvssnet.autodiff import Parameter, Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def param(rng, *shape, scale=1.0):
    return Parameter(rng.normal(0.0, scale, size=shape))


def leaf(rng, *shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def conv_loop(x, w, b=None, stride=1, padding=0):
    """Direct 6-nested-loop cross-correlation."""
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding : padding + h, padding : padding + wd] = x
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for a in range(n):
        for f in range(o):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0 if b is None else b[f]
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[a, ch, i * stride + u, j * stride + v] * w[f, ch, u, v]
                    out[a, f, i, j] = acc
    return out


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
