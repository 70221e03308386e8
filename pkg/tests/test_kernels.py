import numpy as np
import pytest

from scfred import _kernels, _pykernels

ck = pytest.importorskip("scfred._ckernels")


def test_backend_selected():
    assert _kernels.BACKEND in ("cython", "python")


def test_cutoff_parity(rng):
    s = rng.uniform(-3, 3, 1000)
    for a, b in zip(ck.cutoff(s), _pykernels.cutoff(s)):
        assert np.allclose(a, b, atol=1e-15, rtol=0)


def test_glue_parity(rng):
    b = rng.uniform(0, 1, 50)
    h, k = rng.normal(size=(2, 50, 3))
    for x, y in zip(ck.glue_pointwise(b, h, k), _pykernels.glue_pointwise(b, h, k)):
        assert np.allclose(x, y, atol=1e-15)
    for x, y in zip(ck.unglue_pointwise(b, h, k), _pykernels.unglue_pointwise(b, h, k)):
        assert np.allclose(x, y, atol=1e-14)


def test_readonly_inputs(rng):
    b = rng.uniform(0, 1, 5)
    h = rng.normal(size=(5, 1))
    h.setflags(write=False)
    ck.glue_pointwise(b, h, h)


def test_gf2_parity(rng):
    for _ in range(30):
        M = rng.integers(0, 2, size=rng.integers(1, 12, size=2))
        Rc, pc = ck.gf2_row_reduce(M)
        Rp, pp = _pykernels.gf2_row_reduce(M)
        assert pc == pp
        assert np.array_equal(Rc, Rp)


def test_gf2_rank_against_xor_basis(rng):
    for _ in range(30):
        M = rng.integers(0, 2, size=(9, 7))
        basis = {}
        for row in M:
            x = int("".join(map(str, row)), 2)
            while x:
                top = x.bit_length() - 1
                if top in basis:
                    x ^= basis[top]
                else:
                    basis[top] = x
                    break
        assert len(_kernels.gf2_row_reduce(M)[1]) == len(basis)
