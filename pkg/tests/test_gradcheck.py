import numpy as np
import pytest

from reflectgen import autodiff as ad
from reflectgen.autodiff import Tensor
from reflectgen.gradcheck import finite_diff_check
from reflectgen.rng import SeededRng


def _rand(rng, shape):
    return Tensor(rng.normal(shape), requires_grad=True)


class TestFiniteDiffCheck:
    def test_square_function(self):
        err = finite_diff_check(lambda xs: ad.sum_(ad.mul(xs[0], xs[0])),
                                [Tensor([3.0])], h=1e-3)
        assert err < 1e-6

    def test_constant_function_zero_error(self):
        err = finite_diff_check(lambda xs: ad.sum_(ad.mul(xs[0], Tensor(np.zeros(3)))),
                                [Tensor([1.0, 2.0, 3.0])], h=1e-3)
        assert err == 0.0

    def test_matmul_sum_matches_central_differences(self):
        rng = SeededRng(7)
        a, b = _rand(rng, (3, 4)), _rand(rng, (4, 2))
        err = finite_diff_check(lambda xs: ad.sum_(ad.matmul(xs[0], xs[1])), [a, b], h=1e-3)
        assert err < 1e-4

    def test_three_layer_gelu_mlp(self):
        rng = SeededRng(11)
        x = _rand(rng, (2, 5))
        ws = [_rand(rng, (5, 5)) for _ in range(3)]

        def f(xs):
            h = xs[0]
            for w in xs[1:]:
                h = ad.gelu(ad.matmul(h, w))
            return ad.mean(h)

        assert finite_diff_check(f, [x] + ws, h=1e-3) < 1e-4


KERNEL_CASES = {
    "matmul": lambda xs: ad.sum_(ad.matmul(xs[0], xs[1])),
    "add": lambda xs: ad.sum_(ad.mul(ad.add(xs[0], xs[1]), xs[0])),
    "mul": lambda xs: ad.sum_(ad.mul(xs[0], xs[1])),
    "scale": lambda xs: ad.sum_(ad.scale(xs[0], 1.7)),
    "gelu": lambda xs: ad.sum_(ad.gelu(xs[0])),
    "softmax": lambda xs: ad.sum_(ad.mul(ad.softmax(xs[0], axis=-1), xs[1])),
    "rms_norm": lambda xs: ad.sum_(ad.mul(ad.rms_norm(xs[0], ad.reshape(xs[2], (3,))), xs[1])),
    "mean_pool2d": lambda xs: ad.sum_(ad.mul(ad.mean_pool2d(xs[3], 2), xs[4])),
    "concat": lambda xs: ad.sum_(ad.mul(ad.concat([xs[0], xs[1]], axis=0),
                                        ad.concat([xs[1], xs[0]], axis=0))),
    "slice": lambda xs: ad.sum_(ad.slice_axis(xs[0], 1, 1, 3)),
    "transpose": lambda xs: ad.sum_(ad.mul(ad.transpose(xs[0]), ad.transpose(xs[1]))),
    "reshape": lambda xs: ad.sum_(ad.mul(ad.reshape(xs[0], (2, 2, 3)), ad.reshape(xs[1], (2, 2, 3)))),
    "embed_lookup": lambda xs: ad.sum_(ad.mul(
        ad.embed_lookup(xs[0], np.array([1, 0, 1])), Tensor(np.ones((3, 3)) * 0.5))),
    "scaled_dot_attention": lambda xs: ad.sum_(
        ad.scaled_dot_attention(xs[5], xs[6], xs[7])),
    "mean": lambda xs: ad.mean(ad.mul(xs[0], xs[0])),
}


@pytest.mark.parametrize("kind", sorted(KERNEL_CASES))
def test_every_kernel_backward_rule(kind):
    """Finite-difference property from the numeric-core contract: 10 random
    points per kernel, relative error < 1e-4."""
    f = KERNEL_CASES[kind]
    for trial in range(10):
        rng = SeededRng(1000 + trial)
        xs = [
            _rand(rng, (4, 3)),
            _rand(rng, (4, 3)),
            Tensor(rng.normal((3, 1)) * 0.3 + 1.0, requires_grad=True),
            _rand(rng, (4, 4)),
            _rand(rng, (2, 2)),
            _rand(rng, (1, 2, 3, 4)),
            _rand(rng, (1, 2, 5, 4)),
            _rand(rng, (1, 2, 5, 4)),
        ]
        if kind == "matmul":
            xs[1] = _rand(rng, (3, 5))
        assert finite_diff_check(f, xs, h=1e-3) < 1e-4, f"kernel {kind}, trial {trial}"
