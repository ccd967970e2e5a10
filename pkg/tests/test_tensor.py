import numpy as np
import pytest

from lipids import tensor as T
from lipids.exceptions import ShapeError


def numeric_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def check_grad(build, *arrays, tol=1e-4):
    """Compare backward() with central differences for every input array."""
    leaves = [T.Tensor(a, requires_grad=True) for a in arrays]
    T.backward(build(*leaves), leaves)
    for k, leaf in enumerate(leaves):
        def f(x, k=k):
            args = [T.Tensor(a) for a in arrays]
            args[k] = T.Tensor(x)
            return float(build(*args).value)
        num = numeric_grad(f, np.array(arrays[k], dtype=float))
        err = np.linalg.norm(leaf.grad - num) / max(np.linalg.norm(num), 1e-8)
        assert err < tol, (k, err)


@pytest.fixture
def r():
    return np.random.default_rng(7)


def test_examples():
    A = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(T.matmul(A, T.Tensor(np.eye(2))).value, A.value)
    S = T.softmax_columns(T.Tensor(np.random.default_rng(0).normal(size=(5, 3))), scale=0.0)
    np.testing.assert_allclose(S.value, 0.2)
    np.testing.assert_allclose(T.l2_normalize_rows(T.Tensor([[3.0, 4.0, 0.0]])).value, [[0.6, 0.8, 0.0]])


def test_backward_examples():
    x = T.Tensor([1.0, 2.0, 3.0], requires_grad=True)
    T.backward(T.sum(x), [x])
    np.testing.assert_array_equal(x.grad, [1, 1, 1])
    T.backward(T.sum(T.mul(x, x)), [x])
    np.testing.assert_array_equal(x.grad, [2, 4, 6])


def test_non_participating_leaf_gets_zero():
    x = T.Tensor([1.0, 2.0], requires_grad=True)
    y = T.Tensor([[5.0]], requires_grad=True)
    T.backward(T.sum(x), [x, y])
    np.testing.assert_array_equal(y.grad, [[0.0]])


def test_non_scalar_loss():
    x = T.Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        T.backward(x, [x])


def test_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        T.add(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((4, 5))))
    with pytest.raises(ShapeError):
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))


@pytest.mark.parametrize("name, build, shapes", [
    ("matmul", lambda a, b: T.sum(T.matmul(a, b)), [(3, 4), (4, 2)]),
    ("add_row", lambda a, b: T.sum(T.mul(T.add(a, b), T.add(a, b))), [(3, 4), (1, 4)]),
    ("sub_col", lambda a, b: T.sum(T.mul(T.sub(a, b), a)), [(3, 4), (3, 1)]),
    ("mul", lambda a, b: T.sum(T.mul(a, b)), [(3, 4), (3, 4)]),
    ("relu", lambda a: T.sum(T.mul(T.relu(a), a)), [(4, 5)]),
    ("softmax", lambda a, w: T.sum(T.mul(T.softmax_columns(a, 2.5), w)), [(5, 3), (5, 3)]),
    ("mean", lambda a: T.mean(T.mul(a, a)), [(3, 3)]),
    ("l2norm", lambda a, w: T.sum(T.mul(T.l2_normalize_rows(a), w)), [(6, 3), (6, 3)]),
    ("masked_ss", lambda a: T.masked_sum_of_squares(a, np.array([1, 0, 1, 1], bool)), [(4, 3)]),
    ("reshape", lambda a, w: T.sum(T.mul(T.reshape(a, (6, 2)), w)), [(3, 4), (6, 2)]),
    ("transpose", lambda a, b: T.sum(T.matmul(T.transpose(a), b)), [(3, 4), (3, 2)]),
    ("group_max", lambda a, w: T.sum(T.mul(T.group_max(a, 3), w)), [(6, 4), (2, 4)]),
    ("scale", lambda a: T.sum(T.mul(T.scale(a, -1.7), a)), [(2, 3)]),
])
def test_primitive_gradients(name, build, shapes, r):
    check_grad(build, *[r.normal(size=s) for s in shapes])


def _composite(seed):
    g = np.random.default_rng(seed)
    K, M, q = 5, 2, 4
    V0 = g.normal(size=(6 * q, K))
    W1 = g.normal(size=(6, 8)) * 0.5
    W2 = g.normal(size=(8, 3)) * 0.5
    target = g.normal(size=(M * q, 3))

    def build(W, A, B):
        mixed = T.matmul(T.Tensor(V0), T.softmax_columns(W, 3.0))
        feats = T.reshape(T.transpose(mixed), (M * q, 6))
        h = T.relu(T.matmul(feats, A))
        out = T.l2_normalize_rows(T.matmul(h, B))
        return T.mean(T.mul(T.sub(out, T.Tensor(target)), T.sub(out, T.Tensor(target))))

    return build, [g.normal(size=(K, M)), W1, W2]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_composite_graph_gradients(seed):
    build, arrays = _composite(seed)
    check_grad(build, *arrays)


def test_backward_is_deterministic():
    build, arrays = _composite(5)
    grads = []
    for _ in range(2):
        leaves = [T.Tensor(a, requires_grad=True) for a in arrays]
        T.backward(build(*leaves), leaves)
        grads.append([l.grad.copy() for l in leaves])
    for a, b in zip(*grads):
        assert np.array_equal(a, b)


def test_tape_is_topological():
    x = T.Tensor(np.ones((2, 2)), requires_grad=True)
    y = T.relu(T.mul(x, x))
    loss = T.sum(T.add(y, x))
    order = T.tape(loss)
    pos = {n.id: i for i, n in enumerate(order)}
    for n in order:
        for p in n.parents:
            assert pos[p.id] < pos[n.id]


def test_softmax_columns_stochastic(r):
    S = T.softmax_columns(T.Tensor(r.normal(size=(12, 4)) * 50), scale=7.0).value
    assert np.all(S >= 0)
    np.testing.assert_allclose(S.sum(axis=0), 1.0, atol=1e-9)


def test_group_max_tie_break_draws_a_block():
    a = T.Tensor(np.ones((4, 1)), requires_grad=True)
    hits = set()
    for seed in range(20):
        out = T.group_max(a, 4, rng=np.random.default_rng(seed))
        T.backward(T.sum(out), [a])
        assert a.grad.sum() == 1.0
        hits.add(int(np.argmax(a.grad[:, 0])))
    assert len(hits) > 1


def test_adam_zero_grad_keeps_params():
    p = [np.array([1.0, -2.0])]
    state = T.adam_step(p, [np.zeros(2)], {})
    np.testing.assert_array_equal(p[0], [1.0, -2.0])
    assert state["t"] == 1


def test_adam_first_step_is_lr_sign():
    p = [np.array([0.5, 0.5, 0.5])]
    g = [np.array([3.0, -0.2, 1e-3])]
    T.adam_step(p, g, {}, lr=1e-4)
    np.testing.assert_allclose(p[0] - 0.5, -1e-4 * np.sign(g[0]), rtol=1e-4)


def test_adam_converges_on_quadratic():
    x = T.Tensor([4.0, -3.0], requires_grad=True)
    opt = T.Adam([x], lr=0.1)
    for _ in range(500):
        T.backward(T.sum(T.mul(x, x)), [x])
        opt.step()
    assert np.all(np.abs(x.value) < 1e-2)
