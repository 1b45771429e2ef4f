"""Every differentiable op against central finite differences, plus
brute-force oracles for the two losses."""

import math

import numpy as np
import pytest

from tslab import autodiff as ad
from tslab.autodiff import (ConfigurationError, Tensor, conv2d, cross_entropy,
                            dense, gelu, l2_normalize_rows, maxpool2,
                            numeric_gradient, relative_error, relu, reshape,
                            supcon_loss)

TOL = 1e-4


def project(out: Tensor, proj: np.ndarray) -> Tensor:
    """Scalarize an op output with a fixed random projection."""
    val = float(np.sum(out.data * proj))

    def backward(g):
        ad._accumulate(out, float(g) * proj)

    return Tensor(val, parents=(out,), backward=backward)


def check_input_grad(build, x0: np.ndarray, proj: np.ndarray) -> float:
    x = Tensor(x0.copy(), requires_grad=True)
    loss = project(build(x), proj)
    loss.backward()
    analytic = x.grad.copy()

    def f(arr):
        return float(np.sum(build(Tensor(arr)).data * proj))

    numeric = numeric_gradient(f, x0.copy())
    return relative_error(analytic, numeric)


@pytest.mark.parametrize("seed", range(20))
def test_conv2d_gradients(seed):
    rng = np.random.default_rng(seed)
    b, c, o = int(rng.integers(1, 3)), int(rng.integers(1, 3)), int(rng.integers(1, 4))
    h, w = int(rng.integers(3, 8)), int(rng.integers(3, 8))
    x0 = rng.normal(size=(b, c, h, w))
    w0 = rng.normal(size=(o, c, 3, 3))
    b0 = rng.normal(size=(o,))
    proj = rng.normal(size=(b, o, h - 2, w - 2))

    assert check_input_grad(lambda x: conv2d(x, Tensor(w0), Tensor(b0)), x0, proj) < TOL
    # kernel and bias gradients
    wt = Tensor(w0.copy(), requires_grad=True)
    bt = Tensor(b0.copy(), requires_grad=True)
    loss = project(conv2d(Tensor(x0), wt, bt), proj)
    loss.backward()
    nw = numeric_gradient(lambda a: float(np.sum(conv2d(Tensor(x0), Tensor(a), Tensor(b0)).data * proj)), w0.copy())
    nb = numeric_gradient(lambda a: float(np.sum(conv2d(Tensor(x0), Tensor(w0), Tensor(a)).data * proj)), b0.copy())
    assert relative_error(wt.grad, nw) < TOL
    assert relative_error(bt.grad, nb) < TOL


@pytest.mark.parametrize("seed", range(20))
def test_maxpool_gradients(seed):
    rng = np.random.default_rng(100 + seed)
    b, c = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    h, w = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    x0 = rng.normal(size=(b, c, h, w))
    proj = rng.normal(size=(b, c, h // 2, w // 2))
    assert check_input_grad(maxpool2, x0, proj) < TOL


@pytest.mark.parametrize("seed", range(20))
def test_dense_gradients(seed):
    rng = np.random.default_rng(200 + seed)
    b, f, o = int(rng.integers(1, 6)), int(rng.integers(1, 8)), int(rng.integers(1, 5))
    x0, w0, b0 = rng.normal(size=(b, f)), rng.normal(size=(f, o)), rng.normal(size=(o,))
    proj = rng.normal(size=(b, o))
    assert check_input_grad(lambda x: dense(x, Tensor(w0), Tensor(b0)), x0, proj) < TOL
    wt, bt = Tensor(w0.copy(), requires_grad=True), Tensor(b0.copy(), requires_grad=True)
    project(dense(Tensor(x0), wt, bt), proj).backward()
    nw = numeric_gradient(lambda a: float(np.sum(dense(Tensor(x0), Tensor(a), Tensor(b0)).data * proj)), w0.copy())
    assert relative_error(wt.grad, nw) < TOL


@pytest.mark.parametrize("seed", range(20))
def test_gelu_relu_gradients(seed):
    rng = np.random.default_rng(300 + seed)
    x0 = rng.normal(size=(int(rng.integers(2, 6)), int(rng.integers(2, 7)))) * 2.0
    # keep relu inputs away from the kink
    x0[np.abs(x0) < 1e-3] = 0.5
    proj = rng.normal(size=x0.shape)
    assert check_input_grad(gelu, x0, proj) < TOL
    assert check_input_grad(relu, x0, proj) < TOL


@pytest.mark.parametrize("seed", range(20))
def test_l2_normalize_gradients(seed):
    rng = np.random.default_rng(400 + seed)
    x0 = rng.normal(size=(int(rng.integers(2, 6)), int(rng.integers(2, 8)))) + 0.1
    proj = rng.normal(size=x0.shape)
    assert check_input_grad(l2_normalize_rows, x0, proj) < TOL


@pytest.mark.parametrize("seed", range(20))
def test_supcon_gradients(seed):
    rng = np.random.default_rng(500 + seed)
    m = int(rng.integers(2, 6))
    d = int(rng.integers(2, 8))
    z0 = rng.normal(size=(2 * m, d))
    z0 /= np.linalg.norm(z0, axis=1, keepdims=True)
    labels = np.concatenate([rng.integers(0, 2, m)] * 2)
    if len(np.unique(labels)) == 1:
        labels[0] = labels[m] = 1 - labels[0]
    tau = float(rng.uniform(0.05, 1.0))

    z = Tensor(z0.copy(), requires_grad=True)
    supcon_loss(z, labels, tau=tau).backward()
    numeric = numeric_gradient(
        lambda a: float(supcon_loss(Tensor(a), labels, tau=tau).data), z0.copy())
    assert relative_error(z.grad, numeric) < TOL


@pytest.mark.parametrize("seed", range(20))
def test_cross_entropy_gradients(seed):
    rng = np.random.default_rng(600 + seed)
    b = int(rng.integers(1, 7))
    logits0 = rng.normal(size=(b, 2)) * 3.0
    labels = rng.integers(0, 2, b)
    t = Tensor(logits0.copy(), requires_grad=True)
    cross_entropy(t, labels).backward()
    numeric = numeric_gradient(
        lambda a: float(cross_entropy(Tensor(a), labels).data), logits0.copy())
    assert relative_error(t.grad, numeric) < TOL


def test_reshape_gradient():
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=(3, 4, 5))
    proj = rng.normal(size=(3, 20))
    assert check_input_grad(lambda x: reshape(x, (3, 20)), x0, proj) < 1e-9


# ---------------------------------------------------------------------------
# SupCon: worked values and brute-force oracle
# ---------------------------------------------------------------------------

def supcon_bruteforce(z: np.ndarray, labels, tau: float) -> float:
    n = len(z)
    total = 0.0
    for i in range(n):
        rest = [a for a in range(n) if a != i]
        pos = [p for p in rest if labels[p] == labels[i]]
        for mpos in pos:
            num = math.exp(z[i] @ z[mpos] / tau)
            den = sum(math.exp(z[i] @ z[a] / tau) for a in rest)
            total -= math.log(num / den) / len(pos)
    return total


def test_supcon_worked_values():
    z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    labels = [0, 0, 1, 1]
    separated = float(supcon_loss(Tensor(z), labels, tau=1.0).data)
    # brute-force oracle value (4*(ln(e+2)-1) = 2.2057788557..., printed
    # elsewhere truncated to 2.205777)
    assert abs(separated - supcon_bruteforce(z, labels, 1.0)) < 1e-12
    assert abs(separated - 4.0 * (math.log(math.e + 2.0) - 1.0)) < 1e-12
    assert abs(separated - 2.2057788557282034) < 1e-6

    zc = np.tile([[1.0, 0.0]], (4, 1))
    collapsed = float(supcon_loss(Tensor(zc), labels, tau=1.0).data)
    assert abs(collapsed - supcon_bruteforce(zc, labels, 1.0)) < 1e-12
    assert abs(collapsed - 4.0 * math.log(3.0)) < 1e-12
    assert abs(collapsed - 4.394449154672439) < 1e-6
    assert separated < collapsed


def test_supcon_matches_bruteforce_oracle(rng):
    for _ in range(25):
        n = int(rng.integers(4, 13))
        d = int(rng.integers(2, 6))
        z = rng.normal(size=(n, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        labels = rng.integers(0, 2, n)
        if np.all(labels == labels[0]) or min(np.bincount(labels, minlength=2)) < 2:
            labels[:2] = 0
            labels[2:4] = 1
        tau = float(rng.uniform(0.1, 2.0))
        mine = float(supcon_loss(Tensor(z), labels, tau=tau).data)
        assert abs(mine - supcon_bruteforce(z, labels, tau)) < 1e-10


def test_supcon_batch_permutation_invariance(rng):
    z = rng.normal(size=(8, 4))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    labels = np.array([0, 0, 1, 1, 0, 1, 0, 1])
    base = float(supcon_loss(Tensor(z), labels, tau=0.3).data)
    perm = rng.permutation(8)
    permuted = float(supcon_loss(Tensor(z[perm]), labels[perm], tau=0.3).data)
    assert abs(base - permuted) < 1e-10


def test_supcon_requires_positives():
    z = np.eye(3)
    with pytest.raises(ConfigurationError):
        supcon_loss(Tensor(z), [0, 1, 1])


def test_supcon_pairing_validation():
    z = np.eye(4)
    with pytest.raises(ConfigurationError):
        supcon_loss(Tensor(z), [0, 0, 1, 1], pairing=[1, 2, 3, 0])
    with pytest.raises(ConfigurationError):
        supcon_loss(Tensor(z), [0, 1, 0, 1], pairing=[1, 0, 3, 2])


# ---------------------------------------------------------------------------
# cross-entropy: worked values and oracle
# ---------------------------------------------------------------------------

def test_cross_entropy_worked_values():
    assert abs(float(cross_entropy(Tensor(np.zeros(2)), 0).data) - math.log(2.0)) < 1e-12
    assert abs(float(cross_entropy(Tensor(np.zeros(2)), 1).data) - 0.693147) < 1e-6
    assert float(cross_entropy(Tensor(np.array([20.0, -20.0])), 0).data) < 1e-8


def test_cross_entropy_matches_formula_oracle(rng):
    for _ in range(100):
        logits = rng.normal(size=2) * 5.0
        label = int(rng.integers(0, 2))
        mine = float(cross_entropy(Tensor(logits), label).data)
        soft = np.exp(logits) / np.exp(logits).sum()
        assert abs(mine - (-math.log(soft[label]))) < 1e-12
