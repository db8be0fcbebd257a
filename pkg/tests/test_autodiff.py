import numpy as np
import pytest
import scipy.sparse as sp

from hsi import autodiff as ad


def fd_grad(build, params, h=1e-5):
    """Central finite differences of a scalar-valued tape builder."""
    grads = []
    for k, p in enumerate(params):
        num = np.zeros_like(p)
        flat = p.ravel()
        for i in range(p.size):
            orig = flat[i]
            flat[i] = orig + h
            t = ad.Tape()
            fp = float(build(t, [t.leaf(q) for q in params]).data)
            flat[i] = orig - h
            t = ad.Tape()
            fm = float(build(t, [t.leaf(q) for q in params]).data)
            flat[i] = orig
            num.ravel()[i] = (fp - fm) / (2 * h)
        grads.append(num)
    return grads


def check(build, params, tol=1e-6):
    t = ad.Tape()
    leaves = [t.leaf(p) for p in params]
    loss = build(t, leaves)
    g = t.backward(loss)
    ana = [g[l.idx] for l in leaves]
    num = fd_grad(build, params)
    for a, n in zip(ana, num):
        scale = max(np.abs(n).max(), 1e-8)
        assert np.abs(a - n).max() / scale < tol


rng = np.random.default_rng(0)


class TestOpGradients:
    def test_linear(self):
        x, w, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 5)), rng.normal(size=5)
        check(lambda t, l: ad.vsum(ad.relu(ad.linear(l[0], l[1], l[2]))), [x, w, b])

    def test_gather_with_scatter(self):
        x = rng.normal(size=(2, 6, 3))
        idx = rng.integers(0, 6, size=12)
        scat = ad.gather_scatter_matrix(idx, 6)
        check(lambda t, l: ad.vsum(ad.gather(l[0], idx, scat)), [x])

    def test_gather_without_scatter(self):
        x = rng.normal(size=(6, 3))
        idx = rng.integers(0, 6, size=9)
        check(lambda t, l: ad.vsum(ad.gather(l[0], idx)), [x])

    def test_spmm(self):
        x = rng.normal(size=(2, 5, 3))
        s = sp.random(4, 5, density=0.6, random_state=1, format="csr")
        check(lambda t, l: ad.vsum(ad.spmm(s, l[0])), [x])

    def test_concat_tile_add_rowvec(self):
        a, b, r = rng.normal(size=(2, 4, 3)), rng.normal(size=(2, 4, 2)), rng.normal(size=(2, 5))
        def build(t, l):
            c = ad.concat([l[0], l[1]], axis=-1)
            z = ad.tile_last(l[2], 2)  # (2, 10)
            return ad.vsum(ad.add_rowvec(ad.concat([c, c], axis=-1), z))
        check(build, [a, b, r])

    def test_softmax_cce(self):
        x = rng.normal(size=(3, 4))
        onehot = np.eye(4)[[0, 2, 1]]
        check(lambda t, l: ad.vsum(ad.cce(ad.softmax(l[0]), onehot)), [x])

    def test_sigmoid_bce(self):
        x = rng.normal(size=(5,))
        tgt = (rng.random(5) > 0.5).astype(float)
        check(lambda t, l: ad.vsum(ad.bce(ad.sigmoid(l[0]), tgt)), [x])

    def test_kl_and_reparameterize(self):
        mu, lv = rng.normal(size=4) * 0.5, rng.normal(size=4) * 0.4
        noise = rng.normal(size=4)
        def build(t, l):
            z = ad.reparameterize(l[0], l[1], noise)
            return ad.add(ad.vsum(ad.kl_normal(l[0], l[1])), ad.mul(ad.vsum(z), 0.3))
        check(build, [mu, lv])

    def test_slice_mean_reshape(self):
        x = rng.normal(size=(3, 4, 5))
        def build(t, l):
            s = ad.slice_last(l[0], 1, 4)
            return ad.vmean(ad.reshape(s, (3, 12)))
        check(build, [x])

    def test_three_layer_network_64_params(self):
        w1 = rng.normal(size=(4, 5)) * 0.7
        b1 = rng.normal(size=5) * 0.1
        w2 = rng.normal(size=(5, 5)) * 0.7
        b2 = rng.normal(size=5) * 0.1
        w3 = rng.normal(size=(5, 2)) * 0.7
        b3 = rng.normal(size=2) * 0.1
        x = rng.normal(size=(7, 4))
        tgt = (rng.random((7, 2)) > 0.5).astype(float)
        def build(t, l):
            h = ad.relu(ad.linear(t.leaf(x), l[0], l[1]))
            h = ad.relu(ad.linear(h, l[2], l[3]))
            p = ad.sigmoid(ad.linear(h, l[4], l[5]))
            return ad.vsum(ad.bce(p, tgt))
        assert sum(p.size for p in [w1, b1, w2, b2, w3, b3]) >= 64
        check(build, [w1, b1, w2, b2, w3, b3])


class TestClosedForms:
    def test_kl_zero(self):
        t = ad.Tape()
        v = ad.vsum(ad.kl_normal(t.leaf(np.zeros(3)), t.leaf(np.zeros(3))))
        assert float(v.data) == 0.0

    def test_kl_unit_mean(self):
        t = ad.Tape()
        v = ad.kl_normal(t.leaf(np.ones(1)), t.leaf(np.zeros(1)))
        assert float(v.data[0]) == pytest.approx(0.5, abs=1e-12)

    def test_bce_half(self):
        t = ad.Tape()
        v = ad.bce(t.leaf(np.array([0.5])), np.array([1.0]))
        assert float(v.data[0]) == pytest.approx(np.log(2), abs=1e-9)

    def test_relu_gradient_ones(self):
        t = ad.Tape()
        x = t.leaf(np.array([1.0, 2.0, 3.0]))
        g = t.backward(ad.vsum(ad.relu(x)))
        assert np.array_equal(g[x.idx], np.ones(3))

    def test_bce_gradient_zero_at_target(self):
        # sigmoid-composed BCE has zero gradient at the matching logit limit
        t = ad.Tape()
        x = t.leaf(np.array([0.0]))
        p = ad.sigmoid(x)
        g = t.backward(ad.vsum(ad.bce(p, np.array([0.5]))))
        assert abs(g[x.idx][0]) < 1e-12

    def test_softmax_normalized_and_shift_invariant(self):
        t = ad.Tape()
        x = rng.normal(size=(4, 6))
        a = ad.softmax(t.leaf(x)).data
        b = ad.softmax(t.leaf(x + 100.0)).data
        assert np.abs(a.sum(axis=-1) - 1.0).max() < 1e-6
        assert np.abs(a - b).max() < 1e-9

    def test_reparameterize_zero_noise_is_mu(self):
        t = ad.Tape()
        mu = np.array([1.5, -2.0])
        z = ad.reparameterize(t.leaf(mu), t.leaf(np.array([3.0, -1.0])), np.zeros(2))
        assert np.array_equal(z.data, mu)

    def test_kl_nonnegative_random(self):
        t = ad.Tape()
        for _ in range(50):
            mu = rng.normal(size=8) * 3
            lv = rng.normal(size=8) * 3
            v = ad.kl_normal(t.leaf(mu), t.leaf(lv)).data
            assert (v >= 0).all()


class TestShapes:
    def test_linear_shape_mismatch(self):
        t = ad.Tape()
        with pytest.raises(ad.ShapeError, match="linear"):
            ad.linear(t.leaf(np.zeros((2, 3))), t.leaf(np.zeros((4, 5))))

    def test_backward_requires_scalar(self):
        t = ad.Tape()
        x = t.leaf(np.zeros(3))
        y = ad.relu(x)
        with pytest.raises(ad.ShapeError, match="scalar"):
            t.backward(y)

    def test_bce_shape_mismatch(self):
        t = ad.Tape()
        with pytest.raises(ad.ShapeError):
            ad.bce(t.leaf(np.zeros(3)), np.zeros(4))


class TestAdam:
    def test_zero_gradient_no_change(self):
        st = ad.AdamState()
        p = {"w": np.ones(3)}
        out = ad.adam_step(st, p, {"w": np.zeros(3)})
        assert np.array_equal(out["w"], p["w"])

    def test_descends_constant_gradient(self):
        st = ad.AdamState(lr=0.01)
        p = {"w": np.zeros(1)}
        for _ in range(50):
            p = ad.adam_step(st, p, {"w": np.array([2.0])})
        assert p["w"][0] < 0  # moves opposite the gradient sign

    def test_matches_hand_recurrence(self):
        st = ad.AdamState(lr=0.1)
        p = {"x": np.array([1.0])}
        mine = []
        for _ in range(10):
            p = ad.adam_step(st, p, {"x": 2 * p["x"]})
            mine.append(float(p["x"][0]))
        m = v = 0.0
        x = 1.0
        hand = []
        for t in range(1, 11):
            g = 2 * x
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            x = x - 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
            hand.append(x)
        assert max(abs(a - b) for a, b in zip(mine, hand)) < 1e-12

    def test_shape_mismatch(self):
        st = ad.AdamState()
        with pytest.raises(ad.ShapeError):
            ad.adam_step(st, {"w": np.zeros(3)}, {"w": np.zeros(4)})
