import numpy as np
import pytest

from edgebid.nets import (
    Adam,
    GradientBundle,
    MlpNet,
    gumbel_softmax,
    load_nets,
    net_from_doc,
    net_to_doc,
    save_nets,
    soft_update,
)


def rand_net(sizes, head="identity", seed=0, head_scale=1.0):
    return MlpNet(sizes, head=head, head_scale=head_scale, rng=np.random.default_rng(seed))


def scalar_loss(net, x, up):
    return float(np.sum(net.forward(x) * up))


def fd_grads(net, x, up, h=1e-5):
    """Central finite differences of sum(up * forward(x)) in every parameter."""
    d_ws, d_bs = [], []
    for w in net.weights:
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + h
            fp = scalar_loss(net, x, up)
            w[idx] = orig - h
            fm = scalar_loss(net, x, up)
            w[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
        d_ws.append(g)
    for b in net.biases:
        g = np.zeros_like(b)
        for idx in np.ndindex(b.shape):
            orig = b[idx]
            b[idx] = orig + h
            fp = scalar_loss(net, x, up)
            b[idx] = orig - h
            fm = scalar_loss(net, x, up)
            b[idx] = orig
            g[idx] = (fp - fm) / (2.0 * h)
        d_bs.append(g)
    d_x = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        d_x[idx] = (scalar_loss(net, xp, up) - scalar_loss(net, xm, up)) / (2.0 * h)
    return d_ws, d_bs, d_x


class TestForward:
    def test_zero_net_zero_output(self):
        net = MlpNet((4, 8, 2))
        assert np.array_equal(net.forward(np.ones(4)), np.zeros(2))

    def test_identity_layer_passes_input_through(self):
        net = MlpNet((3, 3))
        net.weights[0] = np.eye(3)
        x = np.array([0.3, -1.2, 2.0])
        assert np.array_equal(net.forward(x), x)

    def test_matches_independent_transcription(self):
        net = rand_net((4, 32, 32, 1), seed=5)
        x = np.random.default_rng(6).normal(size=4)
        a = x
        for w, b in zip(net.weights[:-1], net.biases[:-1]):
            a = np.maximum(w @ a + b, 0.0)
        want = net.weights[-1] @ a + net.biases[-1]
        assert np.allclose(net.forward(x), want, rtol=1e-12)

    def test_bounded_head_range_and_midpoint(self):
        net = MlpNet((3, 2), head="bounded", head_scale=1.5)
        assert np.allclose(net.forward(np.zeros(3)), 0.75)
        net = rand_net((3, 2), head="bounded", seed=1, head_scale=2.0)
        y = net.forward(np.random.default_rng(2).normal(size=(50, 3)))
        assert np.all((0.0 < y) & (y < 2.0))

    def test_softmax_head_rows_sum_to_one(self):
        net = rand_net((3, 4), head="softmax", seed=3)
        y = net.forward(np.random.default_rng(4).normal(size=(20, 3)))
        assert np.allclose(y.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(y > 0.0)

    def test_batch_matches_rowwise(self):
        net = rand_net((4, 6, 3), seed=7)
        xs = np.random.default_rng(8).normal(size=(5, 4))
        batch = net.forward(xs)
        for i in range(5):
            assert np.allclose(batch[i], net.forward(xs[i]))

    def test_dimension_mismatch_raises(self):
        net = MlpNet((4, 2))
        with pytest.raises(ValueError):
            net.forward(np.zeros(3))
        with pytest.raises(ValueError):
            net.forward(np.zeros((2, 2, 2)))

    def test_bad_construction_raises(self):
        with pytest.raises(ValueError):
            MlpNet((4,))
        with pytest.raises(ValueError):
            MlpNet((4, 0, 2))
        with pytest.raises(ValueError):
            MlpNet((4, 2), head="tanh")
        with pytest.raises(ValueError):
            MlpNet((4, 2), head="bounded", head_scale=0.0)


class TestBackward:
    @pytest.mark.parametrize("head", ["identity", "bounded", "softmax"])
    def test_finite_difference_agreement(self, head):
        rng = np.random.default_rng(17)
        for trial in range(34):
            net = rand_net((3, 5, 2), head=head, seed=100 + trial)
            x = rng.normal(size=3)
            up = rng.normal(size=2)
            got = net.backward(x, up)
            d_ws, d_bs, d_x = fd_grads(net, x, up)
            for an, fd in zip(got.weights, d_ws):
                assert np.allclose(an, fd, rtol=1e-4, atol=1e-7)
            for an, fd in zip(got.biases, d_bs):
                assert np.allclose(an, fd, rtol=1e-4, atol=1e-7)
            assert np.allclose(got.input, d_x, rtol=1e-4, atol=1e-7)

    def test_linear_net_input_grad_is_adjoint(self):
        net = rand_net((4, 3), seed=9)
        up = np.array([0.5, -1.0, 2.0])
        got = net.backward(np.random.default_rng(10).normal(size=4), up)
        assert np.allclose(got.input, net.weights[0].T @ up)

    def test_zero_upstream_zero_bundle(self):
        net = rand_net((3, 5, 2), seed=11)
        got = net.backward(np.ones(3), np.zeros(2))
        assert all(np.all(g == 0.0) for g in got.weights)
        assert all(np.all(g == 0.0) for g in got.biases)
        assert np.all(got.input == 0.0)

    def test_batch_grads_sum_over_rows(self):
        net = rand_net((3, 4, 2), seed=12)
        xs = np.random.default_rng(13).normal(size=(6, 3))
        ups = np.random.default_rng(14).normal(size=(6, 2))
        batch = net.backward(xs, ups)
        summed_w = [np.zeros_like(w) for w in net.weights]
        for i in range(6):
            row = net.backward(xs[i], ups[i])
            for acc, g in zip(summed_w, row.weights):
                acc += g
            assert np.allclose(batch.input[i], row.input)
        for a, b in zip(batch.weights, summed_w):
            assert np.allclose(a, b)

    def test_deterministic(self):
        net = rand_net((4, 6, 2), seed=15)
        x, up = np.ones(4), np.ones(2)
        a, b = net.backward(x, up), net.backward(x, up)
        for ga, gb in zip(a.weights, b.weights):
            assert np.array_equal(ga, gb)

    def test_preact_upstream_skips_head(self):
        net = rand_net((3, 2), head="softmax", seed=16)
        up = np.array([1.0, -1.0])
        got = net.backward(np.ones(3), up, at_preact=True)
        # with the head folded out this is just the affine layer's adjoint
        assert np.allclose(got.weights[0], np.outer(up, np.ones(3)))


class TestAdam:
    def test_hand_value_at_first_step(self):
        net = MlpNet((1, 1))
        opt = Adam(net, lr=1e-3)
        grads = GradientBundle(weights=[np.ones((1, 1))], biases=[np.zeros(1)], input=np.zeros(1))
        opt.step(net, grads)
        assert net.weights[0][0, 0] == pytest.approx(-1e-3 / (1.0 + 1e-8), rel=1e-12)
        assert net.biases[0][0] == 0.0

    def test_zero_gradient_leaves_params(self):
        net = rand_net((2, 3), seed=20)
        before = [w.copy() for w in net.weights]
        opt = Adam(net, lr=1e-3)
        zero = GradientBundle(
            weights=[np.zeros_like(w) for w in net.weights],
            biases=[np.zeros_like(b) for b in net.biases],
            input=None,
        )
        opt.step(net, zero)
        for w, w0 in zip(net.weights, before):
            assert np.array_equal(w, w0)

    def test_zero_lr_leaves_params(self):
        net = rand_net((2, 3), seed=21)
        before = [w.copy() for w in net.weights]
        opt = Adam(net, lr=0.0)
        grads = net.backward(np.ones(2), np.ones(3))
        opt.step(net, grads)
        for w, w0 in zip(net.weights, before):
            assert np.array_equal(w, w0)

    def test_negative_lr_raises(self):
        with pytest.raises(ValueError):
            Adam(MlpNet((1, 1)), lr=-1e-3)

    def test_nonfinite_gradient_raises(self):
        net = MlpNet((1, 1))
        opt = Adam(net)
        bad = GradientBundle(weights=[np.array([[np.nan]])], biases=[np.zeros(1)], input=None)
        with pytest.raises(ValueError):
            opt.step(net, bad)

    def test_quadratic_descent_monotone(self):
        # fit f(1) = 3 with a scalar affine net; loss is convex in the params
        net = MlpNet((1, 1))
        opt = Adam(net, lr=1e-3)
        x, target = np.ones(1), 3.0
        losses = []
        for _ in range(100):
            y = float(net.forward(x)[0])
            losses.append((y - target) ** 2)
            grads = net.backward(x, np.array([2.0 * (y - target)]))
            opt.step(net, grads)
        assert all(a > b for a, b in zip(losses, losses[1:]))


class TestSoftUpdate:
    def test_tau_one_copies_online(self):
        t, o = MlpNet((2, 3)), rand_net((2, 3), seed=30)
        soft_update(t, o, 1.0)
        for tw, ow in zip(t.weights, o.weights):
            assert np.array_equal(tw, ow)

    def test_convex_combination_value(self):
        t, o = MlpNet((1, 1)), MlpNet((1, 1))
        o.weights[0][0, 0] = 1.0
        soft_update(t, o, 0.01)
        assert t.weights[0][0, 0] == pytest.approx(0.01)

    def test_linearity_on_random_nets(self):
        t, o = rand_net((3, 4), seed=31), rand_net((3, 4), seed=32)
        want = [0.9 * tw + 0.1 * ow for tw, ow in zip(t.weights, o.weights)]
        soft_update(t, o, 0.1)
        for tw, w in zip(t.weights, want):
            assert np.allclose(tw, w, rtol=1e-14)

    def test_geometric_convergence(self):
        t, o = MlpNet((1, 1)), MlpNet((1, 1))
        o.weights[0][0, 0] = 1.0
        errs = []
        for _ in range(50):
            soft_update(t, o, 0.01)
            errs.append(abs(t.weights[0][0, 0] - 1.0))
        for a, b in zip(errs, errs[1:]):
            assert b == pytest.approx(0.99 * a, rel=1e-9)

    def test_bad_tau_raises(self):
        t, o = MlpNet((1, 1)), MlpNet((1, 1))
        with pytest.raises(ValueError):
            soft_update(t, o, 0.0)
        with pytest.raises(ValueError):
            soft_update(t, o, 1.5)

    def test_architecture_mismatch_raises(self):
        with pytest.raises(ValueError):
            soft_update(MlpNet((1, 2)), MlpNet((1, 3)), 0.5)


class TestGumbelSoftmax:
    def test_rows_are_distributions(self):
        rng = np.random.default_rng(40)
        y = gumbel_softmax(np.tile([0.5, -0.5, 0.0], (100, 1)), 0.7, rng)
        assert np.allclose(y.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(y > 0.0)

    @pytest.mark.parametrize("tau", [0.3, 1.0])
    def test_argmax_frequency_matches_softmax(self, tau):
        logits = np.array([1.0, 0.0, -1.0, 0.5])
        p = np.exp(logits) / np.exp(logits).sum()
        rng = np.random.default_rng(41)
        draws = gumbel_softmax(np.tile(logits, (100_000, 1)), tau, rng)
        winners = np.argmax(draws, axis=1)
        freq = np.bincount(winners, minlength=4) / len(winners)
        assert 0.5 * np.abs(freq - p).sum() < 0.02

    def test_small_tau_one_hot(self):
        rng = np.random.default_rng(42)
        y = gumbel_softmax(np.array([0.3, 0.1, -0.2]), 1e-4, rng)
        assert y.max() > 0.999

    def test_large_tau_uniform(self):
        rng = np.random.default_rng(43)
        y = gumbel_softmax(np.zeros(4), 1e4, rng)
        assert np.allclose(y, 0.25, atol=1e-3)

    def test_nonpositive_tau_raises(self):
        with pytest.raises(ValueError):
            gumbel_softmax(np.zeros(3), 0.0, np.random.default_rng(0))

    def test_same_stream_same_draw(self):
        a = gumbel_softmax(np.array([1.0, 2.0]), 0.5, np.random.default_rng(7))
        b = gumbel_softmax(np.array([1.0, 2.0]), 0.5, np.random.default_rng(7))
        assert np.array_equal(a, b)


class TestSerialization:
    def test_round_trip_preserves_outputs(self, tmp_path):
        path = tmp_path / "nets.json"
        actor = rand_net((4, 8, 3), head="softmax", seed=50)
        critic = rand_net((6, 8, 1), seed=51, head_scale=1.0)
        save_nets(path, {"actor": actor, "critic": critic}, extra={"note": 1})
        loaded, extra = load_nets(path)
        assert extra == {"note": 1}
        x4, x6 = np.ones(4), np.ones(6)
        assert np.array_equal(loaded["actor"].forward(x4), actor.forward(x4))
        assert np.array_equal(loaded["critic"].forward(x6), critic.forward(x6))

    def test_version_mismatch_raises(self, tmp_path):
        path = tmp_path / "nets.json"
        save_nets(path, {"n": MlpNet((1, 1))})
        doc = path.read_text().replace('"version": 1', '"version": 99')
        path.write_text(doc)
        with pytest.raises(ValueError):
            load_nets(path)

    def test_doc_shape_mismatch_raises(self):
        doc = net_to_doc(rand_net((2, 3), seed=52))
        doc["weights"][0] = [[1.0, 2.0]]
        with pytest.raises(ValueError):
            net_from_doc(doc)
