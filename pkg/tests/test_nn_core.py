import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medianfit import _pykernels as ref
from medianfit.errors import ConfigError, DataError
from medianfit.nn_core import (
    ACTIVATIONS,
    OPTIMIZERS,
    NetworkConfig,
    NetworkModel,
    TrainingSchedule,
    activation,
    activation_derivative,
    backward,
    dropout_keep,
    dropout_masks,
    forward,
    hidden_outputs,
    init_network,
    init_optimizer_state,
    load_model,
    loss_regularised_mae,
    optimizer_step,
    save_model,
    train,
)


def net(layers=(3,), act="relu", **kw):
    return NetworkConfig(len(layers), layers, act, **kw)


# ---------------------------------------------------------------- config/init

@pytest.mark.parametrize("kw", [
    dict(hidden_layers=0, neurons_per_layer=()),
    dict(hidden_layers=5, neurons_per_layer=(1,) * 5),
    dict(hidden_layers=1, neurons_per_layer=(1001,)),
    dict(hidden_layers=2, neurons_per_layer=(3,)),
    dict(hidden_layers=1, neurons_per_layer=(3,), activation="gelu"),
    dict(hidden_layers=1, neurons_per_layer=(3,), optimizer="lbfgs"),
    dict(hidden_layers=1, neurons_per_layer=(3,), l1_rate=0.5),
    dict(hidden_layers=1, neurons_per_layer=(3,), dropout_rate=0.9),
])
def test_config_rejects_out_of_space(kw):
    with pytest.raises(ConfigError):
        NetworkConfig(**kw)


def test_init_shapes_and_spread():
    cfg = net((3,))
    m = init_network(cfg, 42)
    assert [w.shape for w in m.weights] == [(5, 3), (3, 1)]
    assert all((b == 0).all() for b in m.biases)
    draws = np.concatenate([np.concatenate([w.ravel() for w in init_network(cfg, s).weights])
                            for s in range(60)])
    assert draws.size >= 1000
    assert 0.05 <= draws.std() <= 0.15


def test_init_deterministic_per_seed():
    cfg = net((4, 4))
    assert np.array_equal(init_network(cfg, 42).params, init_network(cfg, 42).params)
    assert not np.array_equal(init_network(cfg, 42).params, init_network(cfg, 43).params)


# ---------------------------------------------------------------- forward

def test_zero_network_outputs_zero():
    m = init_network(net((4, 2), "sigmoid"), 0)
    m.params[:] = 0
    assert np.array_equal(forward(m, np.random.default_rng(0).random((7, 5))), np.zeros(7))


def test_forward_hand_evaluation():
    cfg = NetworkConfig(1, (1,), "relu", input_dim=2)
    m = init_network(cfg, 0)
    m.params[:] = [1, 1, 0, 2, 0]  # W1 (2x1), b1, W2 (1x1), b2
    assert forward(m, [[0.5, 0.25]])[0] == pytest.approx(1.5, abs=1e-15)


def test_softmax_layer_sums_to_one():
    m = init_network(net((6, 4), "softmax"), 3)
    for h in hidden_outputs(m, np.random.default_rng(1).normal(size=(20, 5))):
        assert np.abs(h.sum(axis=1) - 1).max() < 1e-12


def test_forward_rejects_bad_inputs():
    m = init_network(net(), 0)
    with pytest.raises(DataError):
        forward(m, [[1, 2, np.nan, 4, 5]])
    with pytest.raises(DataError):
        forward(m, [[1, 2, 3]])


def test_no_dropout_train_mode_is_identity():
    m = init_network(net((8, 8), "tanh"), 5)
    X = np.random.default_rng(2).random((10, 5))
    assert np.array_equal(forward(m, X, train_mode=True, dropout_mask_seed=9), forward(m, X))


@pytest.mark.parametrize("p", [0.25, 0.5])
def test_dropout_expectation(p):
    cfg = net((40,), dropout_rate=p)
    masks = dropout_masks(np.random.default_rng(0), 10_000, cfg)
    h = np.linspace(0.5, 1.5, 40)
    mean = (masks * h).mean(axis=0)
    # per-column relative error has sd sqrt(p / ((1 - p) n))
    assert np.abs(mean / h - 1).max() < 5 * math.sqrt(p / ((1 - p) * 10_000))


@pytest.mark.parametrize("p", [0.004, 0.3, float(np.nextafter(0.9, 0))])
def test_dropout_keep_rate_and_determinism(p):
    cfg = net((50, 30), dropout_rate=p)
    keep = dropout_keep(np.random.default_rng(4), 20_000, cfg)
    assert keep.dtype == np.uint8 and keep.shape == (20_000, 80)
    assert set(np.unique(keep)) <= {0, 1}
    sd = math.sqrt(p * (1 - p) / keep.size)
    assert abs((1 - keep.mean()) - p) < 5 * sd
    assert np.array_equal(keep, dropout_keep(np.random.default_rng(4), 20_000, cfg))
    assert dropout_keep(np.random.default_rng(4), 5, net((3,))) is None


# ---------------------------------------------------------------- activations

def test_activation_closed_forms():
    assert activation("sigmoid", 0.0) == 0.5
    assert activation("relu", -1.0) == 0.0
    assert activation("softsign", 1.0) == 0.5
    assert activation("softplus", 0.0) == pytest.approx(math.log(2), abs=1e-15)
    assert activation("selu", 1.0) == pytest.approx(1.0507009873554805)
    assert activation("elu", -1.0) == pytest.approx(math.exp(-1) - 1)


@pytest.mark.parametrize("kind", [k for k in ACTIVATIONS if k != "softmax"])
def test_activation_derivative_finite_difference(kind):
    xs = np.array([-2.0, -0.5, 0.3, 1.7])
    h = 1e-5
    fd = (activation(kind, xs + h) - activation(kind, xs - h)) / (2 * h)
    an = activation_derivative(kind, xs)
    assert np.allclose(an, fd, rtol=1e-6, atol=1e-9)


def test_softmax_derivative_is_jacobian_diagonal():
    x = np.array([[-2.0, -0.5, 0.3, 1.7]])
    h = 1e-5
    diag = []
    for i in range(4):
        e = np.zeros_like(x)
        e[0, i] = h
        diag.append((activation("softmax", x + e)[0, i] - activation("softmax", x - e)[0, i]) / (2 * h))
    assert np.allclose(activation_derivative("softmax", x)[0], diag, rtol=1e-6)


# ---------------------------------------------------------------- loss

def test_loss_examples():
    assert loss_regularised_mae([0.1, 0.2], [0.1, 0.2]) == 0
    assert loss_regularised_mae([0.5], [0.3]) == pytest.approx(0.2, abs=1e-15)
    assert loss_regularised_mae([1.0], [1.0], [np.array([1.0, -2.0])], 0.01, 0.001) == pytest.approx(0.035, abs=1e-15)
    with pytest.raises(DataError):
        loss_regularised_mae([], [])


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30))
def test_loss_without_regularisation_is_mae(vals):
    p = np.array(vals)
    y = p[::-1].copy()
    assert loss_regularised_mae(p, y, [np.ones(3)], 0.0, 0.0) == np.abs(y - p).mean()


# ---------------------------------------------------------------- gradients

GRAD_ARCHS = [(3,), (4, 3), (2, 5, 3)]


def _numeric_grad(cfg, params, X, y, h=1e-6):
    g = np.empty_like(params)
    for i in range(params.size):
        p = params.copy()
        p[i] += h
        fp, _ = ref.loss_and_grad(p, cfg.sizes, X, y, ACTIVATIONS.index(cfg.activation), None,
                                  cfg.l1_rate, cfg.l2_rate)
        p[i] -= 2 * h
        fm, _ = ref.loss_and_grad(p, cfg.sizes, X, y, ACTIVATIONS.index(cfg.activation), None,
                                  cfg.l1_rate, cfg.l2_rate)
        g[i] = (fp - fm) / (2 * h)
    return g


def _away_from_kinks(model, X, y, margin=1e-3):
    """True if no preactivation or residual sits within ``margin`` of a kink."""
    cfg = model.config
    out, _, pres = ref.forward_cache(model.params, cfg.sizes, X, ACTIVATIONS.index(cfg.activation))
    if np.abs(out.ravel() - y.ravel()).min() < margin:
        return False
    if cfg.activation in ("relu", "elu", "selu"):
        return all(np.abs(z).min() >= margin for z, _ in pres)
    return True


@pytest.mark.parametrize("arch", GRAD_ARCHS)
@pytest.mark.parametrize("kind", ACTIVATIONS)
def test_gradient_matches_finite_difference(kind, arch):
    rng = np.random.default_rng([ACTIVATIONS.index(kind), GRAD_ARCHS.index(arch)])
    cfg = NetworkConfig(len(arch), arch, kind, l1_rate=1e-3, l2_rate=1e-2, input_dim=3)
    for attempt in range(50):
        model = init_network(cfg, int(rng.integers(1 << 30)))
        model.params = rng.normal(0, 0.7, model.params.size)
        X = rng.normal(size=(6, 3))
        y = rng.normal(size=6)
        if _away_from_kinks(model, X, y) and (model.weights[0] != 0).all():
            break
    else:
        pytest.fail("could not draw a kink-free configuration")
    an = backward(model, X, y)
    fd = _numeric_grad(cfg, model.params, X, y.reshape(-1, 1))
    assert np.allclose(an, fd, rtol=1e-4, atol=1e-7)


def test_gradient_zero_at_perfect_fit():
    cfg = net((4,), "tanh")
    m = init_network(cfg, 1)
    X = np.random.default_rng(0).random((8, 5))
    # targets from the same arithmetic backward uses, so residuals are exactly 0
    y = ref.predict(m.params, cfg.sizes, X, ACTIVATIONS.index("tanh"))
    assert not backward(m, X, y).any()


def test_l2_gradient_linear_in_rate():
    X = np.random.default_rng(0).random((8, 5))
    base = init_network(net((4,), "tanh"), 1)
    y = ref.predict(base.params, base.config.sizes, X, ACTIVATIONS.index("tanh"))
    g1 = backward(NetworkModel(net((4,), "tanh", l2_rate=1e-3), 1, base.params), X, y)
    g2 = backward(NetworkModel(net((4,), "tanh", l2_rate=1e-2), 1, base.params), X, y)
    # data term is zero at a perfect fit so the gradient is the l2 term alone
    assert np.allclose(g2, 10 * g1, rtol=1e-12)


# ---------------------------------------------------------------- optimizers
# Independent scalar transcriptions of each update rule, two steps each.

def _oracle(kind, grads, p0=1.0):
    lr = {"sgd": 0.01, "adagrad": 0.01, "adadelta": 1.0}.get(kind, 0.001)
    b1, b2, eps, p = 0.9, 0.999, 1e-7, p0
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        if kind == "sgd":
            p -= lr * g
        elif kind == "adam":
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        elif kind == "nadam":
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = b1 * (m / (1 - b1 ** t)) + (1 - b1) * g / (1 - b1 ** t)
            p -= lr * mhat / (math.sqrt(v / (1 - b2 ** t)) + eps)
        elif kind == "rmsprop":
            v = 0.9 * v + 0.1 * g * g
            p -= lr * g / (math.sqrt(v) + eps)
        elif kind == "adagrad":
            v += g * g
            p -= lr * g / math.sqrt(v + eps)
        elif kind == "adadelta":
            v = 0.95 * v + 0.05 * g * g
            dx = math.sqrt(m + eps) / math.sqrt(v + eps) * g
            m = 0.95 * m + 0.05 * dx * dx
            p -= lr * dx
        elif kind == "adamax":
            m = b1 * m + (1 - b1) * g
            v = max(b2 * v, abs(g))
            p -= lr / (1 - b1 ** t) * m / (v + eps)
    return p


@pytest.mark.parametrize("kind", OPTIMIZERS)
def test_optimizer_matches_hand_calculation(kind, backend):
    grads = [0.2, -0.35]
    p = np.array([1.0])
    state = init_optimizer_state(1)
    for t, g in enumerate(grads, start=1):
        optimizer_step(kind, state, p, np.array([g]), t)
    assert abs(p[0] - _oracle(kind, grads)) < 1e-10


def test_optimizer_published_examples():
    p, s = np.array([1.0]), init_optimizer_state(1)
    optimizer_step("sgd", s, p, np.array([0.5]), 1, learning_rate=0.1)
    assert p[0] == pytest.approx(0.95, abs=1e-15)

    p, s = np.array([0.0]), init_optimizer_state(1)
    optimizer_step("adam", s, p, np.array([0.2]), 1)
    assert p[0] == pytest.approx(-0.001 * 0.2 / (0.2 + 1e-7), abs=1e-10)

    p, s = np.array([0.0]), init_optimizer_state(1)
    optimizer_step("adagrad", s, p, np.array([1.0]), 1)
    before = p[0]
    optimizer_step("adagrad", s, p, np.array([1.0]), 2)
    assert p[0] - before == pytest.approx(-0.01 / math.sqrt(2 + 1e-7), abs=1e-10)
    assert p[0] - before == pytest.approx(-0.007071, abs=1e-6)


def test_optimizer_state_shape_checked():
    with pytest.raises(ValueError):
        optimizer_step("adam", np.zeros((2, 3)), np.zeros(4), np.zeros(4), 1)


# ---------------------------------------------------------------- training

def _toy(n=400, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 5))
    y = 0.2 + X[:, 0] ** 3 + 0.1 * X[:, 1]
    return X, y


def test_single_epoch_cap(backend):
    X, y = _toy()
    _, hist = train(init_network(net((8,)), 0), (X, y), (X, y), TrainingSchedule(max_epochs=1))
    assert hist.epochs_run == 1 and len(hist.val_loss) == 1


def test_patience_trace_with_stub_evaluator():
    X, y = _toy(100)
    seq = [3, 2, 2, 2, 2, 2, 2, 2, 2, 2]
    _, hist = train(init_network(net(), 0), (X, y), (X, y), TrainingSchedule(max_epochs=10),
                    evaluator=lambda model, epoch: seq[epoch - 1])
    assert hist.epochs_run == 7
    assert hist.best_epoch == 2


def test_restores_best_parameters():
    X, y = _toy(100)
    snapshots = {}

    def ev(model, epoch):
        snapshots[epoch] = model.params.copy()
        return [5, 1, 4, 4, 4, 4, 4][epoch - 1]

    model, hist = train(init_network(net(), 0), (X, y), (X, y), TrainingSchedule(max_epochs=7),
                        evaluator=ev)
    assert hist.best_epoch == 2
    assert np.array_equal(model.params, snapshots[2])


def test_training_reduces_error_and_is_deterministic(backend):
    X, y = _toy()
    sched = TrainingSchedule(max_epochs=15, patience=15, batch_size=32)
    cfg = net((16,), "tanh", optimizer="adam", dropout_rate=0.1)
    m1, h1 = train(init_network(cfg, 7), (X, y), (X, y), sched)
    m2, _ = train(init_network(cfg, 7), (X, y), (X, y), sched)
    assert np.array_equal(m1.params, m2.params)
    assert h1.val_loss[-1] < h1.val_loss[0]
    assert h1.epochs_run <= h1.best_epoch + sched.patience


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=20), st.integers(1, 6))
def test_early_stopping_bound(vals, patience):
    X, y = _toy(40)
    _, hist = train(init_network(net((2,)), 0), (X, y), (X, y),
                    TrainingSchedule(max_epochs=len(vals), patience=patience),
                    evaluator=lambda model, epoch: vals[epoch - 1])
    assert hist.epochs_run <= len(vals)
    assert hist.val_loss[hist.best_epoch - 1] == min(hist.val_loss)
    if hist.epochs_run < len(vals):
        assert hist.epochs_run == hist.best_epoch + patience


def test_divergence_flagged():
    X, y = _toy(100)
    X = X * 1e200
    cfg = net((4,), "relu", optimizer="sgd")
    _, hist = train(init_network(cfg, 0), (X, y), (X, y),
                    TrainingSchedule(max_epochs=5, learning_rate=1e200))
    assert hist.diverged


def test_empty_sets_rejected():
    X, y = _toy(10)
    with pytest.raises(DataError):
        train(init_network(net(), 0), (X[:0], y[:0]), (X, y), TrainingSchedule())


# ---------------------------------------------------------------- persistence

def test_model_round_trip(tmp_path):
    m = init_network(net((7, 3), "selu", optimizer="nadam", l1_rate=1e-4, dropout_rate=0.3), 11)
    m.params += 0.123456789
    back = load_model(save_model(m, tmp_path / "m.npz"))
    assert back.config == m.config and back.seed == m.seed
    assert np.array_equal(back.params, m.params)


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, meta=np.array('{"format": "other", "version": 1}'), params=np.zeros(3))
    with pytest.raises(DataError):
        load_model(path)
