import numpy as np
import pytest

from nnetm.etm import FUZZY, TriggerPolicy
from nnetm.fuzzy import backward, fuzzy_rollout, tape_features
from nnetm.graph import complete_graph, path_graph
from nnetm.neural import Mlp, flatten
from nnetm.protocols import SLIDING, ProtocolConfig, simulate
from nnetm.signals import generate_sinusoid_batch

from oracles import fuzzy_sequence, mlp_scalar


@pytest.fixture
def tiny():
    return generate_sinusoid_batch(2, 3, horizon=0.06, step=1e-3, seed=5)


def objective(ro, zw, nw, ew, target=0.5):
    z = ro.tape.z
    x = z - z.mean(axis=2, keepdims=True)
    return float(np.sum(zw * np.sum(x * x, axis=(0, 2)))
                 + np.sum(nw * ro.tape.nu[1:].sum(axis=(0, 2)))
                 + np.sum(ew * np.sum((ro.tape.eta[1:] - target) ** 2, axis=(0, 2))))


@pytest.mark.parametrize("engine", ["compiled", "numpy"])
def test_rollout_matches_loop_oracle(tiny, random_net, engine):
    g = path_graph(3)
    pol = TriggerPolicy(0.1, 1e-3, FUZZY, 100.0, network=random_net)
    ro = fuzzy_rollout(tiny, g, ProtocolConfig(), pol, engine=engine)
    for b in range(2):
        z, nu, held, eta = fuzzy_sequence(tiny.values[b, :, 0], tiny.derivatives[b], g, 5.0,
                                          1e-3, 0.1, 1e-3, 100.0,
                                          lambda f: mlp_scalar(random_net, f))
        seq = ro.sequence(b)
        np.testing.assert_allclose(seq.states, z, atol=1e-12)
        np.testing.assert_allclose(seq.event_weights, nu, atol=1e-12)
        np.testing.assert_allclose(seq.broadcasts, held, atol=1e-12)
        np.testing.assert_allclose(seq.eta_trace, eta, atol=1e-12)


def test_engines_agree(random_net):
    sig = generate_sinusoid_batch(3, 4, horizon=0.5, seed=8)
    g = complete_graph(4)
    pol = TriggerPolicy(0.1, 1e-3, FUZZY, 100.0, network=random_net)
    a = fuzzy_rollout(sig, g, ProtocolConfig(), pol, engine="compiled")
    b = fuzzy_rollout(sig, g, ProtocolConfig(), pol, engine="numpy")
    np.testing.assert_allclose(a.states, b.states, atol=1e-12)
    np.testing.assert_allclose(a.nu, b.nu, atol=1e-12)
    np.testing.assert_allclose(a.eta, b.eta, atol=1e-12)
    w = dict(z_weight=[0.3, 1.0, 2.0], nu_weight=0.01, eta_weight=[0.0, 0.1, 0.2])
    ga = flatten(backward(a, random_net, **w))
    gb = flatten(backward(b, random_net, **w))
    np.testing.assert_allclose(ga, gb, rtol=1e-9, atol=1e-12 * np.abs(gb).max())


@pytest.mark.parametrize("engine", ["compiled", "numpy"])
def test_gradient_finite_differences(tiny, engine):
    net = Mlp.initialize(seed=1)
    g = path_graph(3)
    proto = ProtocolConfig()
    zw, nw, ew = np.array([0.7, 0.4]), 0.3, 0.2

    def cost(theta):
        n = net.copy()
        n.set_flat(theta)
        pol = TriggerPolicy(0.1, 1e-3, FUZZY, 100.0, network=n)
        return objective(fuzzy_rollout(tiny, g, proto, pol, engine=engine), zw, nw, ew)

    pol = TriggerPolicy(0.1, 1e-3, FUZZY, 100.0, network=net)
    grad = flatten(backward(fuzzy_rollout(tiny, g, proto, pol, engine=engine), net,
                            z_weight=zw, nu_weight=nw, eta_weight=ew))
    theta = net.get_flat()
    for idx in np.random.default_rng(0).choice(theta.size, 15, replace=False):
        d = np.zeros_like(theta)
        d[idx] = 1e-5
        fd = (cost(theta + d) - cost(theta - d)) / 2e-5
        assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_sigma_zero_gives_zero_gradient(tiny, random_net):
    pol = TriggerPolicy(0.0, 1e-2, FUZZY, 100.0, network=random_net)
    ro = fuzzy_rollout(tiny, path_graph(3), ProtocolConfig(), pol)
    grads = backward(ro, random_net, z_weight=1.0, nu_weight=1.0)
    assert all(np.all(g == 0.0) for g in grads)


def test_fixed_eta_rollout_and_features(tiny, random_net):
    g = path_graph(3)
    ro = fuzzy_rollout(tiny, g, ProtocolConfig(), TriggerPolicy(mode=FUZZY, eta_fixed=0.25))
    np.testing.assert_array_equal(ro.eta, 0.25)
    np.testing.assert_array_equal(ro.nu[:, 0], 1.0)
    with pytest.raises(ValueError):
        backward(ro, random_net, z_weight=1.0)
    pol = TriggerPolicy(mode=FUZZY, network=random_net)
    ro = fuzzy_rollout(tiny, g, ProtocolConfig(), pol)
    feats = tape_features(ro.tape)
    np.testing.assert_allclose(random_net.forward(feats.reshape(-1, 2)),
                               ro.tape.eta.reshape(-1), atol=1e-12)


def test_large_alpha_matches_hard(random_net):
    sig = generate_sinusoid_batch(2, 2, horizon=1.0, seed=2)
    g = path_graph(2)
    pol = TriggerPolicy(0.1, 1e-3, FUZZY, 1e6, eta_fixed=0.5)
    fz = fuzzy_rollout(sig, g, ProtocolConfig(), pol)
    hd = simulate(sig, g, ProtocolConfig(), pol.with_mode("hard"))
    np.testing.assert_allclose(fz.states, hd.states, atol=1e-9)


def test_stale_tape_rejected(tiny, random_net):
    pol = TriggerPolicy(mode=FUZZY, network=random_net)
    ro = fuzzy_rollout(tiny, path_graph(3), ProtocolConfig(), pol)
    random_net.set_flat(random_net.get_flat())
    with pytest.raises(ValueError, match="parameter version"):
        backward(ro, random_net, z_weight=1.0)


def test_rollout_validation(tiny):
    pol = TriggerPolicy(mode=FUZZY)
    with pytest.raises(ValueError):
        fuzzy_rollout(tiny, path_graph(3), ProtocolConfig(SLIDING), pol)
    with pytest.raises(ValueError):
        fuzzy_rollout(tiny, path_graph(2), ProtocolConfig(), pol)
    with pytest.raises(ValueError):
        fuzzy_rollout(tiny, path_graph(3), ProtocolConfig(), pol, engine="gpu")
