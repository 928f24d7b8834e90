import numpy as np
import pytest

from glifnet.models.network import SharingScheme
from glifnet.models.neuron import NeuronGroupConfig, NeuronMode
from glifnet.models.training import InitTable
from glifnet.services.network import empty_network
from glifnet.services.neuron import logit
from glifnet.services.trainer import build_network


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_cfg():
    """Single-group config builder with init-table defaults."""

    def _make(alpha=0.5, beta=0.5, gamma=0.5, tau_lin=0.0625, tau_exp=0.25, v_re=0.5, v_th=0.5, g=0.5,
              time_steps=4):
        return NeuronGroupConfig.scalar(alpha, beta, gamma, tau_lin, tau_exp, v_re, v_th, g, time_steps=time_steps)

    return _make


@pytest.fixture
def make_net():
    """
    Network whose neuron parameters resolve to the given values in every group.

    ``weights`` is a list of matrices, one per layer.
    """

    def _make(weights, time_steps, mode=None, sharing=SharingScheme.CHANNEL_WISE, **values):
        resolved = dict(alpha=0.5, beta=0.5, gamma=0.5, tau_lin=0.0625, tau_exp=0.25, v_re=0.5, v_th=0.5, g=0.5)
        resolved.update(values)
        dims = [np.shape(weights[0])[1]] + [np.shape(w)[0] for w in weights]
        net = empty_network(dims, time_steps, sharing, mode or NeuronMode())
        arrays = []
        for layer, w in zip(net.layers, weights):
            layer_arrays = {"weights": np.array(w, dtype=np.float64)}
            for name, value in layer.neuron_params.arrays().items():
                layer_arrays[name] = np.full(value.shape, logit(resolved[name[len("raw_"):]]))
            arrays.append(layer_arrays)
        return net.with_arrays(arrays)

    return _make


@pytest.fixture
def small_net(rng):
    return build_network([3, 4, 2], 5, SharingScheme.CHANNEL_WISE, NeuronMode(), InitTable(), rng)
