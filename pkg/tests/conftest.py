import random

import pytest

from zkdpps.he import DEFAULT_HE_PARAMS, keygen


@pytest.fixture(scope="session")
def keys():
    return keygen(DEFAULT_HE_PARAMS, random.Random(2024), "round-t")


@pytest.fixture(scope="session")
def other_keys():
    return keygen(DEFAULT_HE_PARAMS, random.Random(7), "round-u")


@pytest.fixture
def hazmat_net():
    """Factory: a network running the hazard query with one job released at t=0."""
    from zkdpps.bus import TO_SUBSCRIBER
    from zkdpps.he import Plaintext
    from zkdpps.ppsm import Insight
    from zkdpps.scenarios import hazmat_insurance
    from zkdpps.system import CostModel, Network, SystemConfig

    def build(values=(5, 7, 10), release=True, **overrides):
        cfg = SystemConfig(costs=CostModel.zero(), **overrides)
        net = Network(cfg)
        scn = hazmat_insurance()
        net.add_query(scn.query())
        inbox: list[Insight] = []
        net.bus.subscribe("subscriber", TO_SUBSCRIBER, lambda env: inbox.append(Insight.from_bytes(env.body)))
        if release:
            m = net.he_params.plaintext_modulus
            for pub, v in zip(scn.publishers, values):
                net.publishers[pub].release(1, 0, Plaintext(v % m))
        return net, inbox

    return build
