from __future__ import annotations

import socket

import pytest

from meshsim.scenario import build_simulation, load_default_scenario


@pytest.fixture
def free_tcp_port():
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture
def sim():
    return build_simulation(load_default_scenario())


@pytest.fixture
def cloned_sim(sim):
    sim.clone_staging()
    return sim
