import numpy as np
import pytest

import oamsort as om

PAIRS = (("pa", "pb"), ("pa", "pc"), ("pb", "pc"))


@pytest.fixture(scope="session")
def params300():
    return om.electron_params(300.0)


@pytest.fixture(scope="session")
def grid512():
    return om.GridSpec(512, 180.0)


@pytest.fixture(scope="session")
def grid256():
    return om.GridSpec(256, 180.0)


@pytest.fixture(scope="session")
def probe512(grid512):
    return om.plane_wave_probe(grid512)


@pytest.fixture(scope="session")
def probe256(grid256):
    return om.plane_wave_probe(grid256)


@pytest.fixture(scope="session")
def phantoms512(grid512):
    return om.phantom_presets(grid512)


@pytest.fixture(scope="session")
def fields512(probe512, phantoms512, params300):
    return {name: om.interact(probe512, spec, params300) for name, spec in phantoms512.items()}


@pytest.fixture(scope="session")
def decs512(fields512):
    return {name: om.oam_decompose(field) for name, field in fields512.items()}


@pytest.fixture(scope="session")
def analyses512(phantoms512, params300):
    out = {}
    for pair in PAIRS:
        out[pair] = om.analyze_pair(
            phantoms512[pair[0]],
            phantoms512[pair[1]],
            params=params300,
            label=f"{pair[0]},{pair[1]}",
        )
    return out


@pytest.fixture(scope="session")
def fields256(probe256, grid256, params300):
    presets = om.phantom_presets(grid256)
    return {name: om.interact(probe256, spec, params300) for name, spec in presets.items()}


@pytest.fixture(scope="session")
def decs256(fields256):
    return {name: om.oam_decompose(field) for name, field in fields256.items()}


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
