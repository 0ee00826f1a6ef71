import numpy as np
import pytest

from hetnet_bps.scenario import (MACRO, MICRO, BaseStation, CarrierSpec, Scenario, ScenarioConfig,
                                 Tile, build_scenario, toy_scenario)

ONE_CARRIER = (CarrierSpec(0, 2.0e9, 10e6),)


def hand_scenario(gains, ues=(3, 1, 2), carriers=ONE_CARRIER):
    """Two teams: {macro 0 (20 W), micro 1 (1 W)} and {macro 2 (20 W)}.

    Tile ``z`` is served by BS ``z``; ``gains[b][z]`` is the linear gain on every carrier.
    """
    stations = [
        BaseStation(0, MACRO, (0.0, 0.0), 20.0, 0),
        BaseStation(1, MICRO, (100.0, 0.0), 1.0, 0),
        BaseStation(2, MACRO, (500.0, 0.0), 20.0, 1),
    ]
    tiles = [Tile(z, (float(z), 0.0), ues[z], z) for z in range(3)]
    a = np.repeat(np.asarray(gains, dtype=float)[:, :, None], len(carriers), axis=2)
    return Scenario.assemble(stations, tiles, carriers, attenuation=a)


HAND_GAINS = [
    [1e-8, 1e-9, 1e-10],
    [1e-10, 1e-7, 1e-11],
    [1e-11, 1e-10, 1e-8],
]


@pytest.fixture
def hand():
    return hand_scenario(HAND_GAINS)


@pytest.fixture(scope="session")
def toy():
    return toy_scenario(3)


@pytest.fixture(scope="session")
def toy2():
    from hetnet_bps.scenario import DEFAULT_CARRIERS
    return toy_scenario(4, carriers=DEFAULT_CARRIERS[:2])


@pytest.fixture(scope="session")
def small():
    return build_scenario(ScenarioConfig(max_teams=3))


@pytest.fixture(scope="session")
def seven():
    return build_scenario(ScenarioConfig(max_teams=7))


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
