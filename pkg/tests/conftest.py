import pytest

from obmsnav.pipelines import inputs_from_simulation
from obmsnav.scenario import load_scenario, reference_scenario, simulate


@pytest.fixture(scope="session")
def short_path(request):
    return request.config.rootpath / "scenarios" / "short_block.yaml"


@pytest.fixture(scope="session")
def short_sim(short_path):
    return simulate(load_scenario(short_path))


@pytest.fixture(scope="session")
def reference_sim():
    return simulate(reference_scenario())


@pytest.fixture(scope="session")
def reference_inputs(reference_sim):
    return inputs_from_simulation(reference_sim)


@pytest.fixture(scope="session")
def reference_fixes(reference_inputs):
    return reference_inputs.fixes()
