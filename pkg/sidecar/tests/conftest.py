import pytest

from ftc_sidecar import InferenceService, SidecarConfig, SidecarServer
from ftc_sidecar.tiny import build_tiny_checkpoints


@pytest.fixture(scope="session")
def checkpoints(tmp_path_factory):
    return build_tiny_checkpoints(tmp_path_factory.mktemp("ckpt"), seed=0)


@pytest.fixture(scope="session")
def service(checkpoints):
    classifier_dir, generator_dir = checkpoints
    return InferenceService(
        SidecarConfig(classifier_model=str(classifier_dir),
                      generator_model=str(generator_dir)))


@pytest.fixture(scope="session")
def server(service):
    # Shares the service object so tests can read its instrumentation.
    with SidecarServer(service) as running:
        yield running
