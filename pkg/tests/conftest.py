import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tsekit import pipeline
from tsekit.scenes import two_speaker_scene

settings.register_profile('default', deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile('default')


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def scene():
    """Seeded reverberant 2-speaker session with exact activities."""
    return two_speaker_scene(0)


@pytest.fixture(scope='session')
def example_session(tmp_path_factory):
    """The bundled 3-speaker manifest rendered to audio."""
    manifest = pipeline.load_manifest(pipeline.EXAMPLE_MANIFEST)
    return pipeline.render_session(manifest, tmp_path_factory.mktemp('example'), seed=0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get('test_acceptance')
    lines = getattr(module, 'RESULTS', None)
    if lines:
        terminalreporter.section('acceptance criteria')
        for line in lines:
            terminalreporter.write_line(line)
