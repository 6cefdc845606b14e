import numpy as np
import pytest
from hypothesis import settings

from skelfusion.geometry import RigidTransform, random_rotation
from skelfusion.skeleton import Confidence, Joint, JointId, Skeleton

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion (printed in the summary)."""

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        request.config.stash[_ACCEPTANCE].append(line)
        print(line)
        return passed

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_transform(rng, max_angle=None, scale=1.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng, max_angle), rng.uniform(-scale, scale, 3))


def make_skeleton(body_id, pelvis, conf=Confidence.HIGH, rng=None, axes=None) -> Skeleton:
    """A skeleton with every joint near ``pelvis`` (positions jittered when ``rng`` given)."""
    pelvis = np.asarray(pelvis, dtype=float)
    joints = []
    for k, jid in enumerate(JointId):
        offset = np.array([0.0, 0.0, 0.05 * k]) if rng is None else rng.normal(0, 0.3, 3)
        if jid is JointId.PELVIS:
            offset = np.zeros(3)
        a = np.eye(3) if axes is None else axes
        joints.append(Joint(jid, pelvis + offset, a, conf))
    return Skeleton(body_id, tuple(joints))


def pelvis_only(body_id, pelvis) -> Skeleton:
    return Skeleton(body_id, (Joint(JointId.PELVIS, np.asarray(pelvis, dtype=float), np.eye(3), Confidence.HIGH),))
