"""
Shared fixtures: low-resolution glued scenarios
"""
import pytest

from cayley.gluing import build_scenario

SMALL_LINK = (4, 4, 4)


@pytest.fixture(scope="session")
def quadric_glued():
    """Quadric cone with the smoothing A_ε glued in at t = 0.02"""
    return build_scenario("quadric", 0.02, link_res=SMALL_LINK, radial_density=6)


@pytest.fixture(scope="session")
def cone_glued():
    """The cone glued to itself: exactly Cayley"""
    return build_scenario("cone", 0.02, link_res=SMALL_LINK, radial_density=6)


@pytest.fixture
def small_config(tmp_path):
    """Reduced-resolution key = value file for the CLI"""
    path = tmp_path / "small.conf"
    path.write_text(
        "# escenario reducido\n"
        "scenario = quadric\n"
        "link = 4, 4, 4\n"
        "radial_density = 6\n"
        "t = 0.02\n"
        "t_list = 0.08, 0.04, 0.02, 0.01\n",
        encoding="utf-8",
    )
    return path
