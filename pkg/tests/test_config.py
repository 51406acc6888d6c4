from importlib import resources

import pytest

from ricciheat.config import ConfigError, apply_override, load_config, parse_config
from ricciheat.geometry import ConformalPlaneFlow, FlatEuclidean

GOOD = """\
kind = "green"
seed = 3

[geometry]
model = "flat"
radius = 4.5
resolution = 16
layout = "planar"

[suite]
ks = [1, 2, 3]
"""


def test_parse_good_config():
    cfg = parse_config(GOOD)
    assert cfg.kind == "green" and cfg.seed == 3
    assert isinstance(cfg.model(), FlatEuclidean)
    assert cfg.suite["ks"] == [1.0, 2.0, 3.0]
    assert cfg.solver["T"] == 1.0


def test_digest_is_stable():
    assert parse_config(GOOD).digest() == parse_config(GOOD).digest()
    assert parse_config(GOOD).digest() != parse_config(GOOD.replace("seed = 3", "seed = 4")).digest()


def test_misspelled_key_reports_position():
    bad = GOOD.replace("resolution = 16", "resolutoin = 16")
    with pytest.raises(ConfigError) as exc:
        parse_config(bad)
    assert exc.value.line == 7
    assert "resolutoin" in str(exc.value)


@pytest.mark.parametrize("old,new", [
    ('kind = "green"', 'kind = "greem"'),
    ("radius = 4.5", 'radius = "big"'),
    ("radius = 4.5", "radius = -1.0"),
    ("ks = [1, 2, 3]", "ks = [1, -2]"),
    ('model = "flat"', 'model = "torus"'),
    ("[suite]", "[suite]\nprobe_tol = 0.0"),
    ("[suite]", "[solverr]\nT = 1.0\n[suite]"),
])
def test_rejections(old, new):
    with pytest.raises(ConfigError):
        parse_config(GOOD.replace(old, new))


def test_syntax_error_position():
    with pytest.raises(ConfigError) as exc:
        parse_config(GOOD + "\nbroken = [\n")
    assert exc.value.line is not None


def test_profile_tables():
    text = GOOD.replace('model = "flat"\nradius = 4.5\nresolution = 16\nlayout = "planar"',
                        'model = "conformal"\nextent = 4.0\nresolution = 8\n'
                        'w0 = {kind = "gaussian", amplitude = 0.1, width = 1.0}')
    model = parse_config(text).model()
    assert isinstance(model, ConformalPlaneFlow)
    with pytest.raises(ConfigError):
        parse_config(text.replace('"gaussian"', '"hat"'))
    with pytest.raises(ConfigError):
        parse_config(text.replace("width = 1.0", "width = 9.0"))


def test_override():
    cfg = apply_override(parse_config(GOOD), "geometry.resolution=8")
    assert cfg.geometry["resolution"] == 8
    with pytest.raises(ConfigError):
        apply_override(cfg, "geometry.resolutoin=8")
    with pytest.raises(ConfigError):
        apply_override(cfg, "no-equals-sign")


def test_bundled_configs_parse():
    folder = resources.files("ricciheat").joinpath("configs")
    names = sorted(p.name for p in folder.iterdir() if p.name.endswith(".toml"))
    assert len(names) == 10
    for name in names:
        load_config(str(folder.joinpath(name)))
