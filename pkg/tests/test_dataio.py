import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reference import ES_SPOT, FX_SPOT
from sabrcal.calibration import SurfaceSlice, VolSurface
from sabrcal.dataio import (
    RunConfig,
    bundled_path,
    load_params,
    params_from_json,
    params_to_json,
    parse_surface,
    read_surface_file,
    read_surface_text,
    serialize_surface,
    write_surface,
)
from sabrcal.errors import ConfigError, ParseError, ValidationError
from sabrcal.params import CaseIIParams, CaseIParams, StaticSabrParams

# pinned after a cell-by-cell comparison with the printed market tables
FIXTURE_SHA256 = {
    "eurostoxx50.csv": "323c6d2aedd60903a62b922d0931a4fd190e60f9b4634ab03db8f7353fe152b2",
    "eurusd.csv": "5c03538d7c40fc641fb5fe2e6cf206204eed60a0ea5fdf303f9f7b48daedeb6d",
}

SMALL_FILE = """spot,100
strikes,absolute
units,decimal
T,r,y
0.5,0.01,0.02
K,vol
90,0.25
110,0.21
"""


@pytest.mark.parametrize("name", sorted(FIXTURE_SHA256))
def test_fixture_checksums(name):
    assert hashlib.sha256(bundled_path(name).read_bytes()).hexdigest() == FIXTURE_SHA256[name]


def test_eurostoxx_fixture(es_surface):
    assert es_surface.spot == ES_SPOT
    assert es_surface.maturities == (0.2438, 0.4959, 1.0, 2.0)
    assert [len(s.strikes) for s in es_surface.slices] == [21] * 4
    s = es_surface.slices[0]
    assert s.strikes[0] == pytest.approx(0.8 * ES_SPOT, rel=1e-15)
    assert s.strikes[-1] == pytest.approx(1.2 * ES_SPOT, rel=1e-15)
    assert s.vols[0] == 0.339 and s.rate == 0.014198 and s.dividend == 0.01562
    assert es_surface.slices[3].vols[0] == 0.2925


def test_eurusd_fixture(fx_surface):
    assert fx_surface.spot == FX_SPOT
    assert fx_surface.maturities == (0.2528, 0.5083, 1.0, 2.0)
    assert [len(s.strikes) for s in fx_surface.slices] == [19] * 4
    assert fx_surface.slices[0].strikes[0] == 1.1075 and fx_surface.slices[0].vols[0] == 0.1927
    assert fx_surface.slices[2].rate == 0.010832 and fx_surface.slices[2].dividend == 0.006907


@pytest.mark.parametrize("name", ["eurostoxx50", "eurusd"])
def test_fixture_text_round_trip(name):
    text = bundled_path(name + ".csv").read_text()
    assert read_surface_text(text).to_text() == text


@pytest.mark.parametrize("name", ["eurostoxx50", "eurusd"])
def test_surface_round_trip_is_field_exact(tmp_path, name):
    surface = parse_surface(f"bundled:{name}")
    path = tmp_path / "s.csv"
    write_surface(surface, path)
    back = parse_surface(path)
    assert back == surface
    assert serialize_surface(back) == path.read_text()


@settings(max_examples=40, deadline=None)
@given(
    spot=st.floats(1e-3, 1e5),
    rate=st.floats(-0.05, 0.2),
    vols=st.lists(st.floats(1e-3, 3.0), min_size=1, max_size=6),
    steps=st.lists(st.floats(1e-6, 10.0), min_size=6, max_size=6),
)
def test_round_trip_property(spot, rate, vols, steps):
    strikes = list(np.cumsum(steps[: len(vols)]))
    surface = VolSurface(spot, [SurfaceSlice(0.75, rate, 0.0, strikes, vols)], "X")
    back = read_surface_text(serialize_surface(surface)).to_surface()
    assert back.spot == surface.spot
    assert back.slices[0] == surface.slices[0]


def test_percent_strikes_resolved_against_spot():
    text = SMALL_FILE.replace("strikes,absolute", "strikes,percent").replace("units,decimal", "units,percent")
    text = text.replace("0.5,0.01,0.02", "0.5,1,2").replace("90,0.25", "90,25").replace("110,0.21", "110,21")
    s = read_surface_text(text).to_surface().slices[0]
    assert tuple(s.strikes) == (90.0, 110.0) and tuple(s.vols) == (0.25, 0.21) and s.rate == 0.01


@pytest.mark.parametrize(
    "bad, line",
    [
        (SMALL_FILE.replace("110,0.21", "110,abc"), 8),
        (SMALL_FILE.replace("0.5,0.01,0.02", "0.5,0.01"), 5),
        (SMALL_FILE.replace("K,vol\n", ""), 6),
        (SMALL_FILE.replace("spot,100", "spot,1e999x"), 1),
        (SMALL_FILE.replace("units,decimal", "units,bps"), 3),
        (SMALL_FILE.replace("strikes,absolute", "tenor,absolute"), 2),
        (SMALL_FILE.replace("90,0.25", "90,nan"), 7),
    ],
)
def test_parse_errors_carry_line_numbers(bad, line):
    with pytest.raises(ParseError) as info:
        read_surface_text(bad)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_missing_spot():
    with pytest.raises(ParseError):
        read_surface_text(SMALL_FILE.replace("spot,100\n", ""))


def test_empty_quote_block_names_the_slice():
    text = "spot,100\nT,r,y\n0.25,0,0\nK,vol\nT,r,y\n0.5,0,0\nK,vol\n100,0.2\n"
    with pytest.raises(ValidationError, match="slice 0"):
        read_surface_text(text)


def test_non_monotone_strikes_rejected():
    with pytest.raises(ValidationError, match="strictly increasing"):
        read_surface_text(SMALL_FILE.replace("110,0.21", "85,0.21")).to_surface()
    with pytest.raises(ValidationError):
        read_surface_text(SMALL_FILE + "T,r,y\n0.4,0,0\nK,vol\n100,0.2\n").to_surface()


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        read_surface_file(tmp_path / "nope.csv")
    with pytest.raises(ConfigError):
        parse_surface("bundled:nope")


@pytest.mark.parametrize(
    "params",
    [
        StaticSabrParams(0.3, 0.9, 0.4, -0.2),
        CaseIParams(0.2, 1.0, -0.5, 0.9, 0.01, 1.1),
        CaseIIParams(0.2, 1.0, -0.5, 0.1, -0.1, 0.8, -0.2, 0.3, 0.4, 1.5),
    ],
)
def test_params_json_round_trip(params):
    assert params_from_json(json.loads(json.dumps(params_to_json(params)))) == params


def test_bundled_params_and_errors(tmp_path):
    p = load_params("bundled:eurusd_case1")
    assert isinstance(p, CaseIParams) and p.b == 2.6093
    bad = tmp_path / "p.json"
    bad.write_text('{"model": "case1", "params": {"alpha": 0.2}}')
    with pytest.raises(ConfigError):
        load_params(bad)
    bad.write_text('{"model": "case1",\n "params": {')
    with pytest.raises(ParseError) as info:
        load_params(bad)
    assert info.value.line == 2
    with pytest.raises(ConfigError):
        params_from_json({"model": "case1", "params": {}, "extra": 1})


def test_run_config_defaults_and_unknown_keys():
    cfg = RunConfig.from_dict({"surface": "bundled:eurostoxx50"})
    assert cfg.model == "case1" and cfg.technique == "T_I" and cfg.schema_version == 1
    with pytest.raises(ConfigError, match="unknown configuration keys"):
        RunConfig.from_dict({"surface": "x", "colour": "red"})
    with pytest.raises(ConfigError, match="unknown schedule keys"):
        RunConfig.from_dict({"schedule": {"temperature": 1}})
    with pytest.raises(ConfigError, match="unknown plan keys"):
        RunConfig.from_dict({"plan": {"paths": 10}})


@pytest.mark.parametrize(
    "data",
    [
        {"bounds": {"nu0": [2.0, 1.0]}},
        {"bounds": {"nu0": [1.0, 1.0]}},
        {"bounds": {"nu0": [1.0]}},
        {"technique": "T_II", "model": "case1"},
        {"model": "case3"},
        {"schema_version": 2},
        {"schedule": {"cooling": 1.5}},
        {"plan": {"num_paths": 0}},
        {"contract": {"type": "american"}},
        {"contract": {"type": "european", "spot": 1.0}},
        {"params": {}, "params_file": "x.json"},
    ],
)
def test_run_config_validation(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_run_config_load_errors(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.load(path)
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "missing.json")
