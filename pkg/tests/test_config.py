from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from roadfield.config import RunConfig, family_spec, parse_config, read_config, serialize_config
from roadfield.errors import ConfigurationError

DEMO = Path(__file__).resolve().parent.parent / "demos" / "data"


def test_minimal_config_defaults():
    cfg = parse_config("[domain]\nshape = unit_square\n")
    assert (cfg.k, cfg.tol, cfg.band) == (6, 1e-8, 1e-3)
    assert cfg.h == 0.0625 and cfg.params.a == 1.0
    assert cfg.load_network(required=False) is None


def test_negative_mu_names_key_and_line():
    with pytest.raises(ConfigurationError) as info:
        parse_config("[params]\na = 1\nmu = -1\n")
    assert info.value.line == 3
    assert info.value.key == "params.mu"
    assert "line 3" in str(info.value)


@pytest.mark.parametrize("text,line", [
    ("[params]\nalpha = 1\n", 2),
    ("[physics]\na = 1\n", 1),
    ("[params]\na = 1\na = 2\n", 3),
    ("[mesh]\nh = fast\n", 2),
    ("a = 1\n", 1),
    ("[mesh]\nh\n", 2),
    ("[family]\nkind = cross\nbudget = 1\nrange.r = 0.3 0.1\n", 4),
])
def test_bad_lines_rejected(text, line):
    with pytest.raises(ConfigurationError) as info:
        parse_config(text)
    assert info.value.line == line


def test_family_needs_budget():
    with pytest.raises(ConfigurationError) as info:
        parse_config("[family]\nkind = cross\n")
    assert info.value.key == "family.budget"


def test_missing_file_named(tmp_path):
    missing = tmp_path / "nope.cfg"
    with pytest.raises(ConfigurationError) as info:
        read_config(missing)
    assert str(missing) in str(info.value)
    cfg = parse_config("[network]\nfile = absent.net\n", base_dir=str(tmp_path))
    with pytest.raises(ConfigurationError) as info:
        cfg.load_network()
    assert "absent.net" in str(info.value)


def test_demo_configs_load():
    cfg = read_config(DEMO / "example.cfg")
    assert cfg.load_network().n_edges == 1
    assert cfg.load_domain().area == pytest.approx(1.0)
    spec = family_spec(read_config(DEMO / "segment_search.cfg"))
    assert spec.kind == "segment-bundle" and spec.budget == 1.2
    assert spec.ranges == {"s0": (0.25, 0.375), "s1": (0.75, 1.0)}
    assert spec._res(None) == {"s0": 5, "s1": 9}


def test_replace_validates():
    cfg = RunConfig()
    assert cfg.replace(h=0.1, k=None).h == 0.1
    with pytest.raises(ConfigurationError):
        cfg.replace(h=-1.0)


pos = st.floats(1e-6, 1e6, allow_nan=False)


@given(
    a=pos, b=pos, mu=pos, nu=pos, h=st.floats(1e-4, 1.0), k=st.integers(1, 50), tol=st.floats(1e-14, 1e-2),
    seed=st.integers(0, 2**31), shape=st.sampled_from(["unit_square", "l_shape"]),
    dt=st.one_of(st.none(), pos), anchored=st.booleans(), budget=pos,
    required=st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), max_size=3).map(tuple),
    res=st.integers(1, 9),
)
def test_round_trip(a, b, mu, nu, h, k, tol, seed, shape, dt, anchored, budget, required, res):
    text = (
        f"[domain]\nshape = {shape}\n[params]\na = {a!r}\nb = {b!r}\nmu = {mu!r}\nnu = {nu!r}\n"
        f"[mesh]\nh = {h!r}\n[eigen]\nk = {k}\ntol = {tol!r}\nseed = {seed}\n"
        + (f"[evolve]\ndt = {dt!r}\n" if dt is not None else "")
        + f"[family]\nkind = cross\nbudget = {budget!r}\nanchored = {str(anchored).lower()}\n"
        + f"resolution = {res}\nrange.r = 0.1 0.2\nresolution.cx = 3\noption.arms = 4\n"
        + ("required = " + "; ".join(f"{x!r} {y!r}" for x, y in required) + "\n" if required else "")
    )
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert serialize_config(again) == serialize_config(cfg)
