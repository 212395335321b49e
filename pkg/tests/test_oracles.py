import numpy as np
import pytest

from chshml.geometry import P_PR, deterministic_behaviours, embed_full8, tlm_margin
from chshml.oracles import NpaOracle, SeesawOracle, get_oracle, local_oracle, tlm_oracle
from chshml.sampling import ns_sampler

TSIRELSON = np.array([1.0, 1.0, 1.0, -1.0]) / np.sqrt(2.0)
OUTSIDE_NS = np.array([0.9, 0.9, 0.9, 0.9, -0.9, -0.9, -0.9, -0.9])


@pytest.mark.parametrize("name", ["tlm", "local", "npa:1", "npa:1ab", "seesaw:2,2"])
def test_pr_box_is_not_quantum(name):
    assert not get_oracle(name)(P_PR)[0]


@pytest.mark.parametrize("name", ["tlm", "local", "npa:1", "npa:1ab", "seesaw:2,2"])
def test_origin_is_quantum(name):
    assert get_oracle(name)(np.zeros(8))[0]


@pytest.mark.parametrize("name", ["tlm", "local", "npa:1ab"])
def test_outside_ns_is_rejected(name):
    assert not get_oracle(name)(OUTSIDE_NS)[0]


def test_names():
    assert get_oracle("TLM") is tlm_oracle
    assert get_oracle("npa:2") == NpaOracle(get_oracle("npa:2").level)
    assert get_oracle("seesaw:4,10", seed=3) == SeesawOracle(4, 10, 3)
    with pytest.raises(ValueError):
        get_oracle("magic")


def test_local_on_corr4():
    np.testing.assert_array_equal(local_oracle(np.array([np.zeros(4), TSIRELSON])), [True, False])


def test_tlm_agrees_with_npa_level_1():
    pts = ns_sampler("corr4", 30).draw(300)
    clear = np.abs(tlm_margin(pts)) > 1e-6
    np.testing.assert_array_equal(tlm_oracle(pts)[clear], get_oracle("npa:1")(pts)[clear])


def test_local_points_pass_every_oracle():
    pts = deterministic_behaviours()[:4]
    for name in ("tlm", "local", "npa:1ab"):
        assert get_oracle(name)(pts).all()


def test_seesaw_certifies_tsirelson():
    assert SeesawOracle(2, 20).one(embed_full8(TSIRELSON))


def test_seesaw_index_is_a_substream():
    o = SeesawOracle(2, 3, seed=5)
    p = 0.7 * P_PR
    assert o(np.array([p, p]))[1] == o.one(p, 1)
