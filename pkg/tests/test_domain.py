import pytest
from hypothesis import given, settings, strategies as st

from fbrsim.domain import (
    CANONICAL_SDIDI_PAIRS, BeaconRateSet, BRBuffer, ChannelParams, ConfigError, Difra, Fixed,
    InvalidConfigError, ScenarioConfig, SdidiParams, check_config, desk_profile, dump_config, fredy,
    paper_profile, paper_strategies, parse_config_text, parse_strategy, validate_config,
)


def test_default_config_is_valid():
    cfg = ScenarioConfig()
    assert validate_config(cfg) is cfg
    assert cfg.road_length == 10_000
    assert cfg.lanes == 6
    assert cfg.sim_duration == 150
    assert cfg.window == 1
    assert cfg.comm_range == 250
    assert cfg.replications == 50
    assert cfg.channel.max_q == 400 and cfg.channel.alpha == 0.8
    assert cfg.channel.omega == 320
    assert cfg.rate_set.rates == tuple(range(1, 11))
    assert (cfg.rate_set.br_min, cfg.rate_set.br_max, cfg.rate_set.k) == (1, 10, 10)


def test_alpha_out_of_range():
    cfg = ScenarioConfig(channel=ChannelParams(alpha=1.2))
    with pytest.raises(InvalidConfigError) as exc:
        validate_config(cfg)
    assert [e.field for e in exc.value.errors] == ["channel.alpha"]


def test_equal_sdidi_distances_rejected():
    errs = check_config(ScenarioConfig(strategy=fredy(100, 100)))
    assert any(e.field == "sdidi" and "d1 < d2" in e.reason for e in errs)


def test_all_violations_reported():
    cfg = ScenarioConfig(channel=ChannelParams(max_q=0, alpha=-0.1), strategy=fredy(300, 400),
                         rate_set=BeaconRateSet((1, 3, 2)))
    fields = {e.field for e in check_config(cfg)}
    assert {"channel.max_q", "channel.alpha", "sdidi", "rates"} <= fields


def test_fixed_rate_must_be_member():
    assert check_config(ScenarioConfig(strategy=Fixed(11)))
    assert not check_config(ScenarioConfig(strategy=Fixed(7)))


def test_canonical_pairs():
    assert len(CANONICAL_SDIDI_PAIRS) == 15
    assert (100, 250) in CANONICAL_SDIDI_PAIRS
    assert all(d1 < d2 and d1 % 50 == 0 and d2 % 50 == 0 and d2 <= 250 for d1, d2 in CANONICAL_SDIDI_PAIRS)
    labels = [s.label for s in paper_strategies()]
    assert len(labels) == len(set(labels)) == 16
    assert labels[-1] == "SD" and labels[0] == "SF(000,050)"


@pytest.mark.parametrize("text,expected", [
    ("fredy(50,100)", fredy(50, 100)),
    (" FREDY( 0 , 250 ) ", fredy(0, 250)),
    ("difra", Difra()),
    ("fixed(7)", Fixed(7)),
])
def test_parse_strategy(text, expected):
    assert parse_strategy(text) == expected


@pytest.mark.parametrize("text", ["fredy(50)", "dfira", "fixed(x)", ""])
def test_parse_strategy_rejects(text):
    with pytest.raises(ConfigError):
        parse_strategy(text)


def test_parse_config_text():
    cfg = parse_config_text("""
        # channel section
        channel.max_q = 30
        channel.alpha = 0.8
        strategy = fredy(50,100)
        experiment.densities = 100, 200
        radio.rx_sensitivity_dbm = auto
    """)
    assert cfg.channel.max_q == 30
    assert cfg.channel.omega == pytest.approx(24)
    assert cfg.strategy == fredy(50, 100)
    assert cfg.densities == (100, 200)


def test_unknown_key_is_hard_error():
    with pytest.raises(ConfigError, match="unknown"):
        parse_config_text("channel.maxq = 30")


def test_duplicate_and_malformed_lines():
    with pytest.raises(ConfigError):
        parse_config_text("lanes = 6\nlanes = 4")
    with pytest.raises(ConfigError):
        parse_config_text("lanes 6")
    with pytest.raises(ConfigError):
        parse_config_text("lanes = six")


def test_profiles():
    desk = desk_profile()
    assert desk.road_length == 2000 and desk.densities == (100, 200, 400)
    assert desk.replications == 20 and desk.sim_duration == 60
    paper = paper_profile()
    assert paper.densities == (500, 750, 1000, 1250, 1500, 1750, 2000)
    assert len(paper.strategies) == 16


def test_round_trip_defaults():
    for cfg in (ScenarioConfig(), desk_profile(), paper_profile()):
        assert parse_config_text(dump_config(cfg)) == cfg


@settings(max_examples=60, deadline=None)
@given(
    alpha=st.floats(0, 1, allow_nan=False),
    max_q=st.integers(1, 10_000),
    d1=st.integers(0, 200),
    gap=st.integers(1, 50),
    seed=st.integers(0, 2**64 - 1),
    dedup=st.booleans(),
    sigma=st.floats(0, 10, allow_nan=False),
)
def test_round_trip_property(alpha, max_q, d1, gap, seed, dedup, sigma):
    base = ScenarioConfig()
    cfg = base.replace(
        channel=ChannelParams(max_q, alpha),
        strategy=fredy(d1, d1 + gap),
        base_seed=seed,
        dedup_senders=dedup,
        radio=base.radio.__class__(shadowing_sigma_db=sigma),
    )
    back = parse_config_text(dump_config(cfg))
    assert back == cfg
    # omega is derived, never stored
    assert abs(back.channel.omega - back.channel.alpha * back.channel.max_q) == 0


def test_brbuffer():
    rates = BeaconRateSet()
    buf = BRBuffer(rates)
    buf.add(3, 10)
    buf.add(5, 25)
    assert buf.counts.tolist() == [0, 0, 10, 0, 25, 0, 0, 0, 0, 0]
    buf.clear()
    assert buf.total() == 0
    with pytest.raises(ValueError):
        BRBuffer(rates, [1, 2])
    with pytest.raises(ValueError):
        BRBuffer(rates, [-1] + [0] * 9)


def test_sdidi_params_type():
    assert SdidiParams(0, 50).d2 == 50
