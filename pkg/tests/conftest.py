import pytest

from tollcast import core, fusion, synth

TINY_ROUTE_KEYS = {
    "route.I66.role": "toll",
    "route.I66.direction": "EB",
    "route.I66.length_miles": 11.0,
    "route.I66.segment_count": 4,
    "route.GWPK.role": "alternative",
    "route.GWPK.length_miles": 14.2,
    "route.GWPK.segment_count": 3,
    "route.US50.role": "alternative",
    "route.US50.length_miles": 12.6,
    "route.US50.segment_count": 4,
}


def tiny_config(seed=11, days=5, **extra):
    overrides = {"grid.days": days}
    overrides.update(TINY_ROUTE_KEYS)
    overrides.update(extra)
    return core.default_config(seed, **overrides)


@pytest.fixture(scope="session")
def small_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def small_feeds(small_cfg):
    toll, speed, volume, diag = synth.generate_records(small_cfg)
    return toll, speed, volume, diag


@pytest.fixture(scope="session")
def small_table(small_cfg, small_feeds):
    toll, speed, volume, _ = small_feeds
    fused = fusion.fuse_feeds(small_cfg, toll, speed, volume)
    return fusion.build_feature_table(small_cfg, fused)
