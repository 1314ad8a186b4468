from __future__ import annotations

import pytest

from citybench.citygen import CATEGORY_NOUN, PALETTE, CityParams, color_name, generate_city
from citybench.scene import CATEGORIES, FURNITURE_KINDS, validate_scene
from citybench.scenefile import scene_to_bytes


def test_seed7_default_city_statistics(city7):
    # street segments: 2 axes x (rows+1) grid lines x cols segments per line
    assert len(city7.streets) == 2 * 5 * 4 == 40
    # one crosswalk per intersection of the 5x5 line grid
    assert len(city7.crosswalks) == 5 * 5 == 25
    # two controllers (one per axis) at each of the 3x3 interior 4-way crossings
    assert len(city7.signals) == 2 * 3 * 3 == 18
    # seed-dependent placements, frozen as regression values
    assert len(city7.buildings) == 46
    assert len(city7.furniture) == 100


def test_generated_scene_passes_validation(city7):
    validate_scene(city7)


def test_generation_is_deterministic(city7):
    again = generate_city(7)
    assert scene_to_bytes(again) == scene_to_bytes(city7)


def test_seed_changes_buildings_not_streets(city7):
    other = generate_city(8)
    assert scene_to_bytes(other) != scene_to_bytes(city7)
    street_geom = lambda s: [(st.centerline, st.width, st.lanes_per_direction) for st in s.streets]
    assert street_geom(other) == street_geom(city7)
    assert [b.footprint for b in other.buildings] != [b.footprint for b in city7.buildings]


def test_params_change_track_grid(small_city):
    # 2x2 grid: 2 axes x 3 lines x 2 segments
    assert len(small_city.streets) == 2 * 3 * 2 == 12
    assert len(small_city.crosswalks) == 3 * 3 == 9
    assert len(small_city.signals) == 2 * 1 * 1 == 2


def test_building_attributes_drawn_from_vocab(city7):
    palette_colors = {c for _, c in PALETTE}
    for b in city7.buildings:
        assert b.category in CATEGORIES
        assert b.color in palette_colors
        assert b.height > 0
        assert b.name
    for f in city7.furniture:
        assert f.kind in FURNITURE_KINDS


def test_buildings_do_not_overlap_streets(city7):
    from citybench import geometry as geo

    for b in city7.buildings:
        for s in city7.streets:
            for p in b.footprint:
                assert geo.dist_point_polyline(p, s.centerline) > s.width * 0.5


def test_crosswalks_sit_on_their_street(city7):
    from citybench import geometry as geo

    for c in city7.crosswalks:
        street = city7.get(c.street_id)
        assert street is not None
        d = geo.dist_point_polyline((c.cx, c.cy), street.centerline)
        assert d <= street.width * 0.5 + max(c.half_len, c.half_wid)


def test_color_name_exact_on_palette():
    for name, rgb in PALETTE:
        assert color_name(rgb) == name
    # nearest match for an off-palette color
    assert color_name((250, 250, 250)) == "white"


def test_category_nouns_cover_categories():
    assert set(CATEGORY_NOUN) == set(CATEGORIES)


def test_invalid_params_rejected():
    with pytest.raises(ValueError, match="row"):
        generate_city(7, CityParams(rows=0))
    with pytest.raises(ValueError, match="block size"):
        generate_city(7, CityParams(block_size=30.0))
    with pytest.raises(ValueError, match="density"):
        generate_city(7, CityParams(building_density=1.5))
    with pytest.raises(ValueError, match="positive"):
        generate_city(7, CityParams(street_width=0.0))


def test_single_block_city_generates():
    scene = generate_city(1, CityParams(rows=1, cols=1, block_size=120.0))
    validate_scene(scene)
    assert len(scene.streets) == 2 * 2 * 1
    assert len(scene.signals) == 0  # no interior 4-way crossings
