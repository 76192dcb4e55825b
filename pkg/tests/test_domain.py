import pytest

from emotic_mbn.domain import (
    CATEGORIES,
    BoundingBox,
    PersonAnnotation,
    UnknownCategoryError,
    category_index,
    labels_to_bits,
    validate_annotation,
)


def make(**kw):
    base = dict(
        image_id="a.jpg",
        body_box=BoundingBox(10, 20, 30, 60),
        gender="male",
        age="adult",
        discrete=labels_to_bits(["Peace"]),
        vad=(5.0, 5.0, 5.0),
        split="train",
    )
    base.update(kw)
    return PersonAnnotation(**base)


def test_category_order_endpoints():
    assert len(CATEGORIES) == 26
    assert len(set(CATEGORIES)) == 26
    assert category_index("Peace") == 0
    assert category_index("Suffering") == 25
    assert category_index("Doubt/Confusion") == 11


def test_category_index_is_case_sensitive():
    with pytest.raises(UnknownCategoryError):
        category_index("peace")
    with pytest.raises(UnknownCategoryError):
        category_index("Joy")


@pytest.mark.parametrize("i", range(26))
def test_category_round_trip(i):
    assert category_index(CATEGORIES[i]) == i


def test_valid_annotation():
    assert validate_annotation(make()) == []


def test_valence_out_of_range():
    assert "valence out of [0,10]" in validate_annotation(make(vad=(11.0, 5.0, 5.0)))


def test_degenerate_box():
    assert "degenerate bounding box" in validate_annotation(make(body_box=BoundingBox(10, 20, 10, 60)))


def test_every_violation_is_named():
    problems = validate_annotation(
        make(image_id="", gender="x", split="dev", vad=(-1.0, 5.0, 10.5), discrete=(0,) * 26)
    )
    assert len(problems) == 6
    assert "no discrete category set" in problems


def test_box_geometry():
    b = BoundingBox(10, 20, 30, 60)
    assert (b.width, b.height) == (20, 40)
    assert b.clip(25, 50) == BoundingBox(10, 20, 25, 50)
    assert BoundingBox(0, 0, 100, 100).contains(b)
