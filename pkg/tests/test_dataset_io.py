import hashlib
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emotic_mbn.dataset_io import (
    AnnotationFormatError,
    DegenerateCropError,
    ImageStore,
    compute_frequencies,
    crop_body,
    dumps_annotations,
    generate_fixture,
    load_annotations,
    save_annotations,
)
from emotic_mbn.domain import CATEGORIES, BoundingBox, category_index, validate_annotation

HEADER = "image_id,x1,y1,x2,y2,gender,age,categories,valence,arousal,dominance,split\n"


def write(tmp_path, body, name="ann.csv"):
    p = tmp_path / name
    p.write_text(HEADER + textwrap.dedent(body))
    return p


def test_two_row_fixture(tmp_path):
    p = write(tmp_path, """\
        a.jpg,10,20,30,60,female,adult,"Peace;Happiness",7,5,6,train
        b.jpg,0,0,32,64,male,kid,"Anger",2,8,7,test
        """)
    table = load_annotations(p)
    assert len(table) == 2
    assert table.split_counts == {"train": 1, "test": 1}
    a = table.rows[0]
    assert a.body_box == BoundingBox(10, 20, 30, 60)
    assert a.categories == ["Peace", "Happiness"]
    assert a.vad == (7.0, 5.0, 6.0)


def test_header_only(tmp_path):
    table = load_annotations(write(tmp_path, ""))
    assert len(table) == 0
    assert table.split_counts == {}


def test_out_of_range_row_rejected_with_line_number(tmp_path):
    p = write(tmp_path, """\
        a.jpg,10,20,30,60,female,adult,"Peace",7,5,6,train
        b.jpg,0,0,32,64,male,kid,"Anger",12,8,7,test
        """)
    table = load_annotations(p)
    assert len(table) == 1
    assert len(table.rejected) == 1
    assert table.rejected[0].line == 3
    assert "valence out of [0,10]" in table.rejected[0].reason


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_annotations(tmp_path / "nope.csv")


def test_malformed_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("image,x1\n")
    with pytest.raises(AnnotationFormatError, match="malformed header"):
        load_annotations(p)


def test_unparseable_rows_summary_error(tmp_path):
    p = write(tmp_path, """\
        a.jpg,10,20,30,60,female,adult,"Peace",7,5,6,train
        b.jpg,zero,0,32,64,male,kid,"Anger",2,8,7,test
        """)
    with pytest.raises(AnnotationFormatError, match="line 3"):
        load_annotations(p)


def test_few_unparseable_rows_are_tolerated(tmp_path):
    good = "".join(f"i{i}.jpg,0,0,10,10,male,adult,\"Peace\",5,5,5,train\n" for i in range(200))
    p = write(tmp_path, good + 'x.jpg,0,0,10,10,male,adult,"Bliss",5,5,5,train\n')
    table = load_annotations(p)
    assert len(table) == 200
    assert table.unparseable[0].line == 202
    assert "Bliss" in table.unparseable[0].reason


def test_zero_label_rows_kept(tmp_path):
    p = write(tmp_path, """\
        a.jpg,10,20,30,60,female,adult,"",7,5,6,train
        """)
    table = load_annotations(p)
    assert len(table) == 1
    assert table.zero_label_rows == 1


def test_round_trip(tmp_path, table):
    out = tmp_path / "again.csv"
    save_annotations(table, out)
    assert load_annotations(out) == table
    assert out.read_text() == dumps_annotations(load_annotations(out).rows)


def test_doubt_confusion_is_quoted(tmp_path):
    p = write(tmp_path, 'a.jpg,0,0,5,5,male,adult,"Doubt/Confusion;Fear",1.5,2,3,val\n')
    table = load_annotations(p)
    text = dumps_annotations(table.rows)
    assert '"Doubt/Confusion;Fear"' in text
    assert ",1.5,2,3,val" in text


def test_frequencies_hand_count(tmp_path):
    p = write(tmp_path, """\
        a.jpg,0,0,5,5,male,adult,"Peace",5,5,5,train
        b.jpg,0,0,5,5,male,adult,"Peace;Anger",5,5,5,train
        c.jpg,0,0,5,5,male,adult,"Fear",5,5,5,test
        """)
    freq = compute_frequencies(load_annotations(p))
    expected = np.zeros(26)
    expected[category_index("Peace")] = 1.0
    expected[category_index("Anger")] = 0.5
    np.testing.assert_array_equal(freq.p, expected)
    assert freq.n_train == 2


def test_frequencies_saturated_and_single(tmp_path):
    all_cats = ";".join(CATEGORIES)
    p = write(tmp_path, f'a.jpg,0,0,5,5,male,adult,"{all_cats}",5,5,5,train\n')
    np.testing.assert_array_equal(compute_frequencies(load_annotations(p)).p, np.ones(26))
    p = write(tmp_path, 'a.jpg,0,0,5,5,male,adult,"Fear",5,5,5,train\n', "single.csv")
    p_single = compute_frequencies(load_annotations(p)).p
    assert p_single[category_index("Fear")] == 1.0
    assert p_single.sum() == 1.0


def test_frequencies_need_train_rows(tmp_path):
    p = write(tmp_path, 'a.jpg,0,0,5,5,male,adult,"Fear",5,5,5,test\n')
    with pytest.raises(ValueError, match="train split is empty"):
        compute_frequencies(load_annotations(p))


def test_frequency_bit_count_identity(table):
    freq = compute_frequencies(table)
    train_bits = table.discrete_matrix(table.split_indices("train")).sum()
    assert round(float(freq.p.sum() * freq.n_train)) == int(train_bits)


def test_crop_body():
    img = np.arange(100 * 100 * 3, dtype=np.uint32).reshape(100, 100, 3).astype(np.uint8)
    crop = crop_body(img, BoundingBox(10, 20, 30, 60))
    assert crop.shape == (40, 20, 3)
    np.testing.assert_array_equal(crop, img[20:60, 10:30])
    np.testing.assert_array_equal(crop_body(img, BoundingBox(0, 0, 100, 100)), img)
    assert crop_body(img, BoundingBox(99, 99, 100, 100)).shape == (1, 1, 3)
    with pytest.raises(DegenerateCropError):
        crop_body(img, BoundingBox(120, 120, 130, 130))


def test_fixture_is_deterministic(tmp_path):
    generate_fixture(10, 7, tmp_path / "a")
    generate_fixture(10, 7, tmp_path / "b")
    assert (tmp_path / "a/annotations.csv").read_bytes() == (tmp_path / "b/annotations.csv").read_bytes()
    for i in range(10):
        name = f"images/img_{i:05d}.png"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_fixture_single_image(tmp_path):
    assert len(generate_fixture(1, 0, tmp_path)) == 1
    assert len(load_annotations(tmp_path / "annotations.csv")) == 1


def test_fixture_split_counts_follow_hash_rule(tmp_path):
    table = generate_fixture(100, 1, tmp_path)
    expected = {"train": 0, "val": 0, "test": 0}
    for i in range(100):
        digest = hashlib.sha256(f"images/img_{i:05d}.png".encode()).digest()
        bucket = int.from_bytes(digest[:8], "big") % 100
        expected["train" if bucket < 70 else "val" if bucket < 85 else "test"] += 1
    assert table.split_counts == expected
    assert abs(expected["train"] - 70) <= 10


def test_fixture_images_decode(fixture_dir, table):
    store = ImageStore(fixture_dir)
    img = store.lookup(table.rows[0].image_id)
    assert img.shape == (64, 64, 3) and img.dtype == np.uint8
    assert (fixture_dir / "fixture_spec.json").is_file()


def test_missing_image(fixture_dir):
    with pytest.raises(FileNotFoundError):
        ImageStore(fixture_dir).lookup("images/none.png")


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**16))
def test_fixture_always_loads_cleanly(tmp_path_factory, n, seed):
    out = tmp_path_factory.mktemp("fx")
    generated = generate_fixture(n, seed, out)
    loaded = load_annotations(out / "annotations.csv")
    assert not loaded.rejected and not loaded.unparseable
    assert loaded == generated
    assert all(validate_annotation(r) == [] for r in loaded.rows)
