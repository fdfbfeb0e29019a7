import numpy as np
import pytest

from invmaxent.errors import (
    BadDimensions,
    EmptyList,
    InconsistentK,
    LevelOutOfRange,
    ParseError,
    TruncatedFile,
    ValidationError,
)
from invmaxent.group import microimage_space
from invmaxent.imagery import (
    ImageGray,
    PatchCounts,
    PreprocessConfig,
    QuantizedImage,
    aggregate,
    clip_bounds,
    extract_counts,
    image_counts,
    load_image,
    parse_pgm,
    parse_raw16,
    pgm_bytes,
    preprocess,
    write_pgm,
)

RAW = PreprocessConfig(clip_fraction=0.0, log_transform=False)


def test_parse_p2():
    img = parse_pgm(b"P2\n# comment\n2 2\n9\n1 2\n3 4\n")
    assert img.pixels.tolist() == [[1, 2], [3, 4]]


def test_raw16_endianness():
    assert parse_raw16(b"\x00\x01", 1, 1).pixels.tolist() == [[1]]
    assert parse_raw16(b"\x00\x01", 1, 1, "little").pixels.tolist() == [[256]]


def test_p5_16bit_roundtrip(tmp_path):
    px = np.random.default_rng(0).integers(0, 65536, size=(5, 7))
    path = tmp_path / "x.pgm"
    write_pgm(path, px, maxval=65535)
    assert np.array_equal(load_image(path).pixels, px)
    assert np.array_equal(parse_pgm(pgm_bytes(px[:, :3] % 200, binary=False)).pixels, px[:, :3] % 200)


def test_load_errors(tmp_path):
    with pytest.raises(ParseError):
        parse_pgm(b"P6\n1 1\n255\n\x00")
    with pytest.raises(TruncatedFile):
        parse_pgm(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(TruncatedFile):
        parse_raw16(b"\x00", 1, 1)
    with pytest.raises(BadDimensions):
        parse_raw16(b"\x00\x01\x00\x02", 1, 1)
    path = tmp_path / "r.raw"
    path.write_bytes(b"\x00\x01")
    with pytest.raises(BadDimensions):
        load_image(path, "raw16")


def test_config_validation():
    with pytest.raises(ValidationError):
        PreprocessConfig(clip_fraction=0.5)
    with pytest.raises(ValidationError):
        PreprocessConfig(levels=1)


def test_constant_image_flagged():
    q = preprocess(ImageGray(np.full((4, 4), 7)))
    assert q.constant and not q.levels.any()


def test_two_valued_image_hits_extreme_levels():
    px = np.zeros((10, 10), dtype=np.int64)
    px[::2] = 65535
    q = preprocess(ImageGray(px))
    assert set(np.unique(q.levels)) == {0, 3}


def test_ramp_quantizes_evenly():
    q = preprocess(ImageGray(np.arange(256).reshape(16, 16)), RAW)
    assert np.bincount(q.levels.ravel()).tolist() == [64, 64, 64, 64]


def test_clip_bounds_integer_rule():
    v = np.arange(1000)
    assert clip_bounds(v, 0.005) == (4, 995)
    assert clip_bounds(v, 0.0) == (0, 999)


def test_preprocess_monotone():
    px = np.random.default_rng(1).integers(0, 4096, size=(20, 20))
    q = preprocess(ImageGray(px)).levels.ravel()
    order = np.argsort(px.ravel(), kind="stable")
    assert np.all(np.diff(q[order]) >= 0)


def test_patch_counts_examples():
    sp = microimage_space(4)
    one = extract_counts(QuantizedImage(np.array([[0, 3], [1, 2]]), 4), 2, sp)
    assert one.total == 1 and one.counts.sum() == 1
    k = int(np.argmax(one.counts))
    # counterclockwise from the top-left corner: TL, BL, BR, TR
    assert tuple(sp.points2[k]) == (-3, -1, 1, 3)
    three = extract_counts(QuantizedImage(np.arange(9).reshape(3, 3) % 4, 4), 2, sp)
    assert three.total == 4 == three.counts.sum()
    zero = extract_counts(QuantizedImage(np.zeros((10, 10), dtype=np.int64), 4), 2, sp)
    assert zero.counts[sp.index_of((-1.5,) * 4)] == 81


def test_extract_errors():
    sp = microimage_space(4)
    with pytest.raises(LevelOutOfRange):
        extract_counts(QuantizedImage(np.full((3, 3), 4), 4), 2, sp)
    with pytest.raises(BadDimensions):
        extract_counts(QuantizedImage(np.zeros((1, 5), dtype=np.int64), 4), 2, sp)


def test_rotation_maps_to_group_action(action4):
    """Rotating or transposing an image permutes its counts within orbits."""
    sp = action4.space
    px = np.random.default_rng(2).integers(0, 4, size=(12, 9)) * 85
    base = image_counts(ImageGray(px), sp, RAW)[0].counts
    for variant in (np.rot90(px), px.T, 255 - px):
        other = image_counts(ImageGray(np.ascontiguousarray(variant)), sp, RAW)[0].counts
        assert np.array_equal(action4.reynolds(base.astype(float)), action4.reynolds(other.astype(float)))


def test_aggregate_examples():
    a = PatchCounts(np.array([1, 3, 0]), 4)
    b = PatchCounts(np.array([2, 0, 0]), 2)
    assert np.allclose(aggregate([a]).probs, [0.25, 0.75, 0])
    assert np.allclose(aggregate([a, a]).probs, [0.25, 0.75, 0])
    emp = aggregate([a, b])
    assert np.allclose(emp.probs, [0.625, 0.375, 0])
    assert emp.pooled_counts.tolist() == [3, 3, 0]
    assert not np.allclose(emp.probs, emp.pooled_counts / 6)
    with pytest.raises(EmptyList):
        aggregate([])
    with pytest.raises(InconsistentK):
        aggregate([a, PatchCounts(np.array([1]), 1)])


def test_pipeline_deterministic(tmp_path):
    px = np.random.default_rng(3).integers(0, 65536, size=(30, 30))
    path = tmp_path / "d.pgm"
    write_pgm(path, px)
    sp = microimage_space(4)
    a = image_counts(load_image(path), sp)[0].counts
    b = image_counts(load_image(path), sp)[0].counts
    assert np.array_equal(a, b) and a.sum() == 29 * 29
