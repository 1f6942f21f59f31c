import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays
from hypothesis import strategies as st

from mvssnet.netpbm import ParseError, read_pgm, read_ppm, write_pgm, write_ppm


def test_mask_round_trip_exact(tmp_path, rng):
    m = (rng.random((16, 24)) < 0.3).astype(float)
    write_pgm(tmp_path / "m.pgm", m)
    np.testing.assert_array_equal(read_pgm(tmp_path / "m.pgm"), m)


@settings(deadline=None, max_examples=30)
@given(arrays(np.float64, (3, 4, 5), elements=st.floats(0, 1)))
def test_image_round_trip_quantisation(tmp_path_factory, img):
    path = tmp_path_factory.mktemp("ppm") / "x.ppm"
    write_ppm(path, img)
    back = read_ppm(path)
    assert back.shape == img.shape
    assert np.abs(back - img).max() <= 1 / 255


def test_header_layout(tmp_path):
    write_ppm(tmp_path / "a.ppm", np.zeros((3, 2, 5)))
    assert (tmp_path / "a.ppm").read_bytes().startswith(b"P6\n5 2\n255\n")


def test_header_comments_accepted(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
    np.testing.assert_array_equal(read_pgm(tmp_path / "c.pgm"), [[0.0, 1.0]])


@pytest.mark.parametrize(
    "blob,offset",
    [
        (b"P5\n4 4\n255\n" + bytes(10), None),
        (b"P6\n4 4\n255\n" + bytes(47), None),
        (b"P2\n4 4\n255\n", 0),
        (b"P5\n4", None),
        (b"P5\n4 4\n65535\n" + bytes(32), None),
    ],
)
def test_malformed_files(tmp_path, blob, offset):
    path = tmp_path / ("x.ppm" if blob.startswith(b"P6") else "x.pgm")
    path.write_bytes(blob)
    reader = read_ppm if blob.startswith(b"P6") else read_pgm
    with pytest.raises(ParseError) as info:
        reader(path)
    assert "byte offset" in str(info.value)
    if offset is not None:
        assert info.value.offset == offset


def test_wrong_magic_for_reader(tmp_path):
    write_pgm(tmp_path / "g.pgm", np.zeros((2, 2)))
    with pytest.raises(ParseError):
        read_ppm(tmp_path / "g.pgm")
