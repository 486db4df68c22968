from pathlib import Path

import numpy as np
import pytest

from vggtex.fmapio import FmapError, read_fmap, write_fmap

GOLDEN = Path(__file__).parent / "golden" / "golden.fmap"


def test_roundtrip(tmp_path, rng):
    layers = [
        rng.standard_normal((3, 4, 2)).astype(np.float32),
        rng.standard_normal((2, 2, 5)).astype(np.float32),
    ]
    path = tmp_path / "x.fmap"
    write_fmap(layers, path)
    back = read_fmap(path)
    assert len(back) == 2
    for a, b in zip(layers, back):
        np.testing.assert_array_equal(a, b)


def test_golden_file_roundtrips_bit_exactly(tmp_path):
    layers = read_fmap(GOLDEN)
    out = tmp_path / "copy.fmap"
    write_fmap(layers, out)
    assert out.read_bytes() == GOLDEN.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.fmap"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FmapError):
        read_fmap(path)


def test_truncated(tmp_path, rng):
    path = tmp_path / "x.fmap"
    write_fmap([rng.standard_normal((2, 2, 2)).astype(np.float32)], path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(FmapError):
        read_fmap(path)


def test_nonfinite_rejected_on_write(tmp_path):
    layer = np.zeros((2, 2, 1), np.float32)
    layer[0, 0, 0] = np.nan
    with pytest.raises(FmapError):
        write_fmap([layer], tmp_path / "x.fmap")
