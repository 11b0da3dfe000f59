import gzip
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from icrsparse.metrics import mse
from icrsparse.mnist import (
    BadMagic,
    IdxImageSet,
    TrailingBytes,
    TruncatedPayload,
    image_prior,
    parse_idx_images,
    read_idx_images,
    read_pgm,
    recover_image,
    serialize_idx_images,
    write_pgm,
)

FIXTURE = Path(__file__).parent / "data" / "mnist-100-images-idx3-ubyte.gz"


def test_parse_minimal_example():
    data = bytes.fromhex("00000803") + struct.pack(">III", 1, 2, 2) + bytes([1, 2, 3, 4])
    imgs = parse_idx_images(data)
    assert imgs.count == 1 and (imgs.rows, imgs.cols) == (2, 2)
    assert imgs.pixels[0].tolist() == [[1, 2], [3, 4]]


def test_parse_errors():
    good = bytes.fromhex("00000803") + struct.pack(">III", 1, 2, 2) + bytes(4)
    with pytest.raises(BadMagic):
        parse_idx_images(bytes.fromhex("00000801") + good[4:])
    with pytest.raises(TruncatedPayload):
        parse_idx_images(good[:-1])
    with pytest.raises(TrailingBytes):
        parse_idx_images(good + b"\x00")
    with pytest.raises(TruncatedPayload):
        parse_idx_images(good[:10])


@given(arrays(np.uint8, st.tuples(st.integers(0, 3), st.integers(1, 5), st.integers(1, 5))))
def test_round_trip(px):
    data = serialize_idx_images(IdxImageSet(px))
    back = parse_idx_images(data)
    assert np.array_equal(back.pixels, px)
    assert serialize_idx_images(back) == data


def test_fixture_and_gzip(tmp_path):
    imgs = read_idx_images(FIXTURE)
    assert (imgs.count, imgs.rows, imgs.cols) == (100, 28, 28)
    frac = np.count_nonzero(imgs.pixels) / imgs.pixels.size
    assert 0.15 < frac < 0.23
    raw = gzip.decompress(FIXTURE.read_bytes())
    (tmp_path / "plain").write_bytes(raw)
    assert np.array_equal(read_idx_images(tmp_path / "plain").pixels, imgs.pixels)


def test_pgm_round_trip(tmp_path):
    img = np.linspace(0, 1, 12).reshape(3, 4)
    write_pgm(tmp_path / "a.pgm", img)
    data = (tmp_path / "a.pgm").read_bytes()
    assert data.startswith(b"P5\n4 3\n255\n")
    assert np.max(np.abs(read_pgm(tmp_path / "a.pgm") - img)) <= 0.5 / 255


def test_all_zero_image():
    # noiseless measurement of a blank image gives y = 0
    prior = image_prior(784, 0.01)
    recon, err = recover_image(np.zeros((28, 28), dtype=np.uint8), 150, prior, sigma=0.0)
    assert np.all(recon == 0) and err == 0.0


def test_single_bright_pixel_beats_zero_baseline():
    img = np.zeros((28, 28), dtype=np.uint8)
    img[14, 9] = 255
    recon, err = recover_image(img, q_measurements=150, sigma=0.01, seed=4)
    assert recon.shape == (28, 28)
    assert recon[14, 9] > 1e-6
    assert err < mse(np.zeros(784), img.reshape(-1) / 255.0)


def test_q_bounds():
    with pytest.raises(ValueError):
        recover_image(np.zeros((28, 28), dtype=np.uint8), q_measurements=785)


def test_mse_non_increasing_in_measurements():
    # 20 images at q in {100, 150, 300}; at most one violation per consecutive pair
    images = read_idx_images(FIXTURE).pixels[:20]
    errs = np.array([[recover_image(img, q, seed=500 + i)[1] for q in (100, 150, 300)]
                     for i, img in enumerate(images)])
    v1 = int(np.sum(errs[:, 1] > errs[:, 0]))
    v2 = int(np.sum(errs[:, 2] > errs[:, 1]))
    print(f"mean MSE by q: {errs.mean(axis=0)}, violations {v1}, {v2}")
    assert errs[:, 1].mean() <= errs[:, 0].mean()
    assert errs[:, 2].mean() <= errs[:, 1].mean()
    assert v1 <= 1 and v2 <= 1
