"""Loader, normalization, baseline-augmentation, and subsetting tests.

Binary-format tests run against synthetic fixture files written in the
exact on-disk layouts; checks that need the real full-size datasets are
skipped unless the files are present under $ENTAUG_DATA_DIR.
"""

import os
import struct
from pathlib import Path

import numpy as np
import pytest

from entaug import data as data_mod
from entaug import rng as rng_mod
from entaug.errors import IngestError, InvalidInputError
from entaug.image import Image


def write_mnist_fixture(directory: Path, n_train=20, n_test=10, seed=0):
    rng = np.random.default_rng(seed)
    tr_x = rng.integers(0, 256, size=(n_train, 28, 28, 1), dtype=np.uint8)
    tr_y = np.arange(n_train, dtype=np.int64) % 10
    te_x = rng.integers(0, 256, size=(n_test, 28, 28, 1), dtype=np.uint8)
    te_y = np.arange(n_test, dtype=np.int64) % 10
    data_mod.write_idx_images(directory / data_mod.MNIST_FILES["train_images"], tr_x)
    data_mod.write_idx_labels(directory / data_mod.MNIST_FILES["train_labels"], tr_y)
    data_mod.write_idx_images(directory / data_mod.MNIST_FILES["test_images"], te_x)
    data_mod.write_idx_labels(directory / data_mod.MNIST_FILES["test_labels"], te_y)
    return tr_x, tr_y, te_x, te_y


def write_cifar_fixture(directory: Path, per_file=3, seed=0):
    rng = np.random.default_rng(seed)
    all_images, all_labels = [], []
    for name in data_mod.CIFAR_TRAIN_FILES + (data_mod.CIFAR_TEST_FILE,):
        images = rng.integers(0, 256, size=(per_file, 32, 32, 3), dtype=np.uint8)
        labels = rng.integers(0, 10, size=per_file).astype(np.int64)
        if name == data_mod.CIFAR_TRAIN_FILES[0]:
            labels[0] = 7  # known label byte for the record-0 walkthrough
        (directory / name).write_bytes(data_mod.serialize_cifar_records(images, labels))
        all_images.append(images)
        all_labels.append(labels)
    return all_images, all_labels


class TestIdx:
    def test_round_trip(self, tmp_path):
        tr_x, tr_y, te_x, te_y = write_mnist_fixture(tmp_path)
        train, test = data_mod.load_mnist(tmp_path)
        np.testing.assert_array_equal(train.images, tr_x)
        np.testing.assert_array_equal(train.labels, tr_y)
        np.testing.assert_array_equal(test.images, te_x)
        np.testing.assert_array_equal(test.labels, te_y)
        assert train.k == 10 and train.images.shape[1:] == (28, 28, 1)

    def test_record_zero_label(self, tmp_path):
        write_mnist_fixture(tmp_path)
        train, _ = data_mod.load_mnist(tmp_path)
        assert int(train.labels[0]) == 0 and int(train.labels[7]) == 7

    def test_dual_parser_agreement(self, tmp_path):
        write_mnist_fixture(tmp_path)
        train, _ = data_mod.load_mnist(tmp_path)
        blob = (tmp_path / data_mod.MNIST_FILES["train_images"]).read_bytes()
        magic, n, rows, cols = struct.unpack(">IIII", blob[:16])
        assert magic == 0x00000803
        # independent parse of image 0: byte-by-byte, row-major
        first = [blob[16 + i] for i in range(rows * cols)]
        np.testing.assert_array_equal(np.array(first, dtype=np.uint8).reshape(rows, cols), train.images[0, :, :, 0])

    def test_bad_magic(self, tmp_path):
        write_mnist_fixture(tmp_path)
        path = tmp_path / data_mod.MNIST_FILES["train_images"]
        blob = bytearray(path.read_bytes())
        blob[3] = 0x99
        path.write_bytes(bytes(blob))
        with pytest.raises(IngestError, match="magic"):
            data_mod.load_mnist(tmp_path)

    def test_truncated_file_gives_no_partial_dataset(self, tmp_path):
        write_mnist_fixture(tmp_path)
        path = tmp_path / data_mod.MNIST_FILES["train_images"]
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(IngestError, match="train-images"):
            data_mod.load_mnist(tmp_path)

    def test_missing_file(self, tmp_path):
        write_mnist_fixture(tmp_path)
        (tmp_path / data_mod.MNIST_FILES["test_labels"]).unlink()
        with pytest.raises(IngestError, match="missing"):
            data_mod.load_mnist(tmp_path)


class TestCifar:
    def test_round_trip_bytes(self, tmp_path):
        write_cifar_fixture(tmp_path)
        train, test = data_mod.load_cifar10(tmp_path)
        assert train.k == 10 and train.images.shape[1:] == (32, 32, 3)
        # loader output re-serialized equals the on-disk bytes, file by file
        offset = 0
        for name in data_mod.CIFAR_TRAIN_FILES:
            original = (tmp_path / name).read_bytes()
            count = len(original) // data_mod.CIFAR_RECORD_BYTES
            part = data_mod.serialize_cifar_records(
                train.images[offset : offset + count], train.labels[offset : offset + count]
            )
            assert part == original
            offset += count
        assert data_mod.serialize_cifar_records(test.images, test.labels) == (tmp_path / data_mod.CIFAR_TEST_FILE).read_bytes()

    def test_record_zero_label_byte(self, tmp_path):
        write_cifar_fixture(tmp_path)
        train, _ = data_mod.load_cifar10(tmp_path)
        assert int(train.labels[0]) == 7

    def test_planar_layout_dual_parse(self, tmp_path):
        write_cifar_fixture(tmp_path)
        train, _ = data_mod.load_cifar10(tmp_path)
        blob = (tmp_path / data_mod.CIFAR_TRAIN_FILES[0]).read_bytes()
        record = blob[: data_mod.CIFAR_RECORD_BYTES]
        y, x, c = 13, 21, 2  # blue plane starts at 1 + 2048
        independent = record[1 + c * 1024 + y * 32 + x]
        assert independent == int(train.images[0, y, x, c])
        checksum = sum(record[1:])
        assert checksum == int(train.images[0].transpose(2, 0, 1).astype(np.int64).sum())

    def test_truncated_batch(self, tmp_path):
        write_cifar_fixture(tmp_path)
        path = tmp_path / "data_batch_2.bin"
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(IngestError, match="data_batch_2"):
            data_mod.load_cifar10(tmp_path)

    def test_missing_batch(self, tmp_path):
        write_cifar_fixture(tmp_path)
        (tmp_path / "data_batch_5.bin").unlink()
        with pytest.raises(IngestError, match="data_batch_5"):
            data_mod.load_cifar10(tmp_path)


class TestNormalize:
    def test_full_scale(self):
        px = np.full((2, 2, 1), 255, np.uint8)
        out = data_mod.normalize(px, np.zeros(1), np.ones(1))
        np.testing.assert_allclose(out, 1.0)

    def test_mean_centering(self):
        mean = np.array([0.4])
        px = np.full((2, 2, 1), int(255 * 0.4), np.uint8)
        out = data_mod.normalize(px, mean, np.array([0.7]))
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_zero_std_rejected(self):
        with pytest.raises(InvalidInputError):
            data_mod.normalize(np.zeros((1, 1, 1), np.uint8), np.zeros(1), np.zeros(1))

    def test_loader_stats_match_streaming_oracle(self, tmp_path):
        write_cifar_fixture(tmp_path)
        train, _ = data_mod.load_cifar10(tmp_path)
        for c in range(3):
            total, count = 0.0, 0
            for img in train.images:
                for v in img[:, :, c].ravel():
                    total += v / 255.0
                    count += 1
            assert train.mean[c] == pytest.approx(total / count, abs=1e-6)


class TestBaselineAugment:
    def test_center_crop_is_identity(self):
        img = Image(np.random.default_rng(0).integers(0, 256, (8, 8, 3), dtype=np.uint8))
        out = data_mod.crop_flip(img, 4, 4, flip=False)
        np.testing.assert_array_equal(out.pixels, img.pixels)

    def test_double_flip_restores(self):
        img = Image(np.random.default_rng(1).integers(0, 256, (8, 8, 1), dtype=np.uint8))
        once = data_mod.crop_flip(img, 4, 4, flip=True)
        twice = data_mod.crop_flip(once, 4, 4, flip=True)
        np.testing.assert_array_equal(twice.pixels, img.pixels)

    def test_corner_offset_matches_padded_index_oracle(self):
        rng = np.random.default_rng(2)
        img = Image(rng.integers(0, 256, (6, 7, 1), dtype=np.uint8))
        out = data_mod.crop_flip(img, 0, 0, flip=False)
        pad = 4
        padded = np.zeros((6 + 2 * pad, 7 + 2 * pad, 1), np.uint8)
        padded[pad : pad + 6, pad : pad + 7] = img.pixels
        for r in range(6):
            for c in range(7):
                assert out.pixels[r, c, 0] == padded[r, c, 0]

    def test_random_path_preserves_dims_and_range(self):
        img = Image(np.random.default_rng(3).integers(0, 256, (10, 12, 3), dtype=np.uint8))
        for i in range(20):
            out = data_mod.baseline_augment(img, rng_mod.baseline_stream(0, 0, i))
            assert out.pixels.shape == img.pixels.shape
            assert out.pixels.dtype == np.uint8

    def test_offset_bounds_checked(self):
        img = Image(np.zeros((4, 4, 1), np.uint8))
        with pytest.raises(InvalidInputError):
            data_mod.crop_flip(img, 9, 0, False)


def make_dataset(n=40, k=10, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(n, 4, 4, 1), dtype=np.uint8)
    labels = np.tile(np.arange(k), n // k + 1)[:n].astype(np.int64)
    return data_mod.Dataset(images, labels, k, "train", np.array([0.5]), np.array([0.25]))


class TestSubset:
    def test_full_subset_is_permutation_equal(self):
        ds = make_dataset(40)
        sub = data_mod.subset(ds, 40, seed=3)
        np.testing.assert_array_equal(np.sort(sub.labels), np.sort(ds.labels))
        np.testing.assert_array_equal(sub.images, ds.images)

    def test_one_per_class(self):
        ds = make_dataset(40)
        sub = data_mod.subset(ds, 10, seed=1)
        np.testing.assert_array_equal(np.sort(sub.labels), np.arange(10))

    def test_stratified_counts_match_counting_oracle(self):
        ds = make_dataset(40)
        sub = data_mod.subset(ds, 25, seed=2)
        counts = {c: 0 for c in range(10)}
        for label in sub.labels:
            counts[int(label)] += 1
        for c in range(10):
            expected = 25 // 10 + (1 if c < 25 % 10 else 0)
            assert counts[c] == expected

    def test_deterministic(self):
        ds = make_dataset(40)
        a = data_mod.subset(ds, 20, seed=9)
        b = data_mod.subset(ds, 20, seed=9)
        np.testing.assert_array_equal(a.images, b.images)

    def test_oversize_rejected(self):
        ds = make_dataset(40)
        with pytest.raises(InvalidInputError):
            data_mod.subset(ds, 41, seed=0)


class TestSynth:
    def test_generation_is_deterministic(self):
        a = data_mod.generate_synth(50, 20, seed=5)
        b = data_mod.generate_synth(50, 20, seed=5)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_served_through_idx_loader(self, tmp_path):
        train, test = data_mod.get_dataset("synth", tmp_path)
        assert len(train) == data_mod.SYNTH_TRAIN_SIZE
        assert len(test) == data_mod.SYNTH_TEST_SIZE
        assert train.k == 10 and train.images.shape[1:] == (28, 28, 1)
        for c in range(10):
            assert int((train.labels == c).sum()) == data_mod.SYNTH_TRAIN_SIZE // 10
        # second call reads the already-materialized files
        again, _ = data_mod.get_dataset("synth", tmp_path)
        np.testing.assert_array_equal(again.images, train.images)

    def test_unknown_dataset_rejected(self, tmp_path):
        with pytest.raises(InvalidInputError):
            data_mod.get_dataset("imagenet", tmp_path)


def _real_dir(name):
    env = os.environ.get("ENTAUG_DATA_DIR")
    return Path(env) / name if env else None


@pytest.mark.skipif(
    _real_dir("cifar10") is None or not (_real_dir("cifar10") / "data_batch_1.bin").is_file(),
    reason="real CIFAR-10 batches not present",
)
def test_real_cifar_label_histogram():
    train, test = data_mod.load_cifar10(_real_dir("cifar10"))
    assert len(train) == 50000 and len(test) == 10000
    for c in range(10):
        assert int((train.labels == c).sum()) == 5000


@pytest.mark.skipif(
    _real_dir("mnist") is None or not (_real_dir("mnist") / data_mod.MNIST_FILES["train_images"]).is_file(),
    reason="real MNIST files not present",
)
def test_real_mnist_counts():
    train, test = data_mod.load_mnist(_real_dir("mnist"))
    assert len(train) == 60000 and len(test) == 10000
