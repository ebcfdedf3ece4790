import gzip
import struct

import numpy as np
import pytest

from bcvnn.data import (IDX_IMAGES_MAGIC, LIFT_DFT, LIFT_ZERO_IMAG, Dataset,
                        SyntheticSpec, generate_synthetic, lift_images,
                        load_dataset, load_mnist_complex, read_csv,
                        read_idx_images, read_idx_labels, save_dataset,
                        write_csv, write_idx_images, write_idx_labels)
from bcvnn.errors import ConfigError, FormatError
from bcvnn.tensor import ComplexTensor


class TestIdx:
    def test_image_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        images = rng.integers(0, 256, size=(5, 7, 6), dtype=np.uint8)
        path = tmp_path / "imgs.idx"
        write_idx_images(path, images)
        assert np.array_equal(read_idx_images(path), images)

    def test_label_round_trip(self, tmp_path):
        labels = np.array([0, 3, 9, 1], dtype=np.uint8)
        path = tmp_path / "labels.idx"
        write_idx_labels(path, labels)
        assert np.array_equal(read_idx_labels(path), labels)

    def test_gzipped_variant(self, tmp_path):
        rng = np.random.default_rng(1)
        images = rng.integers(0, 256, size=(3, 4, 4), dtype=np.uint8)
        plain = tmp_path / "imgs.idx"
        write_idx_images(plain, images)
        packed = tmp_path / "imgs.idx.gz"
        packed.write_bytes(gzip.compress(plain.read_bytes()))
        assert np.array_equal(read_idx_images(packed), images)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(struct.pack(">4I", 0xDEADBEEF, 1, 2, 2) + b"\x00" * 4)
        with pytest.raises(FormatError, match="magic"):
            read_idx_images(path)

    def test_images_magic_rejected_for_labels(self, tmp_path):
        path = tmp_path / "imgs.idx"
        write_idx_images(path, np.zeros((1, 2, 2), dtype=np.uint8))
        with pytest.raises(FormatError):
            read_idx_labels(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.idx"
        path.write_bytes(struct.pack(">2I", IDX_IMAGES_MAGIC, 1))
        with pytest.raises(FormatError, match="header"):
            read_idx_images(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "cut.idx"
        write_idx_images(path, np.zeros((2, 3, 3), dtype=np.uint8))
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(FormatError, match="payload"):
            read_idx_images(path)

    def test_corrupt_gzip(self, tmp_path):
        path = tmp_path / "broken.gz"
        path.write_bytes(b"\x1f\x8b" + b"junkjunkjunk")
        with pytest.raises(FormatError, match="gzip"):
            read_idx_images(path)

    def test_count_mismatch_between_files(self, tmp_path):
        imgs = tmp_path / "i.idx"
        lbls = tmp_path / "l.idx"
        write_idx_images(imgs, np.zeros((3, 2, 2), dtype=np.uint8))
        write_idx_labels(lbls, np.array([1, 2], dtype=np.uint8))
        with pytest.raises(FormatError, match="count"):
            load_mnist_complex(imgs, lbls)


def naive_dft2(plane):
    """Double-loop O(n^4) 2-D DFT, the independent transform oracle."""
    h, w = plane.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            total = 0.0 + 0.0j
            for y in range(h):
                for x in range(w):
                    angle = -2.0 * np.pi * (u * y / h + v * x / w)
                    total += plane[y, x] * np.exp(1j * angle)
            out[u, v] = total
    return out


class TestLift:
    def test_zero_imag_mode(self):
        pixels = np.array([[[0, 255], [51, 102]]], dtype=np.uint8)
        t = lift_images(pixels, LIFT_ZERO_IMAG)
        assert t.shape == (1, 1, 2, 2)
        assert np.allclose(t.real[0, 0], [[0.0, 1.0], [0.2, 0.4]])
        assert np.all(t.imag == 0.0)

    def test_zero_image_stays_zero(self):
        t = lift_images(np.zeros((2, 4, 4), dtype=np.uint8), LIFT_ZERO_IMAG)
        assert np.all(t.real == 0.0) and np.all(t.imag == 0.0)

    def test_dft_of_constant_concentrates_at_dc(self):
        pixels = np.full((1, 4, 4), 255, dtype=np.uint8)
        t = lift_images(pixels, LIFT_DFT)
        assert t.real[0, 0, 0, 0] == pytest.approx(16.0)  # c*H*W with c=1.0
        rest = t.real[0, 0].copy()
        rest[0, 0] = 0.0
        assert np.allclose(rest, 0.0, atol=1e-12)
        assert np.allclose(t.imag, 0.0, atol=1e-12)

    def test_dft_matches_naive_oracle(self):
        rng = np.random.default_rng(2)
        pixels = rng.integers(0, 256, size=(3, 5, 6), dtype=np.uint8)
        t = lift_images(pixels, LIFT_DFT)
        for n in range(3):
            want = naive_dft2(pixels[n].astype(np.float64) / 255.0)
            got = t.real[n, 0] + 1j * t.imag[n, 0]
            assert np.max(np.abs(got - want)) <= 1e-9

    def test_dft_preserves_energy(self):
        # Parseval: sum |F|^2 == H*W * sum |f|^2
        rng = np.random.default_rng(3)
        pixels = rng.integers(0, 256, size=(4, 8, 8), dtype=np.uint8)
        t = lift_images(pixels, LIFT_DFT)
        spatial = np.sum((pixels.astype(np.float64) / 255.0) ** 2, axis=(1, 2))
        spectral = np.sum(t.real ** 2 + t.imag ** 2, axis=(1, 2, 3))
        assert np.allclose(spectral, 64.0 * spatial, rtol=1e-6)

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            lift_images(np.zeros((1, 2, 2), dtype=np.uint8), "polar")


class TestSynthetic:
    def test_counts_and_labels(self):
        ds = generate_synthetic(SyntheticSpec(classes=4, samples_per_class=9,
                                              feature_shape=(3,), seed=5))
        assert len(ds) == 36
        assert ds.classes == 4
        assert ds.feature_shape == (3,)
        for c in range(4):
            assert int((ds.labels == c).sum()) == 9

    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(seed=7))
        b = generate_synthetic(SyntheticSpec(seed=7))
        assert np.array_equal(a.images.real, b.images.real)
        assert np.array_equal(a.images.imag, b.images.imag)
        c = generate_synthetic(SyntheticSpec(seed=8))
        assert not np.array_equal(a.images.real, c.images.real)

    def test_classes_are_separable_by_centroid(self):
        # nearest-centroid in the complex plane should nail well-separated blobs
        ds = generate_synthetic(SyntheticSpec(classes=3, samples_per_class=40,
                                              feature_shape=(8,), seed=0,
                                              class_separation=4.0))
        z = ds.images.real + 1j * ds.images.imag
        centroids = np.stack([z[ds.labels == c].mean(axis=0) for c in range(3)])
        dist = np.abs(z[:, None, :] - centroids[None, :, :]).sum(axis=2)
        assert (dist.argmin(axis=1) == ds.labels).mean() > 0.97

    def test_multidim_feature_shape(self):
        ds = generate_synthetic(SyntheticSpec(feature_shape=(2, 3, 3), seed=1))
        assert ds.images.shape == (150, 2, 3, 3)

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            SyntheticSpec(classes=1)
        with pytest.raises(ConfigError):
            SyntheticSpec(samples_per_class=0)
        with pytest.raises(ConfigError):
            SyntheticSpec(class_separation=0.0)


class TestDataset:
    def test_list_inputs_are_stacked(self):
        rng = np.random.default_rng(4)
        parts = [ComplexTensor(rng.normal(size=(3,)), rng.normal(size=(3,)))
                 for _ in range(4)]
        ds = Dataset(parts, [0, 1, 0, 1], 2)
        assert ds.images.shape == (4, 3)

    def test_take(self):
        ds = generate_synthetic(SyntheticSpec(seed=0))
        sub = ds.take([0, 5, 10])
        assert len(sub) == 3
        assert np.array_equal(sub.labels, ds.labels[[0, 5, 10]])
        assert np.array_equal(sub.images.real, ds.images.real[[0, 5, 10]])

    def test_validation(self):
        images = ComplexTensor(np.zeros((3, 2)), np.zeros((3, 2)))
        with pytest.raises(ConfigError):
            Dataset(images, [0, 1], 2)  # count mismatch
        with pytest.raises(ConfigError):
            Dataset(images, [0, 1, 5], 2)  # label out of range
        with pytest.raises(ConfigError):
            Dataset(images, [0, 1, 0], 1)  # too few classes

    def test_round_trip_through_directory(self, tmp_path):
        ds = generate_synthetic(SyntheticSpec(classes=3, samples_per_class=5,
                                              feature_shape=(2, 2), seed=9))
        save_dataset(tmp_path / "ds", ds)
        back = load_dataset(tmp_path / "ds")
        assert back.classes == 3
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.images.real, ds.images.real)
        assert np.array_equal(back.images.imag, ds.images.imag)

    def test_load_requires_class_comment(self, tmp_path):
        ds = generate_synthetic(SyntheticSpec(seed=0))
        save_dataset(tmp_path / "ds", ds)
        labels_path = tmp_path / "ds" / "labels.csv"
        lines = [l for l in labels_path.read_text().splitlines()
                 if not l.startswith("# classes")]
        labels_path.write_text("\n".join(lines) + "\n")
        with pytest.raises(FormatError):
            load_dataset(tmp_path / "ds")


class TestCsv:
    def test_round_trip_with_comments(self, tmp_path):
        path = tmp_path / "t.csv"
        rows = [("1", "a,b", "0.5"), ("2", 'quo"te', repr(1 / 3))]
        write_csv(path, ("idx", "text", "value"), rows, timestamp=False,
                  comments=("classes: 3", "note: fixture"))
        columns, back, comments = read_csv(path)
        assert columns == ["idx", "text", "value"]
        assert [tuple(r) for r in back] == rows
        assert comments == ["classes: 3", "note: fixture"]
        assert float(back[1][2]) == 1 / 3  # repr() floats survive exactly

    def test_timestamp_line(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, ("a",), [("1",)], timestamp=True)
        first = path.read_text().splitlines()[0]
        assert first.startswith("# generated: ")
        _, _, comments = read_csv(path)
        assert any(c.startswith("generated:") for c in comments)

    def test_no_timestamp_reruns_identical(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        rows = [("1", "2.5")]
        write_csv(a, ("x", "y"), rows, timestamp=False)
        write_csv(b, ("x", "y"), rows, timestamp=False)
        assert a.read_bytes() == b.read_bytes()

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(FormatError):
            read_csv(path)
