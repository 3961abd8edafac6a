import struct

import numpy as np
import pytest

from robustloss.data import (
    Dataset,
    inject_symmetric_noise,
    load_csv,
    load_dataset,
    load_idx,
    save_dataset,
    save_idx,
    split_per_class,
    standardize,
    synth_blobs,
)
from robustloss.errors import ConfigError, ParseError
from robustloss.numerics import RngStream

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


def write_idx_fixture(tmp_path, pixels, labels, magic_override=None, truncate_pixels=0):
    """Hand-built big-endian IDX pair: pixels is (n, rows, cols) uint8."""
    n, rows, cols = pixels.shape
    image_path = tmp_path / "images.idx"
    label_path = tmp_path / "labels.idx"
    body = pixels.tobytes()
    if truncate_pixels:
        body = body[:-truncate_pixels]
    with open(image_path, "wb") as f:
        f.write(struct.pack(">4I", magic_override or IMAGE_MAGIC, n, rows, cols))
        f.write(body)
    with open(label_path, "wb") as f:
        f.write(struct.pack(">2I", LABEL_MAGIC, len(labels)))
        f.write(bytes(labels))
    return image_path, label_path


class TestIdx:
    def test_hand_built_fixture_round_trip(self, tmp_path):
        pixels = np.arange(16, dtype=np.uint8).reshape(4, 2, 2)
        image_path, label_path = write_idx_fixture(tmp_path, pixels, [3, 1, 0, 2])
        ds = load_idx(image_path, label_path)
        assert ds.features.shape == (4, 4)
        np.testing.assert_array_equal(ds.labels, [3, 1, 0, 2])
        np.testing.assert_allclose(ds.features, pixels.reshape(4, 4) / 255.0)
        assert ds.n_classes == 4
        assert not ds.noise_mask.any()

    def test_wrong_magic_is_named_in_the_error(self, tmp_path):
        pixels = np.zeros((2, 2, 2), dtype=np.uint8)
        image_path, label_path = write_idx_fixture(
            tmp_path, pixels, [0, 1], magic_override=0x00000802
        )
        with pytest.raises(ParseError, match="0x00000803"):
            load_idx(image_path, label_path)

    def test_truncated_pixels_reports_byte_offset(self, tmp_path):
        pixels = np.zeros((2, 2, 2), dtype=np.uint8)
        image_path, label_path = write_idx_fixture(tmp_path, pixels, [0, 1], truncate_pixels=3)
        with pytest.raises(ParseError, match="byte 16"):
            load_idx(image_path, label_path)

    def test_count_mismatch_rejected(self, tmp_path):
        pixels = np.zeros((2, 2, 2), dtype=np.uint8)
        image_path, label_path = write_idx_fixture(tmp_path, pixels, [0, 1, 1])
        with pytest.raises(ParseError, match="does not match"):
            load_idx(image_path, label_path)

    def test_save_then_load_is_identity(self, tmp_path):
        g = RngStream(40).generator
        features = g.integers(0, 256, (6, 9)).astype(np.float64) / 255.0
        ds = Dataset.from_labeled(features, g.integers(0, 4, 6))
        save_idx(ds, tmp_path / "i.idx", tmp_path / "l.idx", shape=(3, 3))
        back = load_idx(tmp_path / "i.idx", tmp_path / "l.idx")
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)


class TestCsv:
    def test_three_row_fixture_round_trip(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("x0,label,x1\n1.5,0,-2.0\n0.25,1,3.0\n-1.0,2,0.5\n")
        ds = load_csv(path, "label")
        np.testing.assert_array_equal(ds.labels, [0, 1, 2])
        np.testing.assert_allclose(ds.features, [[1.5, -2.0], [0.25, 3.0], [-1.0, 0.5]])

    def test_missing_label_column_is_config_error(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ConfigError):
            load_csv(path, "label")

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("")
        with pytest.raises(ParseError):
            load_csv(path, "label")

    def test_ragged_row_reports_line_number(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("x,label\n1.0,0\n2.0\n")
        with pytest.raises(ParseError, match=":3"):
            load_csv(path, "label")

    def test_non_numeric_cell_reports_line_number(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("x,label\noops,0\n")
        with pytest.raises(ParseError, match=":2"):
            load_csv(path, "label")

    def test_fractional_label_rejected(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("x,label\n1.0,0.5\n")
        with pytest.raises(ParseError):
            load_csv(path, "label")


class TestSynthBlobs:
    def test_row_count_is_exact(self):
        ds = synth_blobs(5, 7, 3, 4.0, RngStream(41))
        assert ds.n_examples == 35
        assert ds.n_features == 3
        np.testing.assert_array_equal(np.bincount(ds.labels), [7] * 5)

    def test_zero_separation_is_chance_level(self):
        ds = synth_blobs(5, 400, 6, 0.0, RngStream(42))
        acc = _nearest_class_mean_accuracy(ds)
        assert abs(acc - 0.2) < 0.05

    def test_wide_separation_is_nearly_separable(self):
        ds = synth_blobs(10, 200, 20, 20.0, RngStream(43))
        assert _nearest_class_mean_accuracy(ds) > 0.99


def _nearest_class_mean_accuracy(ds):
    means = np.stack([ds.features[ds.labels == c].mean(axis=0) for c in range(ds.n_classes)])
    d2 = ((ds.features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return float((d2.argmin(axis=1) == ds.labels).mean())


class TestStandardize:
    def test_train_columns_become_standard(self):
        ds = synth_blobs(3, 200, 5, 3.0, RngStream(44))
        out, _ = standardize(ds)
        np.testing.assert_allclose(out.features.mean(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.features.std(axis=0), 1.0, atol=1e-10)

    def test_constant_column_maps_to_zero(self):
        features = np.column_stack([np.full(50, 3.7), np.arange(50, dtype=float)])
        ds = Dataset.from_labeled(features, np.zeros(50, dtype=int), n_classes=2)
        out, _ = standardize(ds)
        np.testing.assert_array_equal(out.features[:, 0], 0.0)
        assert np.isfinite(out.features).all()

    def test_others_use_train_statistics(self):
        train = synth_blobs(3, 300, 4, 2.0, RngStream(45))
        test = synth_blobs(3, 300, 4, 2.0, RngStream(46))
        _, [test_out] = standardize(train, [test])
        own, _ = standardize(test)
        assert not np.allclose(test_out.features, own.features)
        assert abs(test_out.features.mean()) > 1e-6  # train stats, not its own

    def test_idempotent_on_its_own_output(self):
        ds = synth_blobs(3, 200, 5, 3.0, RngStream(47))
        once, _ = standardize(ds)
        twice, _ = standardize(once)
        np.testing.assert_allclose(twice.features, once.features, atol=1e-12)


class TestNoiseInjection:
    def test_zero_eta_is_identity(self):
        ds = synth_blobs(4, 50, 3, 2.0, RngStream(48))
        out = inject_symmetric_noise(ds, 0.0, RngStream(49))
        np.testing.assert_array_equal(out.labels, ds.labels)
        assert not out.noise_mask.any()

    def test_masked_count_is_exact(self):
        ds = synth_blobs(4, 250, 3, 2.0, RngStream(50))
        out = inject_symmetric_noise(ds, 0.4, RngStream(51))
        assert int(out.noise_mask.sum()) == 400
        np.testing.assert_array_equal(out.labels[~out.noise_mask], ds.labels[~out.noise_mask])

    def test_full_resampling_flips_nine_tenths(self):
        ds = synth_blobs(10, 1000, 2, 2.0, RngStream(52))
        out = inject_symmetric_noise(ds, 1.0, RngStream(53))
        flipped = float((out.labels != out.clean_labels).mean())
        assert abs(flipped - 0.9) < 0.01
        assert out.noise_mask.all()

    def test_features_and_clean_labels_untouched(self):
        ds = synth_blobs(4, 100, 3, 2.0, RngStream(54))
        out = inject_symmetric_noise(ds, 0.5, RngStream(55))
        np.testing.assert_array_equal(out.features, ds.features)
        np.testing.assert_array_equal(out.clean_labels, ds.clean_labels)

    def test_second_injection_unions_the_mask(self):
        ds = synth_blobs(4, 100, 3, 2.0, RngStream(56))
        once = inject_symmetric_noise(ds, 0.3, RngStream(57))
        twice = inject_symmetric_noise(once, 0.3, RngStream(58))
        assert twice.noise_mask.sum() >= once.noise_mask.sum()
        np.testing.assert_array_equal(twice.clean_labels, ds.clean_labels)

    def test_eta_outside_unit_interval_rejected(self):
        ds = synth_blobs(4, 10, 3, 2.0, RngStream(59))
        with pytest.raises(ConfigError):
            inject_symmetric_noise(ds, 1.2, RngStream(0))


class TestSplitAndPersist:
    def test_split_per_class_counts(self):
        ds = synth_blobs(4, 30, 3, 2.0, RngStream(60))
        train, test = split_per_class(ds, 20)
        np.testing.assert_array_equal(np.bincount(train.labels), [20] * 4)
        np.testing.assert_array_equal(np.bincount(test.labels), [10] * 4)
        assert train.n_examples + test.n_examples == ds.n_examples

    def test_split_needs_enough_rows(self):
        ds = synth_blobs(4, 10, 3, 2.0, RngStream(61))
        with pytest.raises(ConfigError):
            split_per_class(ds, 10)

    def test_save_load_round_trip(self, tmp_path):
        ds = inject_symmetric_noise(
            synth_blobs(4, 50, 3, 2.0, RngStream(62)), 0.25, RngStream(63)
        )
        save_dataset(ds, tmp_path / "ds", manifest_extra={"eta": 0.25})
        back = load_dataset(tmp_path / "ds")
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)
        np.testing.assert_array_equal(back.clean_labels, ds.clean_labels)
        np.testing.assert_array_equal(back.noise_mask, ds.noise_mask)
        assert back.n_classes == 4

    def test_load_requires_manifest(self, tmp_path):
        with pytest.raises(ParseError):
            load_dataset(tmp_path)


class TestDatasetValidation:
    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            Dataset.from_labeled(np.zeros((3, 2)), [0, 1, 5], n_classes=3)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Dataset.from_labeled(np.zeros((3, 2)), [0, 1])

    def test_non_finite_features_rejected(self):
        features = np.zeros((2, 2))
        features[0, 0] = np.nan
        with pytest.raises(ValueError):
            Dataset.from_labeled(features, [0, 1])
