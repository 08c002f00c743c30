import numpy as np
import pytest

from multicount.data import (
    Sample,
    SceneConfig,
    derive_seed,
    flip_augment,
    load_annotations,
    random_crop,
    read_manifest,
    save_annotations,
    synth_dataset,
    synth_scene,
    write_dataset,
)
from multicount.groundtruth import (
    DensityConfig,
    MaskConfig,
    PointAnnotationSet,
    render_density_maps,
    render_pseudo_masks,
)


class TestAnnotations:
    def test_box_record_becomes_center(self, tmp_path):
        path = tmp_path / "ann.txt"
        path.write_text("0,10,10,30,50\n")
        ann = load_annotations(path, num_classes=1)
        assert ann.classes[0] == [(20.0, 30.0)]

    def test_empty_file_gives_empty_lists(self, tmp_path):
        path = tmp_path / "ann.txt"
        path.write_text("")
        ann = load_annotations(path, num_classes=3)
        assert ann.counts() == [0, 0, 0]

    def test_mixed_records_round_trip(self, tmp_path):
        path = tmp_path / "ann.txt"
        path.write_text("0,5.25,6.5\n1,10,10,20,20\n0,1,2\n")
        ann = load_annotations(path, num_classes=2)
        assert ann.classes[0] == [(5.25, 6.5), (1.0, 2.0)]
        assert ann.classes[1] == [(15.0, 15.0)]

        back = tmp_path / "back.txt"
        save_annotations(back, ann)
        again = load_annotations(back, num_classes=2)
        assert again.classes == ann.classes

    def test_round_trip_preserves_arbitrary_floats(self, tmp_path):
        rng = np.random.default_rng(3)
        classes = [[(float(rng.uniform(0, 100)), float(rng.uniform(0, 100)))
                    for _ in range(7)] for _ in range(2)]
        ann = PointAnnotationSet("x", classes)
        path = tmp_path / "ann.txt"
        save_annotations(path, ann)
        assert load_annotations(path, 2).classes == classes

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "ann.txt"
        path.write_text("0,1,2\nbogus line\n")
        with pytest.raises(ValueError, match=":2"):
            load_annotations(path, num_classes=1)

    def test_wrong_field_count_rejected(self, tmp_path):
        path = tmp_path / "ann.txt"
        path.write_text("0,1,2,3\n")
        with pytest.raises(ValueError, match="fields"):
            load_annotations(path, num_classes=1)

    def test_out_of_bounds_point_rejected_with_extent(self, tmp_path):
        path = tmp_path / "ann.txt"
        path.write_text("0,200,5\n")
        with pytest.raises(ValueError, match="outside"):
            load_annotations(path, num_classes=1, image_extent=(64, 64))

    def test_class_map_merges_categories(self, tmp_path):
        path = tmp_path / "ann.txt"
        path.write_text("4,1,1\n7,2,2\n")
        ann = load_annotations(path, num_classes=2,
                               class_map={4: 0, 7: 1})
        assert ann.counts() == [1, 1]


class TestSynthScene:
    def test_zero_counts_give_pure_noise(self):
        cfg = SceneConfig(count_ranges=((0, 0), (0, 0)), seed=5)
        sample = synth_scene(cfg)
        assert sample.annotations.counts() == [0, 0]
        assert sample.image.shape == (3, 128, 128)
        assert sample.image.min() >= 0.0 and sample.image.max() <= 1.0

    def test_fixed_seed_is_bitwise_deterministic(self):
        cfg = SceneConfig(seed=42)
        a, b = synth_scene(cfg), synth_scene(cfg)
        assert np.array_equal(a.image, b.image)
        assert a.annotations.classes == b.annotations.classes

    def test_counts_fall_in_configured_ranges(self):
        cfg = SceneConfig()
        for seed in range(100):
            sample = synth_scene(SceneConfig(seed=seed))
            for k, (lo, hi) in enumerate(cfg.count_ranges):
                assert lo <= sample.annotations.counts()[k] <= hi

    def test_points_stay_in_bounds(self):
        for seed in range(20):
            sample = synth_scene(SceneConfig(seed=seed))
            sample.annotations.validate_bounds((128, 128))

    def test_values_stay_in_unit_interval(self):
        for seed in range(10):
            img = synth_scene(SceneConfig(seed=seed)).image
            assert img.min() >= 0.0 and img.max() <= 1.0

    def test_dataset_uses_derived_per_index_seeds(self):
        samples = synth_dataset(SceneConfig(seed=9), 3)
        sums = {s.image.sum() for s in samples}
        assert len(sums) == 3
        assert derive_seed(9, 0) != derive_seed(9, 1)

    def test_rejects_bad_extent(self):
        with pytest.raises(ValueError, match="64"):
            SceneConfig(height=32, width=128)
        with pytest.raises(ValueError, match="divisible"):
            SceneConfig(height=130, width=128)


class TestFlip:
    def test_double_flip_is_bitwise_identity(self):
        sample = synth_scene(SceneConfig(seed=1))
        twice = flip_augment(flip_augment(sample))
        assert np.array_equal(twice.image, sample.image)
        assert twice.annotations.classes == sample.annotations.classes

    def test_point_mirror(self):
        img = np.zeros((3, 64, 128))
        ann = PointAnnotationSet("img", [[(0.0, 5.0)]])
        flipped = flip_augment(Sample(img, ann))
        assert flipped.annotations.classes[0] == [(127.0, 5.0)]

    def test_flip_commutes_with_density_rendering(self):
        cfg = DensityConfig()
        for seed in range(10):
            sample = synth_scene(SceneConfig(seed=seed))
            flipped = flip_augment(sample)
            direct = render_density_maps(flipped.annotations, cfg, (128, 128))
            mirrored = render_density_maps(sample.annotations, cfg,
                                           (128, 128))[:, :, ::-1]
            np.testing.assert_allclose(direct, mirrored, atol=1e-12)

    def test_flip_commutes_with_pseudo_masks(self):
        cfg = MaskConfig()
        for seed in range(10):
            sample = synth_scene(SceneConfig(seed=seed))
            flipped = flip_augment(sample)
            direct = render_pseudo_masks(flipped.annotations, cfg, (128, 128))
            mirrored = render_pseudo_masks(sample.annotations, cfg,
                                           (128, 128))[:, :, ::-1]
            np.testing.assert_array_equal(direct, mirrored)


class TestRandomCrop:
    def test_full_extent_crop_is_identity(self):
        sample = synth_scene(SceneConfig(seed=2))
        cropped = random_crop(sample, (128, 128), seed=0)
        assert np.array_equal(cropped.image, sample.image)
        assert cropped.annotations.classes == sample.annotations.classes

    def test_crop_larger_than_image_rejected(self):
        sample = synth_scene(SceneConfig(seed=2))
        with pytest.raises(ValueError, match="exceeds"):
            random_crop(sample, (256, 256), seed=0)

    def test_retained_points_in_bounds_and_not_invented(self):
        sample = synth_scene(SceneConfig(seed=3))
        original = sample.annotations.counts()
        for seed in range(200):
            cropped = random_crop(sample, (64, 64), seed=seed)
            counts = cropped.annotations.counts()
            assert all(c <= o for c, o in zip(counts, original))
            cropped.annotations.validate_bounds((64, 64))

    def test_interior_window_keeps_all_points(self):
        img = np.zeros((3, 64, 64))
        ann = PointAnnotationSet("img", [[(30.0, 30.0), (35.0, 28.0)]])
        cropped = random_crop(Sample(img, ann), (64, 64), seed=1)
        assert cropped.annotations.counts() == [2]


class TestDatasetOnDisk:
    def test_manifest_round_trip(self, tmp_path):
        samples = synth_dataset(SceneConfig(seed=11), 3)
        manifest = write_dataset(samples, tmp_path / "ds")
        loaded = read_manifest(manifest, num_classes=2)
        assert len(loaded) == 3
        for orig, back in zip(samples, loaded):
            assert back.annotations.classes == orig.annotations.classes
            # 8-bit quantization on the way to disk
            assert np.abs(back.image - orig.image).max() <= 0.5 / 255.0

    def test_empty_manifest_rejected(self, tmp_path):
        manifest = tmp_path / "manifest.txt"
        manifest.write_text("")
        with pytest.raises(ValueError, match="empty"):
            read_manifest(manifest, num_classes=2)
