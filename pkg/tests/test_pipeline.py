"""Tests for extraction/stats/bench orchestration."""

import dataclasses
import math

import numpy as np
import pytest

from facefuse.dataio import read_manifest
from facefuse.errors import DataError, UsageError
from facefuse.features import Keypoint, fast_detect, write_keypoint_file
from facefuse.fusion import region_counts
from facefuse.image import load_pgm, save_pgm
from facefuse.pipeline import (
    BENCH_WARMUP,
    RunConfig,
    extract_features,
    run_bench,
    run_stats,
    sidecar_keypoint_path,
)
from facefuse.regions import REGIONS, build_partition, load_landmarks
from facefuse.synthetic import generate_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest = generate_corpus(str(root), n_videos=6, frames_per_video=3, size=96, seed=3)
    return manifest, read_manifest(manifest)


class TestRunConfig:
    def test_defaults_valid(self):
        RunConfig().validate()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"detector": "sift"},
            {"fast_threshold": 0},
            {"fast_threshold": 255},
            {"n_top": 0},
            {"mode": "mean"},
            {"n_trees": 0},
            {"workers": 0},
            {"train_fraction": 1.2},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(UsageError):
            RunConfig(**kwargs).validate()


class TestSidecar:
    def test_replaces_extension(self):
        assert sidecar_keypoint_path("/a/b/c.pgm") == "/a/b/c.kp"
        assert sidecar_keypoint_path("rel/x.y.pgm") == "rel/x.y.kp"


class TestExtract:
    def test_manifest_order_and_splits(self, corpus):
        _, rows = corpus
        result = extract_features(rows, RunConfig())
        assert [f.sample_id for f in result.rows] == [r.sample_id for r in rows]
        assert all(f.split in ("train", "test") for f in result.rows)
        assert result.n_skipped == 0
        assert all(f.d == 32 and f.values.shape == (256,) for f in result.rows)

    def test_rerun_is_identical(self, corpus):
        _, rows = corpus
        a = extract_features(rows, RunConfig())
        b = extract_features(rows, RunConfig())
        for fa, fb in zip(a.rows, b.rows):
            assert fa.sample_id == fb.sample_id
            assert fa.split == fb.split
            assert np.array_equal(fa.values, fb.values)

    def test_workers_do_not_change_output(self, corpus):
        _, rows = corpus
        serial = extract_features(rows, RunConfig(workers=1))
        parallel = extract_features(rows, RunConfig(workers=3))
        for fa, fb in zip(serial.rows, parallel.rows):
            assert fa.sample_id == fb.sample_id
            assert np.array_equal(fa.values, fb.values)

    def test_zero_keypoint_image_gives_zero_vector(self, tmp_path, corpus):
        _, rows = corpus
        flat = tmp_path / "flat.pgm"
        save_pgm(np.full((96, 96), 128, dtype=np.uint8), str(flat))
        row = dataclasses.replace(
            rows[0], sample_id="flat", image_path=str(flat), video_id="vflat"
        )
        result = extract_features([row] + list(rows), RunConfig())
        assert result.rows[0].sample_id == "flat"
        assert not result.rows[0].values.any()

    def test_single_bad_row_is_skipped(self, tmp_path, corpus):
        _, rows = corpus
        bad = tmp_path / "broken.pgm"
        bad.write_bytes(b"P5\nnot an image")
        rows = list(rows)
        rows[4] = dataclasses.replace(rows[4], image_path=str(bad))
        result = extract_features(rows, RunConfig())
        assert result.n_skipped == 1
        assert rows[4].sample_id in result.errors[0]
        assert [f.sample_id for f in result.rows] == [
            r.sample_id for i, r in enumerate(rows) if i != 4
        ]

    def test_too_many_failures_rejected(self, tmp_path, corpus):
        _, rows = corpus
        rows = [
            dataclasses.replace(r, image_path=str(tmp_path / "missing.pgm"))
            for r in rows[:5]
        ] + list(rows[5:])
        with pytest.raises(DataError):
            extract_features(rows, RunConfig())

    def test_empty_manifest_rejected(self):
        with pytest.raises(DataError):
            extract_features([], RunConfig())

    def test_external_detector(self, corpus):
        manifest, rows = corpus
        rng = np.random.default_rng(1)
        for r in rows:
            entries = [
                (
                    Keypoint(int(rng.integers(0, 96)), int(rng.integers(0, 96))),
                    rng.normal(size=64),
                )
                for _ in range(int(rng.integers(1, 6)))
            ]
            write_keypoint_file(
                sidecar_keypoint_path(r.image_path), "surf_like", 64, entries
            )
        result = extract_features(rows, RunConfig(detector="external"))
        assert all(f.d == 64 and f.values.shape == (512,) for f in result.rows)

    def test_external_mixed_dimensions_rejected(self, corpus):
        manifest, rows = corpus
        rng = np.random.default_rng(2)
        for i, r in enumerate(rows):
            d = 61 if i == 0 else 64
            entries = [(Keypoint(5, 5), rng.normal(size=d))]
            write_keypoint_file(
                sidecar_keypoint_path(r.image_path), "mixed", d, entries
            )
        with pytest.raises(DataError):
            extract_features(rows, RunConfig(detector="external"))


class TestStats:
    def test_matches_direct_tally(self, corpus):
        _, rows = corpus
        stats = run_stats(rows, RunConfig())
        sums = {name: {"real": 0.0, "fake": 0.0} for name in REGIONS}
        n = {"real": 0, "fake": 0}
        for row in rows:
            img = load_pgm(row.image_path)
            part = build_partition(load_landmarks(row.landmarks_path))
            counts = region_counts(fast_detect(img, 20), part)
            n[row.label] += 1
            for name in REGIONS:
                sums[name][row.label] += counts[name]
        for name in REGIONS:
            for label in ("real", "fake"):
                assert stats.means[name][label] == sums[name][label] / n[label]
        assert stats.n_real == n["real"] and stats.n_fake == n["fake"]

    def test_blurred_fakes_have_fewer_mouth_points(self, corpus):
        _, rows = corpus
        stats = run_stats(rows, RunConfig())
        assert stats.means["mouth"]["fake"] < stats.means["mouth"]["real"]
        assert stats.means["right_eye"]["fake"] < stats.means["right_eye"]["real"]

    def test_skipped_rows_counted(self, tmp_path, corpus):
        _, rows = corpus
        rows = list(rows)
        rows[0] = dataclasses.replace(rows[0], image_path=str(tmp_path / "gone.pgm"))
        stats = run_stats(rows, RunConfig())
        assert stats.n_skipped == 1
        assert stats.n_real + stats.n_fake == len(rows) - 1

    def test_empty_manifest_rejected(self):
        with pytest.raises(DataError):
            run_stats([], RunConfig())


class TestBench:
    def test_too_few_faces_rejected(self, corpus):
        _, rows = corpus
        with pytest.raises(DataError):
            run_bench(rows[:9], RunConfig())

    def test_shape_and_counts(self, corpus):
        _, rows = corpus
        out = run_bench(rows, RunConfig(n_trees=5))
        assert [r.name for r in out] == ["fast_brief", "orb", "train_forest"]
        assert out[0].n == len(rows) - BENCH_WARMUP
        assert out[1].n == len(rows) - BENCH_WARMUP
        for row in out:
            assert row.mean_s > 0.0
            assert row.median_s > 0.0
            assert math.isfinite(row.stddev_s)

    def test_external_not_benchable(self, corpus):
        _, rows = corpus
        with pytest.raises(UsageError):
            run_bench(rows, RunConfig(n_trees=5), detectors=("external",))
