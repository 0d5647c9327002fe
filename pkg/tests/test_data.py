"""Container format, manifest validation, and synthetic generation."""

import numpy as np
import pytest

from mmfuse import data as da
from mmfuse.errors import (
    BadMagicError,
    ConfigError,
    DimensionMismatchError,
    ManifestError,
    PayloadError,
    ShapeError,
    UnsupportedVersionError,
)


def make_record(rng, rec_id="utt-0", label=1, d_t=4, d_a=3, chunks=(2, 3)):
    return da.UtteranceRecord(
        id=rec_id, label=label,
        text_embedding=rng.normal(size=d_t).astype(np.float32),
        chunks=[rng.normal(size=(n, d_a)).astype(np.float32) for n in chunks],
    )


class TestRecordFormat:
    def test_round_trip_exact_f32(self, rng, tmp_path):
        rec = make_record(rng)
        path = tmp_path / "rec.mmeb"
        da.write_record(rec, path)
        back = da.read_record(path)
        assert back.label == rec.label
        np.testing.assert_array_equal(back.text_embedding, rec.text_embedding)
        assert len(back.chunks) == len(rec.chunks)
        for mine, theirs in zip(back.chunks, rec.chunks):
            np.testing.assert_array_equal(mine, theirs)

    def test_minimal_record_is_44_bytes(self, tmp_path):
        rec = da.UtteranceRecord(
            id="m", label=0,
            text_embedding=np.zeros(2, dtype=np.float32),
            chunks=[np.zeros((1, 2), dtype=np.float32)],
        )
        path = tmp_path / "m.mmeb"
        da.write_record(rec, path)
        assert path.stat().st_size == 44

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.mmeb"
        path.write_bytes(b"XXXX" + b"\x00" * 40)
        with pytest.raises(BadMagicError):
            da.read_record(path)

    def test_version_mismatch(self, rng, tmp_path):
        rec = make_record(rng)
        path = tmp_path / "v.mmeb"
        da.write_record(rec, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 9  # version little-endian low byte
        path.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedVersionError):
            da.read_record(path)

    def test_truncated_payload(self, rng, tmp_path):
        rec = make_record(rng)
        path = tmp_path / "t.mmeb"
        da.write_record(rec, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(PayloadError):
            da.read_record(path)

    def test_trailing_bytes_rejected(self, rng, tmp_path):
        rec = make_record(rng)
        path = tmp_path / "extra.mmeb"
        da.write_record(rec, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(PayloadError):
            da.read_record(path)

    def test_invalid_label_rejected_on_write(self, rng, tmp_path):
        rec = make_record(rng, label=7)
        with pytest.raises(ShapeError):
            da.write_record(rec, tmp_path / "bad.mmeb")

    def test_unlabeled_round_trip(self, rng, tmp_path):
        rec = make_record(rng, label=-1)
        path = tmp_path / "u.mmeb"
        da.write_record(rec, path)
        assert da.read_record(path).label == -1


class TestManifest:
    def _write_dataset(self, rng, tmp_path, n=3):
        entries = []
        for i in range(n):
            rec = make_record(rng, rec_id=f"utt-{i}", label=i % 2)
            da.write_record(rec, tmp_path / f"utt-{i}.mmeb")
            entries.append({"id": f"utt-{i}", "file": f"utt-{i}.mmeb",
                            "label": i % 2, "split": "train" if i else "test"})
        da.write_manifest(tmp_path / "manifest.json", 4, 3, entries)
        return tmp_path / "manifest.json"

    def test_load_groups_by_split(self, rng, tmp_path):
        manifest = self._write_dataset(rng, tmp_path)
        train, test = da.load_dataset(manifest)
        assert len(train) == 2 and len(test) == 1

    def test_duplicate_id_rejected(self, rng, tmp_path):
        manifest = self._write_dataset(rng, tmp_path)
        import json

        doc = json.loads(manifest.read_text())
        doc["utterances"].append(dict(doc["utterances"][0]))
        manifest.write_text(json.dumps(doc))
        with pytest.raises(ManifestError, match="duplicate"):
            da.load_dataset(manifest)

    def test_missing_file_rejected(self, rng, tmp_path):
        manifest = self._write_dataset(rng, tmp_path)
        (tmp_path / "utt-1.mmeb").unlink()
        with pytest.raises(ManifestError, match="missing"):
            da.load_dataset(manifest)

    def test_dim_mismatch_rejected(self, rng, tmp_path):
        manifest = self._write_dataset(rng, tmp_path)
        rogue = make_record(rng, rec_id="utt-1", label=1, d_t=6)
        da.write_record(rogue, tmp_path / "utt-1.mmeb")
        with pytest.raises(DimensionMismatchError):
            da.load_dataset(manifest)

    def test_label_disagreement_rejected(self, rng, tmp_path):
        manifest = self._write_dataset(rng, tmp_path)
        rogue = make_record(rng, rec_id="utt-1", label=0)
        da.write_record(rogue, tmp_path / "utt-1.mmeb")
        with pytest.raises(ManifestError, match="label"):
            da.load_dataset(manifest)

    def test_empty_test_split_warns(self, rng, tmp_path):
        entries = []
        for i in range(2):
            rec = make_record(rng, rec_id=f"utt-{i}", label=i % 2)
            da.write_record(rec, tmp_path / f"utt-{i}.mmeb")
            entries.append({"id": f"utt-{i}", "file": f"utt-{i}.mmeb",
                            "label": i % 2, "split": "train"})
        da.write_manifest(tmp_path / "manifest.json", 4, 3, entries)
        with pytest.warns(UserWarning, match="empty test split"):
            train, test = da.load_dataset(tmp_path / "manifest.json")
        assert len(train) == 2 and not test

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            da.load_dataset(tmp_path / "nope.json")

    def test_record_count_matches_manifest(self, rng, tmp_path):
        manifest = self._write_dataset(rng, tmp_path, n=5)
        train, test = da.load_dataset(manifest)
        import json

        doc = json.loads(manifest.read_text())
        assert len(train) + len(test) == len(doc["utterances"])

    def test_predefined_108_train_48_test_split_loads(self, tmp_path):
        # benchmark-scale manifest: 54 + 54 train, 24 + 24 test
        entries = []
        for i in range(156):
            label = i % 2
            split = "train" if i < 108 else "test"
            rec = da.UtteranceRecord(
                id=f"p-{i:03d}", label=label,
                text_embedding=np.zeros(2, dtype=np.float32),
                chunks=[np.zeros((1, 2), dtype=np.float32)],
            )
            da.write_record(rec, tmp_path / f"p-{i:03d}.mmeb")
            entries.append({"id": f"p-{i:03d}", "file": f"p-{i:03d}.mmeb",
                            "label": label, "split": split})
        da.write_manifest(tmp_path / "manifest.json", 2, 2, entries)
        train, test = da.load_dataset(tmp_path / "manifest.json")
        assert len(train) == 108 and len(test) == 48
        assert sum(r.label for r in train) == 54
        assert sum(r.label for r in test) == 24


class TestSynthetic:
    def test_counts_and_shapes(self, tmp_path):
        manifest = da.gen_synthetic(10, d_t=5, d_a=4, separation=2.0, seed=3,
                                    out_dir=tmp_path)
        train, test = da.load_dataset(manifest)
        assert len(train) + len(test) == 20
        assert all(rec.d_t == 5 and rec.d_a == 4 for rec in train + test)
        labels = sorted(r.label for r in train + test)
        assert labels.count(0) == labels.count(1) == 10

    def test_same_seed_identical_bytes(self, tmp_path):
        dir_a = tmp_path / "a"
        dir_b = tmp_path / "b"
        da.gen_synthetic(6, d_t=4, d_a=3, separation=1.0, seed=11, out_dir=dir_a)
        da.gen_synthetic(6, d_t=4, d_a=3, separation=1.0, seed=11, out_dir=dir_b)
        for file in sorted(dir_a.iterdir()):
            assert file.read_bytes() == (dir_b / file.name).read_bytes()

    def test_different_seed_differs(self, tmp_path):
        dir_a = tmp_path / "a"
        dir_b = tmp_path / "b"
        da.gen_synthetic(4, d_t=4, d_a=3, separation=1.0, seed=1, out_dir=dir_a)
        da.gen_synthetic(4, d_t=4, d_a=3, separation=1.0, seed=2, out_dir=dir_b)
        names = [f.name for f in sorted(dir_a.iterdir()) if f.suffix == ".mmeb"]
        assert any((dir_a / n).read_bytes() != (dir_b / n).read_bytes()
                   for n in names)

    def test_negative_separation_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            da.gen_synthetic(4, d_t=4, d_a=3, separation=-1.0, seed=0,
                             out_dir=tmp_path)

    def test_class_centered_cross_modal_correlation(self, tmp_path):
        manifest = da.gen_synthetic(60, d_t=6, d_a=6, separation=2.0, seed=5,
                                    out_dir=tmp_path)
        train, test = da.load_dataset(manifest)
        records = train + test
        text = np.array([r.text_embedding for r in records], dtype=np.float64)
        audio = np.array([np.concatenate(r.chunks).mean(axis=0)
                          for r in records], dtype=np.float64)
        labels = np.array([r.label for r in records])
        for label in (0, 1):
            text[labels == label] -= text[labels == label].mean(axis=0)
            audio[labels == label] -= audio[labels == label].mean(axis=0)
        # project both modalities onto the strongest shared direction of the
        # cross-covariance; the per-utterance latent makes them correlate
        cross_cov = text.T @ audio / len(records)
        u, _, vt = np.linalg.svd(cross_cov)
        x = text @ u[:, 0]
        y = audio @ vt[0]
        corr = np.corrcoef(x, y)[0, 1]
        assert abs(corr) > 0.2

    def test_zero_separation_kills_class_signal(self, tmp_path):
        manifest = da.gen_synthetic(30, d_t=5, d_a=5, separation=0.0, seed=5,
                                    out_dir=tmp_path)
        train, test = da.load_dataset(manifest)
        records = train + test
        text = np.array([r.text_embedding for r in records])
        labels = np.array([r.label for r in records])
        gap = text[labels == 1].mean(axis=0) - text[labels == 0].mean(axis=0)
        assert np.linalg.norm(gap) < 1.0
