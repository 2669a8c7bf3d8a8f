import numpy as np
import pytest

from ear.errors import BadMagicError, TruncatedFileError, VersionError
from ear.model_io import load_model, save_model
from ear.reconfigurator import evaluate_accuracy

from test_reconfigurator import make_trained_model


class TestEarmRoundTrip:
    def test_round_trip_preserves_behavior(self, tmp_path):
        model, data = make_trained_model(seed=21)
        p = tmp_path / "m.earm"
        save_model(p, model)
        back = load_model(p)

        assert back.domain_id == model.domain_id
        assert back.tau_pi == model.tau_pi
        assert np.array_equal(back.class_list, model.class_list)
        assert np.array_equal(back.codebook.vectors, model.codebook.vectors)
        assert back.weibull == model.weibull
        for c in model.class_list:
            assert back.prototypes[int(c)] == model.prototypes[int(c)]
        for sa, sb in zip(model.specs, back.specs):
            assert sa == sb
        # parameters survive as f32; a reloaded save is byte-stable
        p2 = tmp_path / "m2.earm"
        save_model(p2, back)
        assert p.read_bytes() == p2.read_bytes()

    def test_reloaded_model_classifies_identically(self, tmp_path):
        model, data = make_trained_model(seed=22)
        p = tmp_path / "m.earm"
        save_model(p, model)
        back = load_model(p)
        # f32 casting can in principle flip near-0.5 scores; identical
        # accuracy is the behavioral contract at this data scale
        assert evaluate_accuracy(back, data, seed=5) == pytest.approx(
            evaluate_accuracy(model, data, seed=5), abs=0.02
        )

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.earm"
        p.write_bytes(b"NOPE" + bytes(32))
        with pytest.raises(BadMagicError):
            load_model(p)

    def test_bad_version(self, tmp_path):
        model, _ = make_trained_model(seed=23, n_per_class=30)
        p = tmp_path / "x.earm"
        save_model(p, model)
        blob = bytearray(p.read_bytes())
        blob[4] = 42
        p.write_bytes(bytes(blob))
        with pytest.raises(VersionError):
            load_model(p)

    def test_truncation(self, tmp_path):
        model, _ = make_trained_model(seed=24, n_per_class=30)
        p = tmp_path / "x.earm"
        save_model(p, model)
        blob = p.read_bytes()
        p.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(TruncatedFileError):
            load_model(p)
