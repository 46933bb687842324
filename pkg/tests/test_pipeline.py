import numpy as np
import pytest
from PIL import Image

from fcid.channels import extract_channel_planes
from fcid.dataset import FcidError, load_manifest
from fcid.evaluation import evaluate
from fcid.histograms import class_distributions, distinctive_bins
from fcid.model import default_config
from fcid.pipeline import (
    bin_count_study,
    check_disjoint,
    cross_validate,
    detect,
    detect_fcid_fe,
    detect_fcid_hist,
    features,
    load_images,
    probabilities,
    train,
    train_fcid_fe,
    train_fcid_hist,
    tune_svm,
)
from oracles import hist_feature_from_pixels


@pytest.fixture(scope="module")
def corpus(small_corpus):
    return {
        "dir": small_corpus,
        "all": load_manifest(small_corpus / "manifest.csv"),
        "train": load_manifest(small_corpus / "train.csv"),
        "test": load_manifest(small_corpus / "test.csv"),
    }


@pytest.fixture(scope="module")
def hist_model(corpus):
    return train_fcid_hist(corpus["train"], default_config("hist", seed=1))


@pytest.fixture(scope="module")
def fe_model(corpus):
    return train_fcid_fe(corpus["train"], default_config("fe", seed=1))


def test_hist_defaults(hist_model):
    assert hist_model.bins == (200,) * 4
    assert (hist_model.svm.c, hist_model.svm.gamma, hist_model.threshold) == (32.0, 0.5, 0.455)


def test_fe_defaults_and_dimension(fe_model, corpus):
    assert (fe_model.svm.c, fe_model.svm.gamma, fe_model.threshold) == (2.0, 0.5, 0.492)
    assert fe_model.gmm.n_components == 8
    imgs = load_images(corpus["test"], fe_model.config)
    assert features(fe_model, imgs).shape == (len(imgs), 72)


def test_upsilon_matches_recomputation(hist_model, corpus):
    cfg = hist_model.config
    imgs = load_images(corpus["train"], cfg)
    d = class_distributions([i.planes for i in imgs], corpus["train"].labels, cfg.hist)
    assert distinctive_bins(d) == hist_model.upsilon


def test_hist_features_match_pixel_oracle(hist_model, corpus):
    imgs = load_images(corpus["test"], hist_model.config)
    x = features(hist_model, imgs[:4])
    for row, path in zip(x, corpus["test"].paths[:4]):
        rgb = np.asarray(Image.open(path).convert("RGB"))
        expected = hist_feature_from_pixels(rgb, 7, hist_model.upsilon.as_tuple(), 200)
        assert np.allclose(row, expected, atol=1e-12)


def test_hist_fits_its_own_training_set(hist_model, corpus):
    imgs = load_images(corpus["train"], hist_model.config)
    report = evaluate(probabilities(hist_model, imgs), corpus["train"].labels, hist_model.threshold)
    assert report.hter <= 0.05


@pytest.mark.parametrize("which", ["hist", "fe"])
def test_detection_determinism_order_and_batching(which, hist_model, fe_model, corpus):
    model = hist_model if which == "hist" else fe_model
    paths = corpus["test"].paths[:8]
    first = detect(model, paths)
    second = detect(model, paths, threads=4)
    assert first == second
    assert [d.path for d in first] == [str(p) for p in paths]
    for d, p in zip(first, paths):
        (single,) = detect(model, [p])
        assert single.probability == d.probability
        assert d.label == ("fake" if d.probability >= model.threshold else "natural")


def test_bad_image_does_not_stop_the_batch(hist_model, corpus, tmp_path):
    broken = tmp_path / "broken.png"
    broken.write_bytes(b"not an image")
    paths = [corpus["test"].paths[0], tmp_path / "missing.png", broken, corpus["test"].paths[1]]
    out = detect(hist_model, paths)
    assert [d.ok for d in out] == [True, False, False, True]
    assert out[1].probability is None and out[1].error


def test_method_tags_are_checked(hist_model, fe_model, corpus):
    p = corpus["test"].paths[:1]
    assert detect_fcid_hist(hist_model, p)[0].ok
    assert detect_fcid_fe(fe_model, p)[0].ok
    with pytest.raises(FcidError):
        detect_fcid_hist(fe_model, p)
    with pytest.raises(FcidError):
        detect_fcid_fe(hist_model, p)


def test_training_is_deterministic(corpus):
    from fcid.model import model_to_dict

    cfg = default_config("fe", seed=4)
    a = train(corpus["train"], cfg)
    b = train(corpus["train"], cfg, threads=3)
    assert model_to_dict(a) == model_to_dict(b)


def test_training_needs_both_classes(corpus):
    naturals = corpus["train"].subset(np.flatnonzero(corpus["train"].labels < 0))
    with pytest.raises(FcidError) as info:
        train(naturals, default_config("hist"))
    assert info.value.stage == "train"


def test_training_images_are_refused_for_evaluation(hist_model, corpus):
    check_disjoint(hist_model, load_images(corpus["test"], hist_model.config))
    with pytest.raises(FcidError, match="used for training"):
        check_disjoint(hist_model, load_images(corpus["train"], hist_model.config)[:2])


def test_array_inputs_are_accepted(hist_model, corpus):
    rgb = np.asarray(Image.open(corpus["test"].paths[0]).convert("RGB"))
    from_array = detect(hist_model, [rgb])[0]
    from_file = detect(hist_model, corpus["test"].paths[:1])[0]
    assert from_array.probability == from_file.probability
    assert from_array.path == "<array>"


def test_cross_validation_protocol(corpus):
    cfg = default_config("hist", seed=0)
    imgs = load_images(corpus["all"], cfg)
    cv = cross_validate(imgs, corpus["all"].labels, cfg, k=5, groups=corpus["all"].groups)
    assert len(cv.fold_hter) == 5
    assert sorted(i for f in cv.folds for i in f) == list(range(len(imgs)))
    for f in cv.folds:
        ids = [corpus["all"].groups[i] for i in f]
        assert all(ids.count(g) == 2 for g in ids)
    assert cv.threshold == pytest.approx(np.mean(cv.fold_thresholds), abs=1e-12)
    assert cv.to_dict()["folds"][0]["fold"] == 1


def test_grid_tuning_and_bin_study(corpus):
    cfg = default_config("hist", seed=0)
    imgs = load_images(corpus["all"], cfg)
    y, groups = corpus["all"].labels, corpus["all"].groups
    grid = tune_svm(imgs, y, cfg, groups, c_grid=[1.0, 32.0], g_grid=[0.5, 2.0])
    assert grid.hter.shape == (2, 2)
    assert grid.best_hter == np.nanmin(grid.hter)
    study = bin_count_study(imgs, y, cfg, groups, bin_counts=[50, 200])
    assert set(study) == {50, 200}
    assert all(0 <= v <= 1 for v in study.values())


def test_native_resolution_is_used(hist_model, corpus):
    imgs = load_images(corpus["test"], hist_model.config)
    assert imgs[0].planes.shape == (32, 32)
    rgb = np.asarray(Image.open(corpus["test"].paths[0]).convert("RGB"))
    assert np.array_equal(extract_channel_planes(rgb).dark.values, imgs[0].planes.dark.values)
