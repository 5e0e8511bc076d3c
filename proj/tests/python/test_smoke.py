import math

import pytest

import attnrel


def test_version():
    assert attnrel.__version__


def test_attention_rows_are_stochastic():
    cfg = attnrel.default_vqa_config("self_plus_co", 3)
    model = attnrel.Model(cfg)
    sample = attnrel.gen_vqa_task(4, 1).samples[0]
    maps = model.attention_maps(sample)
    assert len(maps) == 4 * cfg.layers
    for record in maps:
        for head in record["attention"]:
            for row in head:
                assert all(v >= 0 for v in row)
                assert abs(sum(row) - 1.0) < 1e-12


def test_explain_shapes_and_target():
    cfg = attnrel.default_vqa_config("self_plus_co", 5)
    model = attnrel.Model(cfg)
    sample = attnrel.gen_vqa_task(6, 1).samples[0]
    out = attnrel.explain(model, sample, method="ours")
    assert len(out["text"]) == len(sample.text)
    assert len(out["image"]) == len(sample.image)
    assert set(out["maps"]) == {"text_text", "image_image", "text_image", "image_text"}
    assert 0 <= out["target_class"] < cfg.classes
    assert all(v >= 0 for v in out["image"])


def test_methods_disagree_on_cross_maps():
    cfg = attnrel.default_vqa_config("self_plus_co", 7)
    model = attnrel.Model(cfg)
    sample = attnrel.gen_vqa_task(8, 1).samples[0]
    ours = attnrel.explain(model, sample, method="ours")
    raw = attnrel.explain(model, sample, method="raw_attention")
    assert ours["image"] != raw["image"]


def test_training_improves_accuracy():
    cfg = attnrel.default_vqa_config("self_plus_co", 9)
    model = attnrel.Model(cfg)
    data = attnrel.gen_vqa_task(10, 96)
    before = attnrel.evaluate_accuracy(model, data)
    trained, accuracy = attnrel.train(model, data, epochs=12, lr=0.08)
    assert accuracy == attnrel.evaluate_accuracy(trained, data)
    assert accuracy > before


def test_trapezoid_auc():
    assert attnrel.trapezoid_auc([0, 0.5, 1.0], [1.0, 1.0, 0.0]) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        attnrel.trapezoid_auc([0.0], [1.0])


def test_otsu_and_masks():
    heat = [0.1] * 10 + [0.9] * 6
    threshold, degenerate = attnrel.otsu_threshold(heat)
    assert not degenerate
    assert 0.1 <= threshold < 0.9
    mask = attnrel.otsu_mask(heat)
    assert mask == [0] * 10 + [1] * 6

    flat_threshold, flat_degenerate = attnrel.otsu_threshold([0.4] * 9)
    assert flat_degenerate

    assert attnrel.mask_iou([1, 1, 0, 0], [0, 1, 1, 0]) == pytest.approx(1 / 3)


def test_build_masks_filters_low_probability_queries():
    rows = [[0.9, 0.1, 0.1, 0.1], [0.5, 0.5, 0.5, 0.5]]
    logits = [[4.0, 0.0, 0.0], [0.1, 0.0, 0.1]]
    masks = attnrel.build_masks(rows, logits, grid=2)
    assert len(masks) == 1
    assert masks[0]["query"] == 0
    assert masks[0]["probability"] > 0.5
    assert masks[0]["size"] == 16
    assert math.isqrt(len(masks[0]["mask"])) == 16


def test_invalid_inputs_raise():
    with pytest.raises(ValueError):
        attnrel.gen_vqa_task(1, 0)
    cfg = attnrel.default_vqa_config("self_plus_co", 11)
    model = attnrel.Model(cfg)
    bad = attnrel.Sample()
    bad.text = [2]
    bad.image = [1]
    with pytest.raises(ValueError):
        attnrel.explain(model, bad)
