import pytest
import torch

from common.errors import SceneValidationError
from model.fusion import SceneEncoder, scene_to_tensors
from tests.factories import make_object, make_scene, make_token, tiny_config


@pytest.fixture
def config():
    return tiny_config()


@pytest.fixture
def encoder(config):
    torch.manual_seed(0)
    return SceneEncoder(config).double()


def test_scene_is_padded_to_the_caps(config):
    tensors = scene_to_tensors(make_scene(config), config, torch.float64)
    assert tensors.token_features.shape == (3, config.d_app + 4 + config.d_ft + config.d_phoc)
    assert tensors.object_features.shape == (3, config.d_app + 4)
    assert tensors.token_mask.tolist() == [True, True, False]
    assert tensors.object_mask.tolist() == [True, False, False]
    assert tensors.n_tokens == 2
    assert torch.equal(tensors.token_features[2], torch.zeros_like(tensors.token_features[2]))


def test_fused_pad_rows_are_zero(config, encoder):
    fused = encoder(scene_to_tensors(make_scene(config), config, torch.float64))
    assert fused.V.shape == (3, config.d_model) and fused.T.shape == (3, config.d_model)
    assert torch.equal(fused.T[2], torch.zeros(config.d_model, dtype=torch.float64))
    assert torch.equal(fused.V[1:], torch.zeros(2, config.d_model, dtype=torch.float64))


def test_without_fusion_layers_outputs_are_the_projections():
    config = tiny_config(fusion_layers=0)
    torch.manual_seed(0)
    encoder = SceneEncoder(config).double()
    scene = make_scene(config)
    tensors = scene_to_tensors(scene, config, torch.float64)
    fused = encoder(tensors)
    v_hat, mask_v = encoder.embed_visual(scene.visual_objects)
    t_hat, mask_t = encoder.embed_tokens(scene.ocr_tokens)
    assert torch.equal(fused.V, v_hat) and torch.equal(fused.T, t_hat)
    assert torch.equal(mask_v, tensors.object_mask) and torch.equal(mask_t, tensors.token_mask)


def test_token_order_permutes_fused_rows(config, encoder):
    texts, bboxes = ("stop", "ahead", "exit"), [(0.1, 0.1, 0.2, 0.2), (0.3, 0.3, 0.5, 0.4), (0.6, 0.1, 0.9, 0.3)]
    forward = make_scene(config, texts=texts, bboxes=bboxes, confidences=[0.9, 0.8, 0.7])
    backward = make_scene(config, texts=texts[::-1], bboxes=bboxes[::-1], confidences=[0.7, 0.8, 0.9])
    t_forward = encoder(scene_to_tensors(forward, config, torch.float64)).T
    t_backward = encoder(scene_to_tensors(backward, config, torch.float64)).T
    assert torch.allclose(t_forward, t_backward.flip(0), atol=1e-10)


def test_pad_features_do_not_reach_real_rows(config, encoder):
    tensors = scene_to_tensors(make_scene(config), config, torch.float64)
    base = encoder(tensors)
    tensors.token_features[2] = 50.0
    tensors.object_features[2] = -50.0
    perturbed = encoder(tensors)
    assert torch.equal(base.T, perturbed.T)
    assert torch.equal(base.V, perturbed.V)


def test_dimension_mismatch_is_rejected(config):
    scene = make_scene(config)
    scene.ocr_tokens[0].char_emb = [0.0] * (config.d_phoc + 1)
    with pytest.raises(SceneValidationError):
        scene_to_tensors(scene, config, torch.float64)


def test_too_many_tokens_is_rejected(config):
    scene = make_scene(config, texts=("a1", "b2", "c3", "d4"))
    with pytest.raises(SceneValidationError):
        scene_to_tensors(scene, config, torch.float64)


def test_identical_objects_embed_to_identical_rows(config, encoder):
    objects = [make_object("sign", config), make_object("sign", config)]
    v_hat, mask = encoder.embed_visual(objects)
    assert mask.tolist() == [True, True, False]
    assert torch.equal(v_hat[0], v_hat[1])


def test_object_bbox_changes_its_embedding(config, encoder):
    whole = make_object("sign", config, bbox=(0.0, 0.0, 1.0, 1.0))
    half = make_object("sign", config, bbox=(0.0, 0.0, 0.5, 0.5))
    v_hat, _ = encoder.embed_visual([whole, half])
    assert not torch.allclose(v_hat[0], v_hat[1])


def test_token_word_embedding_changes_its_row(config, encoder):
    token = make_token("stop", config)
    other = token.model_copy(update={"word_emb": [v + 1.0 for v in token.word_emb]})
    t_hat, mask = encoder.embed_tokens([token, other])
    assert mask.tolist() == [True, True, False]
    assert not torch.allclose(t_hat[0], t_hat[1])
    assert torch.equal(t_hat[2], torch.zeros_like(t_hat[2]))
