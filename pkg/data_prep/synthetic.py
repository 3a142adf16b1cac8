"""
Deterministic synthetic scene corpora for desk-scale training.

Every scene has a salient "anchor" OCR token (the largest text region) and up to
`max_partners` spatially nearest tokens that references mention together with it.
The remaining tokens are distractors and are never described.
"""
import hashlib
from typing import List

import numpy as np

from common.config import SynthConfig
from common.errors import ConfigError
from common.logger_config import get_logger
from data_prep.scene_io import DatasetManifest, OcrToken, Scene, SceneDims, VisualObject

logger = get_logger(__name__)

template_words = {"a", "an", "with", "and", "on", "it"}


def word_vector(word: str, dim: int, salt: str) -> np.ndarray:
    """Fixed pseudo-random embedding of a word; identical across the corpus"""
    digest = hashlib.sha256(f"{salt}:{word}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return rng.standard_normal(dim)


def _random_bbox(rng: np.random.Generator, centre: np.ndarray, size: np.ndarray) -> List[float]:
    x1, y1 = np.clip(centre - size / 2, 0.0, 1.0)
    x2, y2 = np.clip(centre + size / 2, 0.0, 1.0)
    return [float(x1), float(y1), float(x2), float(y2)]


def _area(bbox: List[float]) -> float:
    return (bbox[2] - bbox[0]) * (bbox[3] - bbox[1])


def reference_caption(object_word: str, ocr_words: List[str]) -> str:
    article = "an" if object_word[0] in "aeiou" else "a"
    return f"{article} {object_word} with {' and '.join(ocr_words)} on it"


def _check_config(config: SynthConfig) -> None:
    if config.n_scenes <= 0:
        raise ConfigError(f"n_scenes must be positive, got {config.n_scenes}")
    if config.tokens_per_scene > config.max_tokens:
        raise ConfigError(f"tokens_per_scene={config.tokens_per_scene} exceeds max_tokens={config.max_tokens}")
    if config.objects_per_scene > config.max_objects:
        raise ConfigError(f"objects_per_scene={config.objects_per_scene} exceeds max_objects={config.max_objects}")
    if len(set(config.ocr_words)) < config.tokens_per_scene:
        raise ConfigError("not enough distinct OCR words for tokens_per_scene")
    clashes = (set(config.ocr_words) & (template_words | set(config.object_words)))
    if clashes:
        raise ConfigError(f"OCR words overlap caption template/object words: {sorted(clashes)}")


def _make_scene(config: SynthConfig, rng: np.random.Generator, scene_id: str) -> Scene:
    n_objects = config.objects_per_scene
    n_tokens = config.tokens_per_scene

    replace = len(config.object_words) < n_objects
    object_words = [str(w) for w in rng.choice(config.object_words, size=n_objects, replace=replace)]
    objects = []
    for word in object_words:
        bbox = _random_bbox(rng, rng.uniform(0.2, 0.8, size=2), rng.uniform(0.1, 0.5, size=2))
        appearance = word_vector(word, config.d_app, "object") + 0.1 * rng.standard_normal(config.d_app)
        objects.append(VisualObject(appearance=appearance.tolist(), bbox=bbox))
    main_object = max(range(n_objects), key=lambda i: (_area(objects[i].bbox), -i))

    ocr_words = [str(w) for w in rng.choice(sorted(set(config.ocr_words)), size=n_tokens, replace=False)]
    anchor = int(rng.integers(n_tokens))
    centres = rng.uniform(0.15, 0.85, size=(n_tokens, 2))
    tokens = []
    for i, word in enumerate(ocr_words):
        size = rng.uniform(0.2, 0.3, size=2) if i == anchor else rng.uniform(0.04, 0.12, size=2)
        tokens.append(OcrToken(
            text=word,
            appearance=(0.5 * rng.standard_normal(config.d_app)).tolist(),
            bbox=_random_bbox(rng, centres[i], size),
            word_emb=word_vector(word, config.d_ft, "fasttext").tolist(),
            char_emb=word_vector(word, config.d_phoc, "phoc").tolist(),
            confidence=float(rng.uniform(0.5, 1.0)),
        ))

    distances = np.linalg.norm(centres - centres[anchor], axis=1)
    others = sorted((i for i in range(n_tokens) if i != anchor), key=lambda i: (distances[i], i))
    n_partners = int(rng.integers(0, min(config.max_partners, n_tokens - 1) + 1))
    partners = sorted(others[:n_partners])

    n_refs = config.refs_per_scene
    mentions = [[bool(rng.random() < 0.5) for _ in range(n_refs)] for _ in partners]
    for rank, row in enumerate(mentions):
        if not any(row):
            row[rank % n_refs] = True
        if n_refs > 1 and all(row):
            row[(rank + 1) % n_refs] = False

    references = []
    for r in range(n_refs):
        words = [ocr_words[anchor]] + [ocr_words[p] for k, p in enumerate(partners) if mentions[k][r]]
        references.append(reference_caption(object_words[main_object], words))

    return Scene(id=scene_id, visual_objects=objects, ocr_tokens=tokens, references=references)


def generate_synthetic(config: SynthConfig, seed: int) -> DatasetManifest:
    """Builds `config.n_scenes` scenes; identical (config, seed) gives an identical manifest"""
    _check_config(config)
    rng = np.random.default_rng(seed)
    scenes = [_make_scene(config, rng, f"synth-{seed}-{i:04d}") for i in range(config.n_scenes)]
    dims = SceneDims(
        d_app=config.d_app, d_ft=config.d_ft, d_phoc=config.d_phoc,
        max_objects=config.max_objects, max_tokens=config.max_tokens,
    )
    logger.info(f"generated {len(scenes)} synthetic scenes with seed {seed}")
    return DatasetManifest(scenes=scenes, dims=dims, created_seed=seed)
