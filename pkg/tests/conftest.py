import json

import pytest

from corpuskit import classify, fixtures, ngram_lm
from corpuskit.classify import FeatureSpec
from corpuskit.config import PipelineConfig
from corpuskit.quality import train_quality_model, train_toxicity_model

TEST_B = 16         # 2^16 feature buckets keep test model files small
TOX_CATEGORIES = ("bias_discrimination", "profanity", "violence")


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """Train the pipeline's models once per session and persist them."""
    d = tmp_path_factory.mktemp("models")

    lm = ngram_lm.train_lm(fixtures.build_lm_training_texts(17, 400), order=5)
    ngram_lm.save_lm(lm, d / "lm.bin")
    band = ngram_lm.calibrate_band(lm, fixtures.build_band_sample_texts(19, 300))
    (d / "band.json").write_text(json.dumps(band.to_dict()), encoding="utf-8")

    spec = FeatureSpec(b=TEST_B, seed=5)
    general = train_quality_model(fixtures.build_quality_training(11), spec)
    classify.save_model(general, d / "quality_general.bin")
    educational = train_quality_model(fixtures.build_quality_training(12), spec)
    classify.save_model(educational, d / "quality_educational.bin")
    toxicity = train_toxicity_model(
        fixtures.build_toxicity_training(13), TOX_CATEGORIES, spec
    )
    classify.save_model(toxicity, d / "toxicity.bin")
    return d


@pytest.fixture(scope="session")
def pipeline_config(model_dir) -> PipelineConfig:
    return PipelineConfig(raw=_config_dict(model_dir))


def _config_dict(model_dir) -> dict:
    return {
        "seed": 42,
        "dedup": {"tau": 0.85, "term_unit": 3, "exact_pairwise_limit": 2000},
        "perplexity": {
            "model": str(model_dir / "lm.bin"),
            "band": str(model_dir / "band.json"),
        },
        "quality": {
            "general_model": str(model_dir / "quality_general.bin"),
            "educational_model": str(model_dir / "quality_educational.bin"),
            "thresholds": [0.5, 0.5],
            "combine": "both",
        },
        "toxicity": {"model": str(model_dir / "toxicity.bin"), "threshold": 0.5},
    }


@pytest.fixture(scope="session")
def config_dict(model_dir) -> dict:
    return _config_dict(model_dir)


@pytest.fixture(scope="session")
def noisy_corpus():
    return fixtures.build_noisy_corpus(800, seed=7)
