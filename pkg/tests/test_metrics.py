import math

import numpy as np
import pytest

from lenia_qd import vae
from lenia_qd.genotype import GenomeLayout, Genotype
from lenia_qd.metrics import (
    MetricsRecord,
    coverage,
    count_additions,
    cumulative_elites,
    diagonal_gaussian_entropy,
    entropy_estimate,
    entropy_terms,
    gaussian_fit_entropy,
    max_fitness,
    pixel_variance,
)
from lenia_qd.qd import AddOutcome, DescriptorSpec, EmptyArchive, Individual, MapElitesGrid, MissingCrops

import oracles

ENTROPY_8D_UNIT = 11.351508265637381  # 8 * 0.5 * log(2 pi e)
TOY = GenomeLayout(seed_shape=(1, 1, 3), n_kernels=0)
SMALL = vae.VaeConfig(latent_dim=8, features=8, input_size=32)


def member(fitness=0.0, crop=None, descriptor=(0.5, 0.5, 0.5)):
    crops = None if crop is None else np.asarray(crop, np.float32)[None]
    return Individual(Genotype(np.full(TOY.size, 0.5), TOY), fitness, np.asarray(descriptor), crops)


def test_coverage_examples():
    grid = MapElitesGrid(DescriptorSpec.color(), capacity=32768)
    assert coverage(grid) == 0.0
    grid.try_add(member(1.0))
    assert coverage(grid) == 1 / 32768


def test_max_fitness():
    assert max_fitness([member(-0.3)]) == -0.3
    with pytest.raises(EmptyArchive):
        max_fitness([])
    grid = MapElitesGrid(DescriptorSpec.color(), capacity=8)
    grid.try_add(member(1.0))
    before = max_fitness(grid)
    grid.try_add(member(2.0))
    assert max_fitness(grid) >= before


def test_pixel_variance_examples(rng):
    crop = rng.random((32, 32, 3))
    assert pixel_variance([member(crop=crop), member(crop=crop)]) == 0
    assert pixel_variance([member(crop=np.zeros((32, 32, 3))), member(crop=np.ones((32, 32, 3)))]) == 0.25
    with pytest.raises(MissingCrops):
        pixel_variance([member()])
    with pytest.raises(EmptyArchive):
        pixel_variance([])


def test_pixel_variance_oracle(rng):
    crops = rng.random((7, 8, 8, 3)).astype(np.float32)
    got = pixel_variance([member(crop=c) for c in crops])
    assert got == pytest.approx(oracles.pixel_variance_oracle(crops), abs=1e-9)


def test_cumulative_elites():
    assert cumulative_elites(4, 0) == 4
    outcomes = [AddOutcome.ADDED] * 5 + [AddOutcome.REPLACED] * 3 + [AddOutcome.REJECTED] * 2
    assert cumulative_elites(10, count_additions(outcomes)) == 18
    with pytest.raises(ValueError):
        cumulative_elites(0, -1)


def test_gaussian_entropies():
    assert diagonal_gaussian_entropy(np.zeros((1, 8)))[0] == pytest.approx(ENTROPY_8D_UNIT, abs=1e-12)
    lv = np.random.default_rng(0).normal(size=8)
    assert diagonal_gaussian_entropy(lv[None])[0] == pytest.approx(oracles.diag_gaussian_entropy(lv), abs=1e-12)
    pts = np.random.default_rng(1).normal(size=(5000, 2)) * [1.0, 2.0]
    want = 0.5 * math.log((2 * math.pi * math.e) ** 2 * np.linalg.det(np.cov(pts.T, bias=True) + 1e-6 * np.eye(2)))
    assert gaussian_fit_entropy(pts) == pytest.approx(want, rel=1e-12)


@pytest.fixture(scope="module")
def model():
    return vae.make_model(SMALL, 0)


def archive(rng, n=12):
    return [member(crop=rng.random((32, 32, 3))) for _ in range(n)]


def test_entropy_deterministic_and_terms(model, rng):
    arc = archive(rng)
    a = entropy_estimate(arc, model, 64, np.random.default_rng(3))
    b = entropy_estimate(arc, model, 64, np.random.default_rng(3))
    assert a == b and math.isfinite(a)
    terms = entropy_terms(arc, model, 64, np.random.default_rng(3))
    picks = np.random.default_rng(3).integers(0, len(arc), size=64)
    _, logvar = vae.encode_batch(model, np.stack([arc[i].representative_crop for i in picks]))
    assert terms.h_z_given_x == pytest.approx(np.mean([oracles.diag_gaussian_entropy(lv) for lv in logvar]), abs=1e-9)
    assert terms.total == pytest.approx(a)


def test_entropy_identical_members(model, rng):
    crop = rng.random((32, 32, 3))
    arc = [member(crop=crop) for _ in range(5)]
    assert math.isfinite(entropy_estimate(arc, model, 16, np.random.default_rng(0)))
    with pytest.raises(ValueError):
        entropy_estimate(arc, model, 1, np.random.default_rng(0))


def test_entropy_sample_size_stability(model):
    rng = np.random.default_rng(7)
    arc = archive(rng, 40)
    big = [entropy_estimate(arc, model, 512, np.random.default_rng(s)) for s in range(6)]
    small = [entropy_estimate(arc, model, 256, np.random.default_rng(100 + s)) for s in range(6)]
    # difference of the two sample-size means stays within a few bootstrap standard errors
    se = math.sqrt(np.var(small, ddof=1) / len(small) + np.var(big, ddof=1) / len(big))
    assert abs(np.mean(big) - np.mean(small)) < 4 * se + 1e-9 * abs(np.mean(big))


def test_record_json_roundtrip():
    r = MetricsRecord(3, 256, 10, 0.1, 1.0, 0.02, 12, None, 4, 2, 1, None)
    import json

    assert MetricsRecord(**json.loads(r.to_json())) == r
