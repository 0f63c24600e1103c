import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lenia_qd.genotype import GenomeLayout, Genotype
from lenia_qd.qd import (
    AddOutcome,
    DescriptorSpec,
    EmptyArchive,
    Individual,
    MapElitesGrid,
    MissingCrops,
    UnstructuredRepertoire,
    VariationParams,
    bootstrap_threshold,
    grid_cell,
    grid_index,
    init_population,
    iso_line_dd,
    reencode_repertoire,
    resolution_for,
    select_uniform,
    try_add_grid,
    try_add_unstructured,
)

import oracles

LAYOUT = GenomeLayout()
TOY = GenomeLayout(seed_shape=(1, 1, 3), n_kernels=0)


def genotype(rng, layout=LAYOUT):
    lo, hi = layout.lower, layout.upper
    return Genotype(lo + (hi - lo) * rng.random(layout.size), layout)


def ind(fitness, descriptor, crops=None, layout=TOY):
    return Individual(Genotype(np.full(layout.size, 0.5), layout), fitness, np.asarray(descriptor, float), crops)


def test_layout_and_bounds(rng):
    g = genotype(rng)
    assert len(g.genes) == 3117 and g.within_bounds()
    assert g.seed.shape == (32, 32, 3)
    assert g.rule_params.shape == (15, 3)
    assert LAYOUT.lower[3072 + 1] == 0.001 and LAYOUT.upper[3072 + 1] == 0.5
    back = LAYOUT.assemble(g.seed, g.mu, g.sigma, g.h)
    assert back == g


def test_iso_line_dd_degenerate(rng):
    x1, x2 = genotype(rng), genotype(rng)
    assert iso_line_dd(x1, x2, VariationParams(0, 0), rng) == x1
    interior = Genotype(np.full(LAYOUT.size, 0.25), LAYOUT)
    a = iso_line_dd(interior, interior, VariationParams(0.005, 10.0), np.random.default_rng(9))
    b = iso_line_dd(interior, interior, VariationParams(0.005, 0.0), np.random.default_rng(9))
    assert a == b


def test_iso_line_dd_clips(rng):
    x1 = Genotype(LAYOUT.upper.copy(), LAYOUT)
    child = iso_line_dd(x1, x1, VariationParams(0.5, 0), rng)
    assert child.within_bounds()


def test_iso_std_per_gene():
    x = Genotype(np.full(TOY.size, 0.5), TOY)
    rng = np.random.default_rng(0)
    draws = np.stack([iso_line_dd(x, x, VariationParams(0.005, 0.05), rng).genes for _ in range(20000)])
    std = (draws - 0.5).std(axis=0)
    assert np.all(np.abs(std / 0.005 - 1) < 0.05)


def test_init_population(rng):
    base = genotype(rng)
    assert init_population(base, 0, VariationParams(), rng) == []
    assert all(g == base for g in init_population(base, 3, VariationParams(0, 0), rng))
    pop = init_population(base, 256, VariationParams(), rng)
    assert len({g.genes.tobytes() for g in pop}) == 256


def test_resolution_and_grid_index():
    assert resolution_for(32768, 3) == 32
    assert resolution_for(32768, 2) == 181
    assert resolution_for(1024, 3) == 10
    color = DescriptorSpec.color()
    assert grid_cell([0, 0, 0], color, (32,) * 3) == (0, 0, 0)
    assert grid_cell([1, 1, 1], color, (32,) * 3) == (31, 31, 31)
    mv = DescriptorSpec.mass_velocity()
    assert grid_cell([8.0, 0.0], mv, (181, 181))[0] == 90
    assert grid_cell([100.0, -3.0], mv, (181, 181)) == (180, 0)
    assert grid_index([1, 1, 1], color, (32,) * 3) == 32**3 - 1


@given(st.lists(st.floats(allow_nan=True, allow_infinity=True), min_size=2, max_size=2))
def test_grid_index_total(values):
    spec = DescriptorSpec.angle_velocity()
    idx = grid_index(values, spec, (181, 181))
    assert 0 <= idx < 181 * 181


def test_try_add_grid_examples():
    grid = MapElitesGrid(DescriptorSpec.color(), capacity=1000)
    assert try_add_grid(grid, ind(1.0, [0.5, 0.5, 0.5])) is AddOutcome.ADDED
    assert try_add_grid(grid, ind(1.0, [0.5, 0.5, 0.5])) is AddOutcome.REJECTED
    better = ind(1.5, [0.51, 0.5, 0.5])
    assert try_add_grid(grid, better) is AddOutcome.REPLACED
    assert grid.get([0.5, 0.5, 0.5]) is better
    assert len(grid) == 1


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_grid_monotone(seed):
    rng = np.random.default_rng(seed)
    grid = MapElitesGrid(DescriptorSpec.color(), capacity=64)
    best: dict[int, float] = {}
    cov = 0
    for _ in range(300):
        cand = ind(float(rng.normal()), rng.random(3))
        key = grid.index(cand.descriptor)
        before = grid.cells.get(key)
        grid.try_add(cand)
        after = grid.cells[key]
        if before is not None:
            assert after.fitness >= before.fitness
        best[key] = max(best.get(key, -math.inf), cand.fitness)
        assert after.fitness == best[key]
        assert len(grid) >= cov
        cov = len(grid)


def test_unstructured_examples():
    rep = UnstructuredRepertoire(dimension=2, capacity=10, threshold=1.0)
    assert try_add_unstructured(rep, ind(0.0, [0, 0])) is AddOutcome.ADDED
    assert rep.try_add(ind(0.0, [0, 0])) is AddOutcome.REJECTED
    assert rep.try_add(ind(1.0, [0.5, 0])) is AddOutcome.REPLACED
    assert len(rep) == 1
    np.testing.assert_array_equal(rep.descriptors, [[0.5, 0]])
    assert rep.try_add(ind(-5.0, [3, 0])) is AddOutcome.ADDED
    with pytest.raises(ValueError):
        UnstructuredRepertoire(2).try_add(ind(0.0, [0, 0]))


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_unstructured_nearest_and_pruning_match_oracle(seed):
    rng = np.random.default_rng(seed)
    rep = UnstructuredRepertoire(dimension=3, capacity=10, threshold=0.05)
    for _ in range(25):
        d = rng.random(3)
        if len(rep):
            i, dist = rep.nearest(d)
            j, dist_o = oracles.brute_nearest(rep.descriptors, d)
            assert dist == pytest.approx(dist_o, abs=1e-12)
        rep.try_add(ind(float(rng.normal()), d))
    desc = rep.descriptors.copy()
    fit = np.array([m.fitness for m in rep.members()])
    removed = rep.enforce_capacity()
    want = sorted(oracles.brute_prune(desc, fit, 10))
    survivors = [i for i in range(len(desc)) if i not in want]
    assert len(rep) == min(10, len(desc))
    np.testing.assert_array_equal(rep.descriptors, desc[survivors])
    assert len(removed) == len(want)
    if want:
        assert rep.threshold == pytest.approx(oracles.min_nn_distance(desc[survivors]), abs=1e-12)


def test_pruning_twelve_to_ten():
    rng = np.random.default_rng(42)
    desc = rng.random((12, 8))
    fit = rng.normal(size=12)
    rep = UnstructuredRepertoire(8, capacity=10, threshold=0.0)
    for d, f in zip(desc, fit):
        rep._append(ind(f, d))
    rep.enforce_capacity()
    removed = oracles.brute_prune(desc, fit, 10)
    assert len(rep) == 10 and len(removed) == 2
    np.testing.assert_array_equal(rep.descriptors, np.delete(desc, removed, axis=0))


def test_bootstrap_threshold():
    pts = np.random.default_rng(0).random((20, 8))
    d = [np.linalg.norm(pts[i] - pts[j]) for i in range(20) for j in range(i + 1, 20)]
    assert bootstrap_threshold(pts) == pytest.approx(np.percentile(d, 10))


def test_reencode():
    crops = [np.full((2, 4, 4, 3), v, np.float32) for v in (0.1, 0.5, 0.9)]
    rep = UnstructuredRepertoire(2, capacity=10, threshold=0.01)
    for i, c in enumerate(crops):
        rep.try_add(ind(0.0, [i, 0], crops=c))

    def describe(stacks):
        return np.stack([[float(s.mean()), 0.0] for s in stacks]), np.array([-float(s.std()) for s in stacks])

    reencode_repertoire(rep, describe)
    want, fit = describe([m.crops for m in rep.members()])
    np.testing.assert_array_equal(rep.descriptors, want)
    assert [m.fitness for m in rep.members()] == list(fit)
    before = rep.descriptors.copy()
    reencode_repertoire(rep, describe)
    np.testing.assert_array_equal(rep.descriptors, before)
    rep._members[0].crops = None
    with pytest.raises(MissingCrops):
        reencode_repertoire(rep, describe)


def test_select_uniform():
    one = MapElitesGrid(DescriptorSpec.color(), capacity=8)
    member = ind(1.0, [0.2, 0.2, 0.2])
    one.try_add(member)
    rng = np.random.default_rng(0)
    assert all(m is member for m in select_uniform(one, 5, rng))
    assert select_uniform(one, 0, rng) == []
    with pytest.raises(EmptyArchive):
        select_uniform(MapElitesGrid(DescriptorSpec.color(), 8), 1, rng)
    members = [ind(float(i), [i, 0]) for i in range(100)]
    picks = select_uniform(members, 100_000, rng)
    counts = np.bincount([int(m.fitness) for m in picks], minlength=100)
    assert stats.chisquare(counts).pvalue > 0.01
