import numpy as np
import pytest

from ledkit.errors import ParameterError, ResourceCapError
from ledkit.lattice import LatticeGeometry, compute_syndrome
from ledkit.sampler import (
    OutcomeDistribution,
    SampleConfig,
    SnapshotStream,
    brute_force_probabilities,
    conditional_distribution,
    sample_basis_x,
    sample_snapshot,
)
from ledkit.sampler import _ColumnSandwich, _environments, _pinned_stack
from ledkit.batch_sampler import sample_ensemble
from ledkit.tensornet import (
    apply_column,
    build_site_tensor,
    column_mpo,
    doubled_tensor,
)


def full_clean(snapshot) -> bool:
    synd = compute_syndrome(snapshot).plaquette_values
    return bool(np.all(synd[snapshot.geometry.full_plaquette_mask()] == 1))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ParameterError):
            SampleConfig(0, 0, width_x=1, n_columns=4, seed=0)
        with pytest.raises(ParameterError):
            SampleConfig(0, 0, width_x=4, n_columns=0, seed=0)
        with pytest.raises(ParameterError):
            SampleConfig(0, 0, width_x=4, n_columns=4, seed=0, truncation_threshold=-1)


class TestOracle:
    def test_zero_coupling_uniform_over_closed_configs(self):
        dist = brute_force_probabilities(0.0, 0.0, LatticeGeometry(2, 2))
        probs = dist.probs
        nonzero = probs[probs > 1e-15]
        assert np.allclose(nonzero, nonzero[0])
        # only the single all-real plaquette (0,0) constrains the 8 qubits
        assert len(nonzero) == 128

    def test_polarized_point_mass(self):
        dist = brute_force_probabilities(0.0, 6.0, LatticeGeometry(2, 2))
        assert dist.probs[0] > 0.999  # index 0 = all bits 0 = all spins +1

    def test_normalized(self):
        dist = brute_force_probabilities(0.21, 0.1, LatticeGeometry(2, 2))
        assert abs(dist.probs.sum() - 1.0) < 1e-12

    def test_patch_cap(self):
        with pytest.raises(ResourceCapError):
            brute_force_probabilities(0.0, 0.0, LatticeGeometry(4, 3))


def sampler_sweep_probabilities(config, outcomes):
    """Product of conditional probabilities along the sweep (test helper)."""
    lx, ly = config.width_x, config.n_columns
    avg, pinned = _pinned_stack(config.g_x, config.g_z)
    site = build_site_tensor(config.g_x, config.g_z)
    pinned_tensors = [doubled_tensor(site, (c >> 1, c & 1)) for c in range(4)]
    left, rights = _environments(config, 64, ly)
    p = 1.0
    for y in range(ly):
        sandwich = _ColumnSandwich(left, rights[y], avg, pinned)
        down = sandwich.start_down()
        for x in range(lx):
            w = np.clip(sandwich.site_weights(x, down), 0, None)
            if w.sum() <= 0:
                return 0.0
            w = w / w.sum()
            code = int(outcomes[x, y])
            p *= w[code]
            if p == 0.0:
                return 0.0
            down = sandwich.pin(x, code, down)
        mpo = column_mpo([pinned_tensors[int(c)] for c in outcomes[:, y]])
        left = apply_column(left, mpo, chi_max=64, threshold=0.0)
        left.log_norm = 0.0
    return p


class TestFiniteModeAgainstOracle:
    @pytest.mark.parametrize(
        "gx,gz,lx,ly",
        [(0.0, 0.0, 2, 2), (0.17, 0.09, 2, 2), (0.12, 0.12, 3, 2), (0.08, 0.21, 2, 3)],
    )
    def test_joint_probabilities_match(self, gx, gz, lx, ly):
        import itertools

        cfg = SampleConfig(gx, gz, width_x=lx, n_columns=ly, seed=0, environment="finite")
        dist = brute_force_probabilities(gx, gz, LatticeGeometry(lx, ly))
        rng = np.random.default_rng(1)
        # all sequences on 2x2; a random subset on larger patches
        if lx * ly <= 4:
            seqs = itertools.product(range(4), repeat=lx * ly)
        else:
            seqs = (rng.integers(0, 4, size=lx * ly) for _ in range(60))
        for seq in seqs:
            outcomes = np.asarray(list(seq)).reshape(ly, lx).T
            p = sampler_sweep_probabilities(cfg, outcomes)
            bits = 0
            for cell, code in enumerate(np.asarray(outcomes).T.reshape(-1)):
                bits |= (int(code) >> 1) << (2 * cell)
                bits |= (int(code) & 1) << (2 * cell + 1)
            assert abs(p - dist.probs[bits]) < 1e-6

    def test_conditional_distribution_op(self):
        gx, gz = 0.12, 0.12
        cfg = SampleConfig(gx, gz, width_x=3, n_columns=3, seed=0, environment="finite")
        dist = brute_force_probabilities(gx, gz, LatticeGeometry(3, 3))
        rng = np.random.default_rng(7)
        outcomes = rng.integers(0, 4, size=(3, 3))
        oracle = dist.site_conditionals(outcomes)
        left, rights = _environments(cfg, 64, 3)
        site = build_site_tensor(gx, gz)
        pinned_tensors = [doubled_tensor(site, (c >> 1, c & 1)) for c in range(4)]
        i = 0
        for y in range(3):
            partial = []
            for x in range(3):
                got = conditional_distribution(left, rights[y], partial, x, gx, gz)
                assert abs(got.sum() - 1.0) < 1e-8
                assert np.abs(got - oracle[i]).max() < 1e-6
                code = int(outcomes[x, y])
                partial.append((code >> 1, code & 1))
                i += 1
            mpo = column_mpo([pinned_tensors[int(c)] for c in outcomes[:, y]])
            left = apply_column(left, mpo, chi_max=64, threshold=0.0)
            left.log_norm = 0.0


class TestInfiniteStrip:
    def test_fixed_point_snapshots_clean(self):
        stream = sample_snapshot(SampleConfig(0.0, 0.0, width_x=8, n_columns=12, seed=2))
        assert full_clean(stream.snapshot)

    def test_polarized_limit_all_plus_bulk(self):
        stream = sample_snapshot(SampleConfig(0.0, 5.0, width_x=6, n_columns=8, seed=1))
        assert np.all(stream.snapshot.values == 1)

    def test_determinism(self):
        cfg = SampleConfig(0.12, 0.12, width_x=6, n_columns=6, seed=77)
        a = sample_snapshot(cfg)
        b = sample_snapshot(cfg)
        assert np.array_equal(a.snapshot.values, b.snapshot.values)
        assert a.column_spawn_keys == b.column_spawn_keys

    def test_stream_split(self):
        stream = sample_snapshot(SampleConfig(0.0, 0.0, width_x=4, n_columns=9, seed=0))
        parts = stream.split(3)
        assert len(parts) == 3
        assert all(p.geometry.length_y == 3 for p in parts)
        assert np.array_equal(parts[1].values, stream.snapshot.values[:, :, 3:6])

    def test_bulk_translation_invariance(self):
        # single-site marginals far from the sampled edges are homogeneous
        snaps = sample_ensemble(
            SampleConfig(0.12, 0.12, width_x=8, n_columns=24, seed=5), 150, chi=8
        )
        vals = np.stack([s.values for s in snaps]).astype(float)
        bulk = vals[:, 0, 4, 6:18].mean(axis=0)  # h link at x=4, bulk columns
        spread = np.abs(bulk - bulk.mean()).max()
        stderr = 3 * vals[:, 0, 4, 6:18].std() / np.sqrt(len(snaps))
        assert spread < max(4 * stderr, 0.2)


class TestBasisX:
    def test_requires_x_basis(self):
        with pytest.raises(ParameterError):
            sample_basis_x(SampleConfig(0.1, 0.1, width_x=4, n_columns=4, seed=0))

    def test_fixed_point_vertex_stabilizers_clean(self):
        stream = sample_basis_x(
            SampleConfig(0.0, 0.0, width_x=6, n_columns=8, seed=3, basis="X")
        )
        assert stream.snapshot.basis == "X"
        assert full_clean(stream.snapshot)

    def test_duality_swap_statistics(self):
        # X-basis statistics at (gx, gz) match Z-basis statistics at (gz, gx)
        xs = sample_ensemble(
            SampleConfig(0.3, 0.0, width_x=8, n_columns=16, seed=8, basis="X"), 120, chi=8
        )
        zs = sample_ensemble(
            SampleConfig(0.0, 0.3, width_x=8, n_columns=16, seed=9), 120, chi=8
        )
        dx = [compute_syndrome(s).anyon_density() for s in xs]
        dz = [compute_syndrome(s).anyon_density() for s in zs]
        se = np.std(dx) / np.sqrt(len(dx)) + np.std(dz) / np.sqrt(len(dz))
        assert abs(np.mean(dx) - np.mean(dz)) < max(3 * se, 0.02)


class TestBatchEnsemble:
    def test_matches_exact_path_statistically(self):
        gx = gz = 0.12
        cfg = SampleConfig(gx, gz, width_x=10, n_columns=12, seed=11)
        batched = sample_ensemble(cfg, 300, chi=8)
        exact = [
            sample_snapshot(
                SampleConfig(gx, gz, width_x=10, n_columns=12, seed=9000 + i)
            ).snapshot
            for i in range(120)
        ]
        db = [compute_syndrome(s).anyon_density() for s in batched]
        de = [compute_syndrome(s).anyon_density() for s in exact]
        se = np.std(db) / np.sqrt(len(db)) + np.std(de) / np.sqrt(len(de))
        assert abs(np.mean(db) - np.mean(de)) < 4 * se

    def test_deterministic(self):
        cfg = SampleConfig(0.1, 0.05, width_x=6, n_columns=6, seed=4)
        a = sample_ensemble(cfg, 20, chi=6)
        b = sample_ensemble(cfg, 20, chi=6)
        assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))

    def test_clean_at_fixed_point(self):
        snaps = sample_ensemble(SampleConfig(0.0, 0.0, width_x=6, n_columns=8, seed=1), 25, chi=6)
        assert all(full_clean(s) for s in snaps)


def test_outcome_distribution_indexing():
    dist = brute_force_probabilities(0.1, 0.2, LatticeGeometry(2, 2))
    stream = sample_snapshot(
        SampleConfig(0.1, 0.2, width_x=2, n_columns=2, seed=0, environment="finite")
    )
    idx = dist.index_of(stream.snapshot)
    assert 0 <= idx < 256
    assert dist.probability(stream.snapshot) == dist.probs[idx]
