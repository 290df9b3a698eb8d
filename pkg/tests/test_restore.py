#!/usr/bin/env python3

# patchrestore test cases
# Copyright (C) 2014 Ingo Ruhnke <grumbel@gmail.com>
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.


import csv
import os
import tempfile
import types
import unittest

import numpy as np
import numpy.testing

import patchrestore.restore
from patchrestore.config import SolverConfig
from patchrestore.dataset import PatchDataset, sample_patch_dataset
from patchrestore.degrade import Blur, Downsample, Identity, Mask, NoiseModel, degrade, load_kernel
from patchrestore.features import bandwidth_from_dataset
from patchrestore.image import PatchGrid, bicubic_resize, extract_patches, psnr, synthetic_image
from patchrestore.linsolve import CGConfig


KERNEL_DIR = os.path.join(os.path.dirname(__file__), "..", "data", "kernels")

SLOW = os.environ.get("PATCHRESTORE_SLOW_TESTS") == "1"


def dense_operator(op):
    """Columns B e_j of a degradation operator"""
    n = int(np.prod(op.input_shape))
    columns = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        columns.append(op.forward(e.reshape(op.input_shape)).ravel())
    return np.array(columns).T


def patch_matrix(grid, p):
    """R_p as a (d*d, height*width) selection matrix"""
    d = grid.patch_size
    r, c = grid.position(p)
    R = np.zeros((d * d, grid.height * grid.width))
    for i in range(d):
        for j in range(d):
            R[i * d + j, (r + i) * grid.width + (c + j)] = 1.0
    return R


def random_weights(rng, n, m):
    weights = rng.random((n, m))
    return weights / weights.sum(axis=1, keepdims=True)


def small_config(**kwargs):
    cfg = SolverConfig()
    cfg.sdca_max_steps = 100
    cfg.chunk_size = 64
    cfg.workers = 1
    for key, value in kwargs.items():
        setattr(cfg, key, value)
    return cfg


class RestoreTestCase(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(31)
        self.kernel = self.rng.random((3, 3))

    def tearDown(self):
        pass

    def blur_dataset(self, m=100, d=4, sigma=0.01):
        images = [synthetic_image(24, 24, seed=100 + i) for i in range(3)]
        kernel = self.kernel
        return sample_patch_dataset(images, lambda shape, seed: Blur(shape, kernel), NoiseModel(sigma),
                                    m=m, d=d, seed=4)

    def test_solve_mse_fidelity_dominates(self):
        y = synthetic_image(12, 12, seed=1)
        op = Identity(y.shape)
        data = PatchDataset(self.rng.random((5, 4, 4)), self.rng.random((5, 4, 4)))
        grid = PatchGrid(12, 12, 4)
        weights = random_weights(self.rng, grid.num_patches, 5)
        x = patchrestore.restore.solve_mse(y, op, data, weights, 1e12, grid)
        numpy.testing.assert_allclose(x, y, atol=1e-4)

    def test_solve_mse_single_patch_average(self):
        data = PatchDataset(self.rng.random((6, 8, 8)), self.rng.random((6, 8, 8)))
        alpha = random_weights(self.rng, 1, 6)
        y = np.zeros((8, 8))
        x = patchrestore.restore.solve_mse(y, Identity(y.shape), data, alpha, 0.0, cfg=CGConfig(1e-12, 100))
        numpy.testing.assert_allclose(x, np.tensordot(alpha[0], data.clean, axes=1), atol=1e-10)

    def test_solve_mse_dense_oracle(self):
        grid = PatchGrid(12, 12, 4)
        op = Blur((12, 12), self.kernel)
        y = self.rng.random((12, 12))
        data = PatchDataset(self.rng.random((5, 4, 4)), self.rng.random((5, 4, 4)))
        weights = random_weights(self.rng, grid.num_patches, 5)
        gamma = 7.0

        B = dense_operator(op)
        A = gamma * B.T @ B
        b = gamma * B.T @ y.ravel()
        for p in range(grid.num_patches):
            R = patch_matrix(grid, p)
            A += weights[p].sum() * R.T @ R
            b += R.T @ (weights[p] @ data.clean_vectors)
        expected = np.linalg.solve(A, b).reshape(12, 12)

        x = patchrestore.restore.solve_mse(y, op, data, weights, gamma, grid, CGConfig(1e-12, 5000))
        numpy.testing.assert_allclose(x, expected, atol=1e-6)

    def test_solve_mse_weight_scale(self):
        grid = PatchGrid(12, 12, 4)
        op = Blur((12, 12), self.kernel)
        y = self.rng.random((12, 12))
        data = PatchDataset(self.rng.random((5, 4, 4)), self.rng.random((5, 4, 4)))
        weights = random_weights(self.rng, grid.num_patches, 5)
        cfg = CGConfig(1e-12, 5000)

        x1 = patchrestore.restore.solve_mse(y, op, data, weights, 3.0, grid, cfg)
        x2 = patchrestore.restore.solve_mse(y, op, data, 10.0 * weights, 30.0, grid, cfg)
        numpy.testing.assert_allclose(x1, x2, atol=1e-8)

    def test_solve_mse_lazy_weights(self):
        grid = PatchGrid(12, 12, 4)
        y = self.rng.random((12, 12))
        data = PatchDataset(self.rng.random((20, 4, 4)), self.rng.random((20, 4, 4)))
        weights = patchrestore.restore.observation_weights(y, grid, data)
        cfg = CGConfig(1e-12, 5000)

        lazy = patchrestore.restore.solve_mse(y, Identity(y.shape), data, weights, 5.0, grid, cfg)
        dense = patchrestore.restore.solve_mse(y, Identity(y.shape), data, weights.matrix(), 5.0, grid, cfg)
        numpy.testing.assert_allclose(lazy, dense, atol=1e-12)
        numpy.testing.assert_allclose(weights.matrix().sum(axis=1), 1.0)

    def test_x_update_averages(self):
        grid = PatchGrid(10, 10, 4)
        z = self.rng.random((grid.num_patches, 4, 4))
        x = patchrestore.restore.x_update(z, np.zeros((10, 10)), Identity((10, 10)), 2.0, 0.0, grid,
                                          CGConfig(1e-12, 100))

        total = np.zeros((10, 10))
        count = np.zeros((10, 10))
        for p in range(grid.num_patches):
            r, c = grid.position(p)
            total[r:r + 4, c:c + 4] += z[p]
            count[r:r + 4, c:c + 4] += 1
        numpy.testing.assert_allclose(x, total / count, atol=1e-10)

    def test_x_update_consistent_patches(self):
        w = synthetic_image(10, 10, seed=3)
        grid = PatchGrid(10, 10, 4)
        z = extract_patches(w, grid)
        x = patchrestore.restore.x_update(z, np.zeros((10, 10)), Identity((10, 10)), 5.0, 0.0, grid,
                                          CGConfig(1e-12, 100))
        numpy.testing.assert_allclose(x, w, atol=1e-10)

    def test_x_update_dense_oracle(self):
        grid = PatchGrid(12, 12, 4)
        op = Blur((12, 12), self.kernel)
        y = self.rng.random((12, 12))
        z = self.rng.random((grid.num_patches, 16))
        beta, gamma = 2.0, 5.0

        B = dense_operator(op)
        A = gamma * B.T @ B
        b = gamma * B.T @ y.ravel()
        for p in range(grid.num_patches):
            R = patch_matrix(grid, p)
            A += beta * R.T @ R
            b += beta * R.T @ z[p]
        expected = np.linalg.solve(A, b).reshape(12, 12)

        x = patchrestore.restore.x_update(z, y, op, beta, gamma, grid, CGConfig(1e-12, 5000))
        numpy.testing.assert_allclose(x, expected, atol=1e-6)

    def test_energy_zero_cases(self):
        x = np.full((8, 8), 0.4)
        data = PatchDataset(np.full((1, 4, 4), 0.4), np.full((1, 4, 4), 0.4))
        grid = PatchGrid(8, 8, 4)
        weights = np.ones((grid.num_patches, 1))
        self.assertAlmostEqual(patchrestore.restore.energy_l2(x, x, Identity(x.shape), data, weights, 0.0), 0.0)

        x = self.rng.random((8, 8))
        op = Blur(x.shape, self.kernel)
        data = PatchDataset(self.rng.random((3, 4, 4)), self.rng.random((3, 4, 4)))
        weights = np.zeros((grid.num_patches, 3))
        self.assertEqual(patchrestore.restore.energy_l2(x, op.forward(x), op, data, weights, 50.0), 0.0)

    def test_energy_double_loop(self):
        x = self.rng.random((9, 9))
        y = self.rng.random((9, 9))
        op = Blur(x.shape, self.kernel)
        data = PatchDataset(self.rng.random((4, 3, 3)), self.rng.random((4, 3, 3)))
        grid = PatchGrid(9, 9, 3)
        weights = random_weights(self.rng, grid.num_patches, 4)
        gamma = 3.5

        expected = 0.0
        for p in range(grid.num_patches):
            r, c = grid.position(p)
            for i in range(4):
                expected += weights[p, i] * np.linalg.norm(x[r:r + 3, c:c + 3] - data.clean[i])
        expected += 0.5 * gamma * np.sum((y - op.forward(x)) ** 2)

        energy = patchrestore.restore.energy_l2(x, y, op, data, weights, gamma, chunk=7)
        self.assertAlmostEqual(energy, expected, delta=1e-9)

    def test_degraded_queries(self):
        y = self.rng.random((8, 8))
        grid = PatchGrid(16, 16, 4)
        queries = patchrestore.restore.degraded_queries(y, grid, 2, 2)
        self.assertEqual(queries.shape, (grid.num_patches, 4))

        features = patchrestore.restore.patch_features(y, 2)
        lo = PatchGrid(8, 8, 2)
        numpy.testing.assert_array_equal(queries[grid.index(5, 7)], features[lo.index(2, 3)])
        # bottom-right patch
        numpy.testing.assert_array_equal(queries[grid.index(12, 12)], features[lo.index(6, 6)])

    def test_initial_estimate(self):
        y = self.rng.random((8, 8))
        numpy.testing.assert_array_equal(patchrestore.restore.initial_estimate(y, Identity(y.shape)), y)

        op = Downsample((16, 16), 2)
        x0 = patchrestore.restore.initial_estimate(y, op)
        self.assertEqual(x0.shape, (16, 16))
        numpy.testing.assert_allclose(x0, bicubic_resize(y, 16, 16))

    def test_hqs_strong_coupling(self):
        y = synthetic_image(16, 16, seed=8)
        data = PatchDataset(self.rng.random((30, 4, 4)), self.rng.random((30, 4, 4)))
        cfg = small_config(beta0=1e8, iterations=1, gamma=0.0)
        x, trace = patchrestore.restore.hqs_restore(y, Identity(y.shape), data, cfg)
        numpy.testing.assert_allclose(x, y, atol=1e-3)
        self.assertEqual(len(trace), 1)

    def test_hqs_descent(self):
        data = self.blur_dataset()
        clean = synthetic_image(24, 24, seed=9)
        op = Blur(clean.shape, self.kernel)
        y = degrade(op, clean, NoiseModel(0.01, 1))

        cfg = small_config(iterations=3)
        states = []
        x, trace = patchrestore.restore.hqs_restore(y, op, data, cfg, reference=clean,
                                                    progress_cb=lambda state: states.append(state.iteration))

        self.assertEqual(x.shape, clean.shape)
        self.assertEqual(states, [1, 2, 3])
        self.assertEqual([entry.beta for entry in trace], [3.0, 6.0, 12.0])
        for entry in trace:
            self.assertLessEqual(entry.energy_z, entry.energy_start)
            self.assertLessEqual(entry.energy_x, entry.energy_z + 1e-9 * abs(entry.energy_z))
            self.assertGreaterEqual(entry.gap, 0.0)
            self.assertIsNotNone(entry.psnr)

    def test_package_keeps_submodules(self):
        import patchrestore
        self.assertIsInstance(patchrestore.restore, types.ModuleType)
        self.assertIsInstance(patchrestore.degrade, types.ModuleType)
        self.assertIs(patchrestore.restore.solve_mse, patchrestore.solve_mse)
        self.assertIs(patchrestore.degrade.apply, patchrestore.apply)

    def test_bandwidth_population(self):
        data = self.blur_dataset(m=60)
        y = synthetic_image(16, 16, seed=13)
        grid = PatchGrid(16, 16, 4)

        degraded = patchrestore.restore.observation_weights(y, grid, data)
        clean = patchrestore.restore.observation_weights(y, grid, data, bandwidth_population="clean")
        self.assertAlmostEqual(degraded.model.bandwidth, bandwidth_from_dataset(data.degraded_features), places=12)
        self.assertAlmostEqual(clean.model.bandwidth, bandwidth_from_dataset(data.clean_features), places=12)
        self.assertNotAlmostEqual(clean.model.bandwidth, degraded.model.bandwidth, places=6)
        # queries still compare against the degraded training patches
        numpy.testing.assert_array_equal(clean.features, data.degraded_features)

        with self.assertRaises(ValueError):
            patchrestore.restore.observation_weights(y, grid, data, bandwidth_population="noisy")

        op = Blur(y.shape, self.kernel)
        cfg = small_config(iterations=1, bandwidth_population="clean")
        x, trace = patchrestore.restore.hqs_restore(op.forward(y), op, data, cfg)
        self.assertEqual(len(trace), 1)
        self.assertTrue(np.all(np.isfinite(x)))

    def test_drop_dc(self):
        data = self.blur_dataset(m=60)
        y = synthetic_image(16, 16, seed=14)
        grid = PatchGrid(16, 16, 4)

        weights = patchrestore.restore.observation_weights(y, grid, data, drop_dc=True)
        self.assertEqual(weights.queries.shape, (grid.num_patches, 15))
        numpy.testing.assert_array_equal(weights.features, data.degraded_features[:, 1:])

        # a brightness offset only moves the DC coefficient
        shifted = patchrestore.restore.observation_weights(y + 0.1, grid, data, drop_dc=True)
        numpy.testing.assert_allclose(shifted.matrix(), weights.matrix(), rtol=0, atol=1e-12)

        clean_weights = patchrestore.restore.estimate_weights(y, grid, data, drop_dc=True)
        numpy.testing.assert_array_equal(clean_weights.features, data.clean_features[:, 1:])

        op = Blur(y.shape, self.kernel)
        x = patchrestore.restore.mse_restore(op.forward(y), op, data, small_config(drop_dc=True, gamma=50.0))
        self.assertTrue(np.all(np.isfinite(x)))

    def test_hqs_alpha_schedules(self):

        data = self.blur_dataset(m=60)
        clean = synthetic_image(24, 24, seed=10)
        op = Blur(clean.shape, self.kernel)
        y = degrade(op, clean, NoiseModel(0.01, 2))

        for schedule, recompute in [("always-degraded", True), ("switch-to-clean", False)]:
            cfg = small_config(iterations=2, alpha_schedule=schedule, recompute_alpha=recompute)
            x, trace = patchrestore.restore.hqs_restore(y, op, data, cfg)
            self.assertEqual(len(trace), 2)
            self.assertTrue(np.all(np.isfinite(x)))

    def test_hqs_upsample(self):
        images = [synthetic_image(24, 24, seed=200 + i) for i in range(2)]
        data = sample_patch_dataset(images, lambda shape, seed: Downsample(shape, 2), NoiseModel(0.0),
                                    m=80, d=4, seed=1)
        clean = synthetic_image(16, 16, seed=12)
        op = Downsample(clean.shape, 2)
        y = op.forward(clean)

        cfg = small_config(iterations=2, gamma=6000.0, beta0=0.5)
        x, trace = patchrestore.restore.hqs_restore(y, op, data, cfg)
        self.assertEqual(x.shape, (16, 16))
        self.assertEqual(len(trace), 2)

    def test_hqs_rejects_krr(self):
        y = self.rng.random((8, 8))
        data = PatchDataset(self.rng.random((5, 4, 4)), self.rng.random((5, 4, 4)))
        with self.assertRaises(ValueError):
            patchrestore.restore.hqs_restore(y, Identity(y.shape), data, small_config(estimator="krr"))

    def test_hqs_shape_mismatch(self):
        data = PatchDataset(self.rng.random((5, 4, 4)), self.rng.random((5, 4, 4)))
        with self.assertRaises(ValueError):
            patchrestore.restore.hqs_restore(np.zeros((8, 8)), Identity((9, 9)), data, small_config())

    def test_restore_dispatch(self):
        y = self.rng.random((10, 10))
        op = Mask.random(y.shape, 0.7, seed=3)
        data = PatchDataset(self.rng.random((12, 4, 4)), self.rng.random((12, 4, 4)))

        x, trace = patchrestore.restore.restore(op.forward(y), op, data, "mse", small_config())
        self.assertEqual(x.shape, y.shape)
        self.assertEqual(trace, [])

        cfg = small_config(estimator="krr", krr_lambda=0.05)
        x, trace = patchrestore.restore.restore(y, Identity(y.shape), data, "mse", cfg)
        self.assertTrue(np.all(np.isfinite(x)))

        with self.assertRaises(ValueError):
            patchrestore.restore.restore(y, op, data, "tv", small_config())

    def test_write_trace(self):
        trace = [patchrestore.restore.TraceEntry(1, 3.0, 5.0, 4.0, 3.5, 0.1, 21.5),
                 patchrestore.restore.TraceEntry(2, 6.0, 4.0, 3.0, 2.5, 0.1, None)]
        with tempfile.TemporaryDirectory() as tmpdir:
            filename = os.path.join(tmpdir, "trace.csv")
            patchrestore.restore.write_trace(trace, filename)
            with open(filename, "rt", newline="") as fin:
                rows = list(csv.reader(fin))

        self.assertEqual(rows[0], ["iter", "beta", "energy", "psnr"])
        self.assertEqual(rows[1], ["1", "3", "3.5", "21.5000"])
        self.assertEqual(rows[2], ["2", "6", "2.5", ""])

    @unittest.skipUnless(SLOW, "set PATCHRESTORE_SLOW_TESTS=1 to run")
    def test_self_dataset(self):
        clean = synthetic_image(32, 32, seed=20)
        op = Identity(clean.shape)
        y = degrade(op, clean, NoiseModel(0.05, 3))

        grid = PatchGrid(32, 32, 4)
        data = PatchDataset(extract_patches(clean, grid), extract_patches(y, grid))

        cfg = small_config(gamma=64.0, beta0=0.015, delta=2.0, iterations=5, sdca_max_steps=300)
        x, _ = patchrestore.restore.hqs_restore(y, op, data, cfg)
        self.assertGreaterEqual(psnr(np.clip(x, 0, 1), clean), psnr(y, clean))

    @unittest.skipUnless(SLOW, "set PATCHRESTORE_SLOW_TESTS=1 to run")
    def test_hqs_descent_deblur(self):
        kernel = load_kernel(os.path.join(KERNEL_DIR, "kernel1_17x17.txt"))
        images = [synthetic_image(64, 64, seed=500 + i) for i in range(4)]
        data = sample_patch_dataset(images, lambda shape, seed: Blur(shape, kernel), NoiseModel(0.01),
                                    m=1000, d=8, seed=0)

        clean = synthetic_image(64, 64, seed=44)
        op = Blur(clean.shape, kernel)
        y = degrade(op, clean, NoiseModel(0.01, 6))

        cfg = SolverConfig()
        self.assertEqual(cfg.estimator, "nw")
        x, trace = patchrestore.restore.hqs_restore(y, op, data, cfg)
        self.assertEqual(len(trace), 8)
        for entry in trace:
            self.assertLessEqual(entry.energy_z, entry.energy_start + 1e-8 * abs(entry.energy_start))
            self.assertLessEqual(entry.energy_x, entry.energy_z + 1e-8 * abs(entry.energy_z))

    @unittest.skipUnless(SLOW, "set PATCHRESTORE_SLOW_TESTS=1 to run")
    def test_deblur_margin(self):

        kernel = load_kernel(os.path.join(KERNEL_DIR, "kernel1_17x17.txt"))
        images = [synthetic_image(64, 64, seed=300 + i) for i in range(4)]
        data = sample_patch_dataset(images, lambda shape, seed: Blur(shape, kernel), NoiseModel(0.01),
                                    m=2000, d=8, seed=0)

        clean = synthetic_image(64, 64, seed=42)
        op = Blur(clean.shape, kernel)
        y = degrade(op, clean, NoiseModel(0.01, 5))

        cfg = SolverConfig()
        x, _ = patchrestore.restore.hqs_restore(y, op, data, cfg)
        self.assertGreaterEqual(psnr(np.clip(x, 0, 1), clean), psnr(y, clean) + 1.0)

    @unittest.skipUnless(SLOW, "set PATCHRESTORE_SLOW_TESTS=1 to run")
    def test_upsample_margin(self):
        images = [synthetic_image(64, 64, seed=400 + i) for i in range(4)]
        data = sample_patch_dataset(images, lambda shape, seed: Downsample(shape, 2), NoiseModel(0.0),
                                    m=2000, d=8, seed=0)

        clean = synthetic_image(64, 64, seed=43)
        op = Downsample(clean.shape, 2)
        y = op.forward(clean)

        cfg = SolverConfig()
        cfg.gamma, cfg.beta0, cfg.delta, cfg.iterations = 6000.0, 0.5, 2.0, 3
        x, _ = patchrestore.restore.hqs_restore(y, op, data, cfg)
        bicubic = psnr(np.clip(bicubic_resize(y, 64, 64), 0, 1), clean)
        self.assertGreaterEqual(psnr(np.clip(x, 0, 1), clean), bicubic + 0.3)


if __name__ == '__main__':
    unittest.main()


# EOF #
