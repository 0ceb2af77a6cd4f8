import json
import math
import time

import numpy as np
import pytest

from pixdoherty import emoracle as em
from pixdoherty import pixelgrid as pg
from pixdoherty.errors import ConnectivityStarvation
from pixdoherty.netalg import Kind, NetworkMatrix, gamma_of_load, permute_ports, reciprocity_error, s_to_z, z_to_s

from .oracles import ports_connected_uf

FREQS = em.FrequencyGrid().freqs


def connected_layout(n, seed):
    rng = np.random.default_rng(seed)
    while True:
        lay = pg.random_layout(n, n, 0.6, 0.1, rng)
        if pg.is_connected(lay):
            return lay


class TestMeshPhysics:
    def test_ladder_against_hand_nodal_matrix(self):
        """Straight west-east strip on 5x5: compare with an explicitly stamped 5-node ladder."""
        cells = np.zeros((5, 5), dtype=np.uint8)
        cells[2, :] = 1
        lay = pg.PixelLayout(cells)
        p = em.OracleParams()
        z = em.port_impedance(lay, FREQS, p)
        for k, f in enumerate(FREQS):
            w = 2 * math.pi * f
            ys = 1 / (p.series_resistance_per_cell + 1j * w * p.series_inductance_per_cell)
            yg = p.shunt_conductance_per_cell + 1j * w * p.shunt_capacitance_per_cell
            y = np.zeros((5, 5), dtype=complex)
            for a in range(5):
                y[a, a] += yg
                if a < 4:
                    y[a, a] += ys
                    y[a + 1, a + 1] += ys
                    y[a, a + 1] -= ys
                    y[a + 1, a] -= ys
            zl = np.linalg.inv(y)
            assert z[k, 0, 0] == pytest.approx(zl[0, 0], rel=1e-12)
            assert z[k, 0, 2] == pytest.approx(zl[0, 4], rel=1e-12)
            assert z[k, 1, 1] == pytest.approx(1 / yg, rel=1e-12)
            assert z[k, 0, 1] == 0

    def test_isolated_ports_are_near_open(self):
        lay = pg.PixelLayout(np.zeros((15, 15)))
        s = em.simulate(lay, FREQS).data
        diag = np.diagonal(s, axis1=1, axis2=2)
        assert np.max(np.abs(np.abs(diag) - 1)) < 1e-3
        off = s - diag[:, :, None] * np.eye(4)
        assert np.max(np.abs(off)) == 0

    def test_isolated_ports_open_in_small_shunt_limit(self):
        p = em.OracleParams(shunt_capacitance_per_cell=1e-18, shunt_conductance_per_cell=1e-9)
        s = em.simulate(pg.PixelLayout(np.zeros((15, 15))), FREQS, p).data
        assert np.max(np.abs(np.diagonal(s, axis1=1, axis2=2) - 1)) < 1e-3

    @pytest.mark.parametrize("seed", range(5))
    def test_reciprocal_and_passive(self, seed):
        s = em.simulate(connected_layout(15, seed), FREQS)
        assert reciprocity_error(s.data) < 1e-9
        assert np.max(np.linalg.svd(s.data, compute_uv=False)) <= 1 + 1e-9

    def test_lossless_limit_is_unitary(self):
        p = em.OracleParams(series_resistance_per_cell=0.0, shunt_conductance_per_cell=0.0)
        s = em.simulate(connected_layout(10, 3), FREQS, p).data
        eye = np.eye(4)
        worst = max(np.max(np.abs(m.conj().T @ m - eye)) for m in s)
        assert worst < 1e-6

    def test_half_turn_symmetric_layout(self):
        rng = np.random.default_rng(11)
        half = (rng.random((15, 15)) < 0.6).astype(np.uint8)
        cells = np.maximum(half, np.rot90(half, 2))
        lay = pg.PixelLayout(cells)
        assert pg.transform(lay, 2) == lay
        s = em.simulate(lay, FREQS)
        perm = pg.port_permutation(lay, 2)
        assert np.max(np.abs(permute_ports(s, perm).data - s.data)) < 1e-9

    @pytest.mark.parametrize("n", [8, 9])
    def test_d4_consistency(self, n):
        lay = connected_layout(n, 2)
        s = em.simulate(lay, FREQS)
        for lay_k, s_k, k in pg.augment(lay, s):
            direct = em.simulate(lay_k, FREQS)
            assert np.max(np.abs(direct.data - s_k.data)) < 1e-9, k

    def test_feeds_must_be_metal(self):
        lay = pg.PixelLayout(np.zeros((5, 5)), force_ports=False)
        with pytest.raises(Exception):
            em.simulate(lay, FREQS)


class TestTwoPort:
    def test_terminations(self):
        s4 = em.simulate(connected_layout(8, 4), FREQS)
        s2 = em.combiner_two_port(s4)
        # Z-domain check: open port 4 means dropping its row/column of Z; load port 3 with 50 ohm
        z = s_to_z(s4).data[:, :3, :3]
        z2 = z[:, :2, :2] - z[:, :2, 2:3] * z[:, 2:3, :2] / (z[:, 2:3, 2:3] + 50.0)
        want = z_to_s(NetworkMatrix(Kind.IMPEDANCE, FREQS, z2)).data
        assert np.max(np.abs(s2.data - want)) < 1e-9
        assert gamma_of_load(math.inf) == 1

    def test_vector_layout_and_round_trip(self):
        s2 = em.combiner_two_port(em.simulate(connected_layout(8, 5), FREQS))
        v = em.two_port_vector(s2)
        assert v.size == 78
        assert v[0] == s2.data[0, 0, 0].real
        assert v[3] == s2.data[0, 0, 1].imag
        assert v[6 + 4] == s2.data[1, 1, 1].real
        back = em.vector_to_two_port(v, FREQS)
        for i, j in ((0, 0), (0, 1), (1, 1)):
            assert np.array_equal(back.data[:, i, j], s2.data[:, i, j])
        assert np.max(np.abs(back.data - s2.data)) < 1e-12
        parts = em.split_vector(v, 13)
        assert np.array_equal(parts["S22"], s2.data[:, 1, 1])
        assert np.all(np.abs(v) <= 1)


class TestDataset:
    CFG = em.DatasetConfig(rows=8, cols=8)

    def test_records_and_determinism(self, tmp_path):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        st = em.generate_dataset(12, self.CFG, base_seed=5, out_path=a)
        em.generate_dataset(12, self.CFG, base_seed=5, out_path=b, jobs=2)
        assert a.read_bytes() == b.read_bytes()
        lines = a.read_text().splitlines()
        assert len(lines) == 96 and st["n_records"] == 96
        rec = json.loads(lines[9])
        assert set(rec) == {"layout_text", "freqs_hz", "z_ref", "s_params_real_imag_flat", "provenance"}
        assert rec["provenance"]["structure"] == 1 and rec["provenance"]["augment_element"] == 1
        assert rec["provenance"]["seed"] == 6
        assert len(rec["s_params_real_imag_flat"]) == 13 * 16 * 2
        stats = json.loads((tmp_path / "a.jsonl.stats.json").read_text())
        assert {"n_structures", "n_records", "rejection_rate", "elapsed_s"} <= set(stats)

    def test_records_are_valid_pairs(self, tmp_path):
        p = tmp_path / "d.jsonl"
        em.generate_dataset(3, self.CFG, base_seed=0, out_path=p)
        for rec in em.read_dataset(p):
            assert ports_connected_uf(rec.layout.cells, rec.layout.port_cells())
            direct = em.simulate(rec.layout, rec.s4.freqs)
            assert np.max(np.abs(direct.data - rec.s4.data)) < 1e-9

    def test_arrays(self, tmp_path):
        p = tmp_path / "d.jsonl"
        em.generate_dataset(4, self.CFG, base_seed=0, out_path=p)
        x, y, f, g = em.dataset_arrays(p)
        assert x.shape == (32, 8, 8) and y.shape == (32, 78)
        assert g.tolist() == sorted(g.tolist()) and set(g.tolist()) == {0, 1, 2, 3}

    def test_starvation(self, tmp_path):
        cfg = em.DatasetConfig(rows=15, cols=15, density_mean=0.05, density_std=0.0)
        with pytest.raises(ConnectivityStarvation):
            em.generate_dataset(1, cfg, out_path=tmp_path / "x.jsonl")
        assert not (tmp_path / "x.jsonl").exists()
        assert not list(tmp_path.glob("*.part"))

    def test_desk_throughput(self, tmp_path):
        t0 = time.perf_counter()
        st = em.generate_dataset(1000, self.CFG, base_seed=0, out_path=tmp_path / "big.jsonl")
        assert time.perf_counter() - t0 < 300
        assert st["n_records"] == 8000
