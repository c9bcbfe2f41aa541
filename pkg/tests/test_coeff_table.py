import io
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from spectral_vms.coeff_table import (StabTable, TableFormatError, _node_count, build_table,
                                      check_table_symmetry, direct_psi, export_csv, load_table,
                                      query, save_table, table_from_bytes, table_to_bytes)
from spectral_vms.stabilization import psi

SWEEP_POINTS = np.random.default_rng(12345).uniform(-30, 30, size=(1000, 2))


@pytest.fixture(scope="module")
def small():
    return build_table((-1.0, 1.0), step=1.0)


@pytest.fixture(scope="module")
def sweep_exact():
    return direct_psi(SWEEP_POINTS[:, 0], SWEEP_POINTS[:, 1])


class TestBuild:
    def test_three_by_three(self, small):
        assert small.shape == (3, 3) and small.values.size == 9
        assert small.values[1, 1] == psi((0.0, 0.0))

    def test_default_grid_size(self):
        assert _node_count(-32, 32, 0.125) == 513

    def test_node_equals_direct_evaluation(self, table8):
        p = 7.0711 * np.array([np.cos(np.radians(72)), np.sin(np.radians(72))])
        i, k = np.rint((p - (-8.0)) / 0.125).astype(int)
        node = table8.node(i, k)
        assert table8.values[i, k] == psi(node)
        assert query(table8, node) == psi(node)

    def test_values_positive_and_symmetric(self, table8):
        assert np.all(table8.values > 0)
        assert check_table_symmetry(table8) < 1e-10

    def test_deterministic(self):
        a = build_table((-2.0, 2.0), step=0.5)
        b = build_table((-2.0, 2.0), step=0.5)
        assert table_to_bytes(a) == table_to_bytes(b)

    def test_rectangular_range(self):
        t = build_table((0.0, 2.0), (-1.0, 0.0), step=0.5)
        assert t.shape == (5, 3)
        assert t.values[4, 0] == pytest.approx(psi((2.0, -1.0)), rel=1e-15)

    def test_errors(self):
        with pytest.raises(ValueError, match="whole number"):
            build_table((-1.0, 1.0), step=0.3)
        with pytest.raises(ValueError):
            build_table((-1.0, 1.0), step=0.0)
        with pytest.raises(ValueError):
            build_table((-61.0, 61.0), step=61.0)

    def test_symmetry_check_detects_tampering(self, small):
        vals = small.values.copy()
        vals[0, 0] *= 1.001
        bad = StabTable(-1.0, 1.0, -1.0, 1.0, 1.0, 40, 40, vals)
        with pytest.raises(ArithmeticError):
            check_table_symmetry(bad)

    def test_values_read_only(self, small):
        with pytest.raises(ValueError):
            small.values[0, 0] = 1.0


class TestPersistence:
    def test_round_trip(self, table8, tmp_path):
        crc = save_table(table8, tmp_path / "t.vmst")
        back = load_table(tmp_path / "t.vmst")
        assert crc == table8.checksum()
        assert back.values.tobytes() == table8.values.tobytes()
        assert (back.pe1_min, back.pe1_max, back.pe2_min, back.pe2_max, back.step, back.m1, back.m2) \
            == (table8.pe1_min, table8.pe1_max, table8.pe2_min, table8.pe2_max, table8.step, 40, 40)

    def test_layout(self, small):
        data = table_to_bytes(small)
        assert data[:4] == b"VMST"
        assert int.from_bytes(data[4:8], "little") == 1
        assert len(data) == 4 + 4 + 5 * 8 + 4 * 4 + 9 * 8 + 4

    def test_corrupted_value(self, small):
        data = bytearray(table_to_bytes(small))
        data[80] ^= 0x01
        with pytest.raises(TableFormatError, match="checksum"):
            table_from_bytes(bytes(data))

    @pytest.mark.parametrize("mutate,match", [
        (lambda d: b"XXXX" + d[4:], "magic"),
        (lambda d: d[:4] + (2).to_bytes(4, "little") + d[8:], "version"),
        (lambda d: d[:-10], "truncated"),
        (lambda d: d[:20], "truncated"),
        (lambda d: d + b"\0", "trailing"),
    ])
    def test_format_errors(self, small, mutate, match):
        with pytest.raises(TableFormatError, match=match):
            table_from_bytes(mutate(table_to_bytes(small)))

    def test_csv(self, small):
        lines = export_csv(small).splitlines()
        assert lines[0] == "pe1,pe2,psi" and len(lines) == 10
        p1, p2, v = map(float, lines[5].split(","))
        assert (p1, p2) == (0.0, 0.0) and v == small.values[1, 1]


class TestQuery:
    def test_nodes_exact(self, table8):
        rng = np.random.default_rng(0)
        i = rng.integers(0, table8.shape[0], 200)
        k = rng.integers(0, table8.shape[1], 200)
        p1 = table8.pe1_min + i * table8.step
        p2 = table8.pe2_min + k * table8.step
        assert np.array_equal(query(table8, p1, p2), table8.values[i, k])

    def test_bilinear_blend(self):
        vals = np.array([[1.0, 2.0], [3.0, 7.0]])
        t = StabTable(0.0, 1.0, 0.0, 1.0, 1.0, 40, 40, vals)
        # (u, v) = (0.25, 0.5): 0.375*1 + 0.125*3 + 0.375*2 + 0.125*7
        assert query(t, 0.25, 0.5) == pytest.approx(2.375, abs=1e-15)
        assert query(t, 0.5, 0.5) == pytest.approx(np.mean(vals), abs=1e-15)

    def test_out_of_range_fallback_exact(self, small):
        for p in [(1.5, 0.0), (-3.0, 2.0), (0.2, 40.0)]:
            assert query(small, p) == psi(p, small.truncation)

    def test_array_shapes(self, table8):
        p1 = np.zeros((2, 3))
        assert query(table8, p1, 0.5).shape == (2, 3)
        assert isinstance(query(table8, 0.1, 0.2), float)
        with pytest.raises(ValueError):
            query(table8, np.nan, 0.0)

    def test_sweep_error_bound(self, sweep_tables, sweep_exact):
        """Pinned from a pre-build sweep: 3.3e-3 worst case, 5.5e-5 for |Pe_i| <= 8."""
        rel = np.abs(query(sweep_tables[0.125], SWEEP_POINTS[:, 0], SWEEP_POINTS[:, 1])
                     - sweep_exact) / sweep_exact
        assert rel.max() < 5e-3
        inner = np.max(np.abs(SWEEP_POINTS), axis=1) <= 8
        assert rel[inner].max() < 1e-4

    def test_second_order_refinement(self, sweep_tables, sweep_exact):
        err = {s: np.max(np.abs(query(t, SWEEP_POINTS[:, 0], SWEEP_POINTS[:, 1]) - sweep_exact)
                         / sweep_exact) for s, t in sweep_tables.items()}
        assert 3.0 <= err[0.25] / err[0.125] <= 5.0

    def test_million_queries_under_one_second(self, table8):
        rng = np.random.default_rng(5)
        p = rng.uniform(-8, 8, size=(2, 1_000_000))
        query(table8, p[0, :10], p[1, :10])
        t0 = time.perf_counter()
        out = query(table8, p[0], p[1])
        assert time.perf_counter() - t0 < 1.0
        assert out.shape == (1_000_000,)

    def test_concurrent_queries(self, table8):
        rng = np.random.default_rng(6)
        chunks = [rng.uniform(-8, 8, size=(2, 5000)) for _ in range(8)]
        serial = [query(table8, c[0], c[1]) for c in chunks]
        with ThreadPoolExecutor(4) as pool:
            parallel = list(pool.map(lambda c: query(table8, c[0], c[1]), chunks))
        assert all(np.array_equal(a, b) for a, b in zip(serial, parallel))
