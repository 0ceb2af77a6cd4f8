import numpy as np
import pytest

from pixdoherty import pixelgrid as pg
from pixdoherty.errors import NonSquareGrid, ParseError

from .oracles import ports_connected_uf


def diagonal_chain(n=15):
    """Main feed (west) to output feed (east) through a zig-zag of diagonal-only contacts."""
    cells = np.zeros((n, n), dtype=np.uint8)
    mid = n // 2
    for c in range(n):
        cells[mid + (c % 2), c] = 1
    return pg.PixelLayout(cells)


class TestLayout:
    def test_defaults(self):
        lay = pg.PixelLayout(np.zeros((15, 15)))
        assert lay.rows == lay.cols == 15
        assert lay.pixel_size_mm == 1.8 and lay.overlap_fraction == 0.2
        assert [p.role for p in lay.ports] == list(pg.CANONICAL_ROLES)
        assert [p.cell for p in lay.ports] == [(7, 0), (0, 7), (7, 14), (14, 7)]
        assert lay.ports_metal()
        assert lay.cells.sum() == 4

    def test_even_grid_feeds_are_two_cells(self):
        lay = pg.PixelLayout(np.zeros((8, 8)))
        assert lay.port(pg.Role.MAIN).cells == ((3, 0), (4, 0))
        assert lay.cells.sum() == 8

    def test_validation(self):
        with pytest.raises(ValueError):
            pg.PixelLayout(np.full((5, 5), 2))
        with pytest.raises(ValueError):
            pg.PixelLayout(np.zeros((5, 5)), overlap_fraction=0.5)

    def test_immutable_and_hashable(self):
        lay = pg.random_layout(6, 6, rng_seed=1)
        with pytest.raises(ValueError):
            lay.cells[0, 0] = 1
        assert len({lay, pg.PixelLayout(lay.cells)}) == 1

    def test_physical_size(self):
        assert pg.PixelLayout(np.zeros((15, 15))).physical_size_mm == pytest.approx(27.36)


class TestRandom:
    def test_near_full(self):
        lay = pg.random_layout(15, 15, 1.0, 0.0, rng_seed=3)
        assert lay.cells.sum() >= 0.9 * 225
        assert lay.ports_metal()

    def test_density_statistics(self):
        rng = np.random.default_rng(0)
        d = [pg.random_layout(15, 15, 0.5, 0.15, rng).density for _ in range(10000)]
        assert 0.48 <= np.mean(d) <= 0.52

    def test_seeded(self):
        assert pg.random_layout(10, 10, rng_seed=42) == pg.random_layout(10, 10, rng_seed=42)


class TestConnectivity:
    def test_all_ones(self):
        assert pg.is_connected(pg.PixelLayout(np.ones((15, 15))))

    def test_ports_only(self):
        assert not pg.is_connected(pg.PixelLayout(np.zeros((15, 15))))

    def test_diagonal_chain(self):
        lay = diagonal_chain()
        roles = [pg.Role.MAIN, pg.Role.OUTPUT]
        assert pg.is_connected(lay, roles)
        cells = [rc for r in roles for rc in lay.port(r).cells]
        assert ports_connected_uf(lay.cells, cells)
        # the chain has no orthogonal neighbours at all
        c = lay.cells.astype(int)
        assert not np.any(c[:, 1:] & c[:, :-1])
        assert not np.any(c[1:, :] & c[:-1, :])
        assert not pg.is_connected(lay)

    def test_against_union_find(self):
        rng = np.random.default_rng(7)
        agree = 0
        for _ in range(1000):
            lay = pg.random_layout(9, 9, 0.55, 0.15, rng)
            assert pg.is_connected(lay) == ports_connected_uf(lay.cells, lay.port_cells())
            agree += 1
        assert agree == 1000

    def test_adding_metal_never_disconnects(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            lay = pg.random_layout(8, 8, 0.6, 0.1, rng)
            if not pg.is_connected(lay):
                continue
            cells = lay.cells.copy()
            zeros = np.argwhere(cells == 0)
            if len(zeros):
                cells[tuple(zeros[rng.integers(len(zeros))])] = 1
            assert pg.is_connected(lay.with_cells(cells))


class TestSymmetry:
    def test_group_closure(self):
        elements = {pg.d4_compose(a, b) for a in range(8) for b in range(8)}
        assert elements == set(range(8))
        for a in range(8):
            assert pg.d4_compose(a, pg.d4_inverse(a)) == 0

    def test_two_quarter_turns(self):
        assert pg.d4_compose(1, 1) == 2

    def test_half_turn_swaps_opposite_edges(self):
        lay = pg.random_layout(15, 15, rng_seed=2)
        perm = pg.port_permutation(lay, 2)
        # W<->E (Main<->Output), N<->S (Aux<->Spare)
        assert perm.tolist() == [2, 3, 0, 1]

    @pytest.mark.parametrize("n", [7, 8])
    def test_augment_distinct_and_consistent(self, n, rng):
        lay = pg.random_layout(n, n, rng_seed=int(rng.integers(1000)))
        out = pg.augment(lay)
        assert len(out) == 8
        assert out[0][0] == lay
        for lay_k, _, k in out:
            assert lay_k.ports_metal()
            assert np.array_equal(lay_k.cells, pg.d4_apply(lay.cells, k))
        assert len({o[0].key() for o in out}) == 8 or lay.cells.sum() in (0, n * n)

    def test_augment_twice_is_group_product(self):
        lay = pg.random_layout(9, 9, rng_seed=5)
        for a in range(8):
            for b in range(8):
                twice = pg.transform(pg.transform(lay, b), a)
                assert twice == pg.transform(lay, pg.d4_compose(a, b))
                pa = pg.port_permutation(lay, a)
                pb = pg.port_permutation(lay, b)
                assert pb[pa].tolist() == pg.port_permutation(lay, pg.d4_compose(a, b)).tolist()

    def test_non_square(self):
        with pytest.raises(NonSquareGrid):
            pg.augment(pg.PixelLayout(np.ones((5, 7))))


class TestText:
    def test_round_trip(self):
        for seed in range(100):
            r = np.random.default_rng(seed)
            n = int(r.integers(3, 16))
            lay = pg.random_layout(n, n, rng_seed=r)
            assert pg.from_text(pg.to_text(lay)) == lay

    def test_header(self):
        text = pg.to_text(pg.PixelLayout(np.zeros((4, 4))))
        assert text.splitlines()[0] == "PIXELGRID rows=4 cols=4 pixel_mm=1.8 overlap=0.2 ports=W:Main,N:Aux,E:Output,S:Spare"

    def test_empty(self):
        with pytest.raises(ParseError):
            pg.from_text("")

    def test_missing_row(self):
        text = pg.to_text(pg.PixelLayout(np.ones((15, 15))))
        short = "\n".join(text.splitlines()[:-1])
        with pytest.raises(ParseError, match="missing row 15") as exc:
            pg.from_text(short)
        assert exc.value.line == 16

    def test_bad_character_position(self):
        lines = pg.to_text(pg.PixelLayout(np.ones((5, 5)))).splitlines()
        lines[3] = "11x11"
        with pytest.raises(ParseError) as exc:
            pg.from_text("\n".join(lines))
        assert (exc.value.line, exc.value.column) == (4, 3)


def test_design_space_guard():
    assert pg.design_space_size(15, 15) == 2**225
    with pytest.raises(ValueError):
        next(pg.enumerate_layouts(5, 5))
    assert sum(1 for _ in pg.enumerate_layouts(3, 3)) == 2**5
