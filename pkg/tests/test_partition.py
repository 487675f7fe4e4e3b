"""Partition topology: indexing, faces, neighbors, round trips."""

import numpy as np
import pytest

from dgdeblur.autodiff import ContractError
from dgdeblur.partition import (SIDES, ElementPartition, face_samples,
                                partition_field, unpartition_field)


def test_single_element_partition_is_flatten():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 8, 2))
    out = partition_field(x, 8)
    assert out.shape == (1, 64, 2)
    assert np.array_equal(out[0], x.reshape(64, 2))


def test_four_by_four_element_zero_holds_top_left_block():
    x = np.arange(16.0).reshape(4, 4, 1)
    out = partition_field(x, 2)
    assert out.shape == (4, 4, 1)
    assert np.array_equal(out[0, :, 0], [0.0, 1.0, 4.0, 5.0])
    assert np.array_equal(out[1, :, 0], [2.0, 3.0, 6.0, 7.0])
    assert np.array_equal(out[3, :, 0], [10.0, 11.0, 14.0, 15.0])


def test_roundtrip_is_bit_exact():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((16, 24, 3))
    part = ElementPartition.build(16, 24, 4)
    back = unpartition_field(partition_field(x, 4), part)
    assert np.array_equal(back, x)


def test_permuted_elements_change_the_field():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((8, 8, 1))
    part = ElementPartition.build(8, 8, 4)
    els = partition_field(x, 4)
    swapped = els[::-1].copy()
    assert not np.array_equal(unpartition_field(swapped, part), x)


def test_indivisible_extent_rejected():
    with pytest.raises(ContractError):
        ElementPartition.build(10, 8, 4)
    with pytest.raises(ContractError):
        partition_field(np.zeros((10, 8, 1)), 4)


def test_face_strips_p2():
    # element [[a, b], [c, d]] in row-major order
    part = ElementPartition.build(4, 4, 2)
    a, b, c, d = 0, 1, 2, 3
    assert np.array_equal(part.face_local_indices("north"), [a, b])
    assert np.array_equal(part.face_local_indices("south"), [c, d])
    assert np.array_equal(part.face_local_indices("west"), [a, c])
    assert np.array_equal(part.face_local_indices("east"), [b, d])


def test_face_samples_gather():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 6, 2))
    part = ElementPartition.build(4, 6, 2)
    els = partition_field(x, 2)
    face = part.face(1, "north")
    got = face_samples(els, face)
    # element 1 is the top row block at columns 2..3
    assert np.array_equal(got, x[0, 2:4])
    west = face_samples(els, part.face(4, "west"))
    assert np.array_equal(west, x[2:4, 2])


def test_face_sample_count_is_p():
    part = ElementPartition.build(12, 12, 3)
    for side in SIDES:
        assert part.face_local_indices(side).size == 3


def test_neighbor_periodic_wrap():
    part = ElementPartition.build(4, 4, 2)  # 2x2 elements
    assert part.neighbor(0, "west", "periodic") == 1
    assert part.neighbor(0, "north", "periodic") == 2
    assert part.neighbor(3, "east", "periodic") == 2
    assert part.neighbor(3, "south", "periodic") == 1


def test_neighbor_boundary_marker():
    part = ElementPartition.build(4, 4, 2)
    assert part.neighbor(0, "west", "dirichlet") is None
    assert part.neighbor(0, "north", "neumann") is None
    assert part.neighbor(0, "east", "dirichlet") == 1
    assert part.neighbor(0, "south", "dirichlet") == 2


def test_neighbor_symmetry_exhaustive():
    part = ElementPartition.build(9, 9, 3)  # 3x3 elements
    opposite = {"north": "south", "south": "north", "east": "west", "west": "east"}
    for e in range(part.n_elements):
        for side in SIDES:
            for bc in ("dirichlet", "periodic"):
                n = part.neighbor(e, side, bc)
                if n is not None:
                    assert part.neighbor(n, opposite[side], bc) == e


def test_neighbor_table_matches_scalar_lookup():
    part = ElementPartition.build(8, 12, 2)
    for side in SIDES:
        idx, interior = part.neighbor_table(side)
        for e in range(part.n_elements):
            scalar = part.neighbor(e, side, "periodic")
            assert idx[e] == scalar
            assert interior[e] == (part.neighbor(e, side, "dirichlet") is not None)


def test_adjacent_strips_touch_geometrically():
    # reconstruct global coordinates and check that an element's south
    # strip rows sit directly above its south neighbor's north strip
    part = ElementPartition.build(8, 8, 4)
    for e in range(part.n_elements):
        n = part.neighbor(e, "south", "dirichlet")
        if n is None:
            continue
        er, ec = part.pixel_coords(e)
        nr, nc = part.pixel_coords(n)
        south = part.face_local_indices("south")
        north = part.face_local_indices("north")
        assert np.all(er[south] + 1 == nr[north])
        assert np.array_equal(ec[south], nc[north])


def test_periodic_neighbor_commutes_with_cyclic_shift():
    # shifting the element grid cyclically relabels neighbors consistently
    part = ElementPartition.build(6, 6, 2)  # 3x3 elements
    rows = cols = 3

    def shift(e, dr, dc):
        i, j = divmod(e, cols)
        return ((i + dr) % rows) * cols + (j + dc) % cols

    for e in range(part.n_elements):
        for side in SIDES:
            lhs = shift(part.neighbor(e, side, "periodic"), 1, 2)
            rhs = part.neighbor(shift(e, 1, 2), side, "periodic")
            assert lhs == rhs
