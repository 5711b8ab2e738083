"""Unit Tests for Reproducible Random Streams"""

import numpy as np
import pytest

from pricer.utils.rng import Stream, generator, map_blocks, path_blocks


class TestGenerator:
    """Test keyed Philox generators"""

    def test_same_key_same_numbers(self):
        """Test identical keys reproduce draws"""
        a = generator(42, Stream.BROWNIAN, 3).standard_normal(5)
        b = generator(42, Stream.BROWNIAN, 3).standard_normal(5)

        np.testing.assert_array_equal(a, b)

    def test_keys_are_independent(self):
        """Test streams and blocks give different draws"""
        base = generator(42, Stream.BROWNIAN, 0).random(5)

        assert not np.array_equal(base, generator(42, Stream.CHAIN, 0).random(5))
        assert not np.array_equal(base, generator(42, Stream.BROWNIAN, 1).random(5))
        assert not np.array_equal(base, generator(43, Stream.BROWNIAN, 0).random(5))

    def test_negative_seed(self):
        """Test negative seeds are rejected"""
        with pytest.raises(ValueError, match="non-negative"):
            generator(-1, Stream.BROWNIAN)


class TestPathBlocks:
    """Test block partitioning"""

    def test_blocks_cover_paths(self):
        """Test blocks are contiguous with a short tail"""
        assert path_blocks(10, 4) == [(0, 0, 4), (1, 4, 8), (2, 8, 10)]

    def test_single_block(self):
        """Test fewer paths than a block"""
        assert path_blocks(3, 1024) == [(0, 0, 3)]

    def test_invalid(self):
        """Test invalid sizes"""
        with pytest.raises(ValueError):
            path_blocks(0, 4)
        with pytest.raises(ValueError):
            path_blocks(4, 0)


class TestMapBlocks:
    """Test block execution"""

    def test_order_is_kept(self):
        """Test threaded results come back in block order"""
        blocks = path_blocks(100, 7)

        def work(block, start, stop):
            return generator(5, Stream.BROWNIAN, block).random(stop - start)

        serial = np.concatenate(map_blocks(work, blocks, workers=1))
        threaded = np.concatenate(map_blocks(work, blocks, workers=4))

        np.testing.assert_array_equal(serial, threaded)
