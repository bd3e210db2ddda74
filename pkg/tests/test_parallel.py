"""Tests for the ordered worker pool."""


class TestOrderedMap:
    """Results come back in task order for any worker count."""

    def test_serial(self):
        from harness.parallel import ordered_map

        assert ordered_map(abs, [-3, 1, -2]) == [3, 1, 2]

    def test_pool_matches_serial(self):
        from harness.parallel import ordered_map

        tasks = list(range(-6, 6))
        assert ordered_map(abs, tasks, workers=2) == [abs(t) for t in tasks]

    def test_empty(self):
        from harness.parallel import ordered_map

        assert ordered_map(abs, [], workers=4) == []
