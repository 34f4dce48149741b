import numpy as np
import pytest
import repackage

repackage.up()
from src.utilities.utils import as_generator, derive_seeds, parallel_map, thread_count, timer


def test_thread_count_explicit():
    assert thread_count(3) == 3


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("CARNOT_THREADS", "2")
    assert thread_count() == 2


def test_thread_count_bad_env(monkeypatch):
    monkeypatch.setenv("CARNOT_THREADS", "many")
    assert thread_count() >= 1


def test_derive_seeds_reproducible():
    first = [as_generator(s).random() for s in derive_seeds(5, 3)]
    second = [as_generator(s).random() for s in derive_seeds(5, 3)]
    assert first == second


def test_derive_seeds_independent():
    draws = [as_generator(s).random() for s in derive_seeds(5, 3)]
    assert len(set(draws)) == 3


def test_as_generator_passthrough():
    rng = np.random.default_rng(0)
    assert as_generator(rng) is rng


@pytest.mark.parametrize("threads", [1, 4])
def test_parallel_map_keeps_order(threads):
    assert parallel_map(lambda v: v * v, range(10), threads) == [v * v for v in range(10)]


def test_timer_returns_result():
    assert timer(lambda: 42)() == 42
