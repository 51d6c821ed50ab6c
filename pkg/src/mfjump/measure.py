"""Empirical measures on the real line: exact W1, moments, mean functionals."""

from __future__ import annotations

from typing import Callable

import numpy as np


class EmpiricalMeasure1D:
    """Uniform-weight empirical measure of a finite sample.

    The sorted view is computed lazily and dropped whenever samples change.
    """

    def __init__(self, samples):
        samples = np.array(samples, dtype=float).ravel()
        if samples.size == 0:
            raise ValueError("empirical measure needs at least one sample")
        self._samples = samples
        self._sorted = None

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @samples.setter
    def samples(self, values):
        values = np.array(values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("empirical measure needs at least one sample")
        self._samples = values
        self._sorted = None

    @property
    def sorted(self) -> np.ndarray:
        if self._sorted is None:
            self._sorted = np.sort(self._samples)
        return self._sorted

    def __len__(self) -> int:
        return self._samples.size

    def __repr__(self) -> str:
        return f"EmpiricalMeasure1D(n={len(self)})"

    def mean(self) -> float:
        return float(np.mean(self._samples))

    def to_csv(self, path) -> None:
        np.savetxt(path, self._samples, delimiter=",", header="x", comments="", fmt="%.17g")


def _as_measure(m) -> EmpiricalMeasure1D:
    return m if isinstance(m, EmpiricalMeasure1D) else EmpiricalMeasure1D(m)


def w1(a, b) -> float:
    """Wasserstein-1 distance between two empirical measures.

    Equal sizes use the sorted coupling ``mean |x_(i) - y_(i)|``.  Unequal sizes
    integrate ``|F_a^{-1} - F_b^{-1}|`` exactly over the merged grid of
    cumulative weights.
    """
    a, b = _as_measure(a), _as_measure(b)
    xs, ys = a.sorted, b.sorted
    n, m = xs.size, ys.size
    if n == m:
        return float(np.mean(np.abs(xs - ys)))
    ta = np.arange(1, n + 1) / n
    tb = np.arange(1, m + 1) / m
    t = np.union1d(ta, tb)
    widths = np.diff(np.concatenate(([0.0], t)))
    qa = xs[np.minimum(np.searchsorted(ta, t, side="left"), n - 1)]
    qb = ys[np.minimum(np.searchsorted(tb, t, side="left"), m - 1)]
    return float(np.sum(widths * np.abs(qa - qb)))


def moment(m, beta: float) -> float:
    """``(1/N) sum |x_i|^beta``."""
    if beta < 1:
        raise ValueError(f"moment order must be >= 1, got {beta}")
    x = _as_measure(m).samples
    return float(np.mean(np.abs(x) ** beta))


def mean_functional(m, phi: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """``(1/N) sum phi(x_i)``; ``phi=None`` is the identity."""
    x = _as_measure(m).samples
    if phi is None:
        return float(np.mean(x))
    return float(np.mean(phi(x)))
