"""Padding-free kernels over concatenated variable-size samples.

A batch is a flat ``values`` array holding every sample back to back plus a
``sizes`` vector. Kernels shift each sample into its own key range so a
single global sort/unique handles the whole batch, then strip the shift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class BatchSizeError(ValueError):
    pass


@dataclass(frozen=True)
class RankedBatch:
    values: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        sizes = np.asarray(self.sizes, dtype=np.int64)
        if sizes.ndim != 1 or (sizes < 0).any():
            raise BatchSizeError("sizes must be a vector of non-negative lengths")
        if sizes.sum() != len(values):
            raise BatchSizeError(f"sizes sum to {sizes.sum()} but there are {len(values)} values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def from_lists(cls, samples, dtype=None) -> "RankedBatch":
        sizes = [len(s) for s in samples]
        flat = np.concatenate([np.asarray(s, dtype=dtype) for s in samples]) if samples else np.zeros(0, dtype)
        if dtype is not None:
            flat = flat.astype(dtype)
        return cls(flat, np.asarray(sizes, dtype=np.int64))

    @property
    def batch_size(self) -> int:
        return len(self.sizes)

    @property
    def offsets(self) -> np.ndarray:
        out = np.zeros(len(self.sizes) + 1, dtype=np.int64)
        np.cumsum(self.sizes, out=out[1:])
        return out

    @property
    def sample_ids(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.sizes)), self.sizes)

    def split(self, flat: np.ndarray | None = None, sizes: np.ndarray | None = None) -> list[np.ndarray]:
        flat = self.values if flat is None else flat
        sizes = self.sizes if sizes is None else sizes
        return np.split(flat, np.cumsum(sizes)[:-1]) if len(sizes) else []


def padding_free_topk(batch: RankedBatch, k: int, strict: bool = False):
    """Per-sample top-``k`` in descending order with one global sort.

    Returns ``(values, indices, out_sizes)`` where ``indices`` point into the
    flat input. Ties go to the earlier flat index. With ``strict`` every
    sample must hold at least ``k`` values; otherwise samples contribute
    ``min(k, size)`` entries.

    The sort key is the pair ``(sample_id, -value)`` rather than an additive
    ``offset * sample_id`` shift, so float scores of any range cannot bleed
    across samples.
    """
    if k < 0:
        raise BatchSizeError("k must be non-negative")
    sizes = batch.sizes
    if strict and (sizes < k).any():
        bad = int(np.flatnonzero(sizes < k)[0])
        raise BatchSizeError(f"sample {bad} has {sizes[bad]} values, fewer than k={k}")
    sample_ids = batch.sample_ids
    values = batch.values
    # lexsort is stable: equal (sample, value) keys keep flat order
    order = np.lexsort((-values.astype(np.float64, copy=False), sample_ids)) if len(values) else np.zeros(0, np.int64)
    out_sizes = np.minimum(sizes, k)
    starts = batch.offsets[:-1]
    ranges = np.arange(out_sizes.sum()) - np.repeat(np.cumsum(out_sizes) - out_sizes, out_sizes)
    ranges = ranges + np.repeat(starts, out_sizes)
    indices = order[ranges]
    return values[indices], indices, out_sizes


def padding_free_topk_additive(batch: RankedBatch, k: int):
    """Additive-offset top-``k`` for integer scores, one global ascending sort.

    Each sample is shifted by ``(max - min + 1) * sample_id``; after the sort
    the last ``k`` slots of every sample's range hold its top ``k``. Only
    collision-free for integers, so it serves as a cross-check of the
    key-pair version.
    """
    values = np.asarray(batch.values)
    if len(values) and not np.issubdtype(values.dtype, np.integer):
        raise TypeError("additive offsets are only collision-free for integer values")
    sizes = batch.sizes
    if (sizes < k).any():
        raise BatchSizeError("every sample needs at least k values")
    n = len(sizes)
    if len(values) == 0 or k == 0:
        return values[:0], np.zeros(0, np.int64), np.zeros(n, np.int64)
    offset = values.max() - values.min() + 1
    sample_ids = batch.sample_ids
    shifted = values.astype(np.int64) + offset * sample_ids
    # ascending; among ties the later flat index sorts first
    order = np.lexsort((-np.arange(len(values)), shifted))
    ranges = np.tile(np.arange(k), n) + np.repeat(np.cumsum(sizes), k) - k
    idx = order[ranges].reshape(n, k)[:, ::-1].ravel()
    return values[idx], idx, np.full(n, k, dtype=np.int64)


def padding_free_unique(batch: RankedBatch):
    """Per-sample sorted distinct ids via one global unique.

    Returns ``(uniques, out_sizes)``; values must be non-negative integers.
    """
    values = np.asarray(batch.values)
    if len(values) and not np.issubdtype(values.dtype, np.integer):
        raise TypeError("unique expects integer ids")
    if len(values) and values.min() < 0:
        raise ValueError("unique expects non-negative ids")
    if len(values) == 0:
        return values.astype(np.int64), np.zeros(batch.batch_size, dtype=np.int64)
    values = values.astype(np.int64)
    offset = values.max() + 1
    shifted = values + offset * batch.sample_ids
    uniques = np.unique(shifted)
    sample_ids = uniques // offset
    uniques = uniques % offset
    sizes = np.bincount(sample_ids, minlength=batch.batch_size)
    return uniques, sizes


def segment_aggregate(values: np.ndarray, segment_ids: np.ndarray, num_segments: int,
                      mode: str = "sum", fill=0):
    """Reduce rows of ``values`` into ``num_segments`` buckets.

    ``mode`` is one of sum/max/min/or. Empty segments take ``fill``. Row order
    does not matter; the reduction order within a segment follows row order.
    """
    values = np.asarray(values)
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if len(segment_ids) != len(values):
        raise ValueError("one segment id per row required")
    if len(segment_ids) and (segment_ids.min() < 0 or segment_ids.max() >= num_segments):
        raise IndexError(f"segment id outside [0, {num_segments})")
    out_shape = (num_segments,) + values.shape[1:]
    if mode == "sum":
        if len(values) == 0:
            return np.full(out_shape, fill, dtype=values.dtype)
        flat = values.reshape(len(values), -1)
        if values.dtype == bool:
            flat = flat.astype(np.int64)
        mat = sp.csr_matrix(
            (np.ones(len(values), dtype=flat.dtype), (segment_ids, np.arange(len(values)))),
            shape=(num_segments, len(values)),
        )
        out = np.asarray(mat @ flat).reshape(out_shape)
        if fill != 0:
            counts = np.bincount(segment_ids, minlength=num_segments)
            out[counts == 0] = fill
        return out
    if mode in ("max", "min", "or"):
        dtype = values.dtype
        out = np.full(out_shape, fill, dtype=dtype)
        if len(values) == 0:
            return out
        order = np.argsort(segment_ids, kind="stable")
        seg_sorted = segment_ids[order]
        starts = np.flatnonzero(np.r_[True, seg_sorted[1:] != seg_sorted[:-1]])
        ufunc = {"max": np.maximum, "min": np.minimum, "or": np.logical_or}[mode]
        out[seg_sorted[starts]] = ufunc.reduceat(values[order], starts, axis=0)
        return out
    raise ValueError(f"unknown reduction {mode!r}")
