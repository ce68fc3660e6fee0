"""Event-sequence datasets: JSON Lines I/O, splitting and padded batches."""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadRatios,
    EmptyBatch,
    MissingFile,
    NonMonotoneTimestamps,
    SchemaMismatch,
)

SPLITS = ("train", "dev", "test")


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Time-ordered marks ``(t_i, k_i)`` observed on ``[0, t_end]``.

    ``t_end`` defaults to the last timestamp (or 0 for an empty sequence).
    """

    times: np.ndarray
    types: np.ndarray
    t_end: float = None

    def __post_init__(self):
        times = _frozen(self.times, np.float64).reshape(-1)
        types = _frozen(self.types, np.int64).reshape(-1)
        if len(times) != len(types):
            raise SchemaMismatch(f"times has {len(times)} entries but types has {len(types)}")
        t_end = self.t_end
        if t_end is None:
            t_end = float(times[-1]) if len(times) else 0.0
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "t_end", float(t_end))
        _check_order(times, self.t_end)
        if len(types) and types.min() < 0:
            raise SchemaMismatch("negative event type id")

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, EventSequence):
            return NotImplemented
        return (
            self.t_end == other.t_end
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.types, other.types)
        )

    def __hash__(self):
        return hash((self.times.tobytes(), self.types.tobytes(), self.t_end))

    @property
    def dtimes(self):
        """Inter-event gaps, measured from 0 for the first event."""
        return np.diff(self.times, prepend=0.0)

    def prefix(self, t):
        """Events with time <= t, observed on [0, t]."""
        n = int(np.searchsorted(self.times, t, side="right"))
        return EventSequence(self.times[:n], self.types[:n], t_end=t)

    def window(self, start, end):
        """Events in the half-open window (start, end]."""
        lo = int(np.searchsorted(self.times, start, side="right"))
        hi = int(np.searchsorted(self.times, end, side="right"))
        return EventSequence(self.times[lo:hi], self.types[lo:hi], t_end=end)

    def to_record(self):
        return {"times": self.times.tolist(), "types": self.types.tolist(), "t_end": self.t_end}


def _check_order(times, t_end, index=None):
    where = "" if index is None else f" in sequence {index}"
    if len(times) == 0:
        return
    if not np.all(np.isfinite(times)):
        raise NonMonotoneTimestamps(f"non-finite timestamp{where}", index)
    if times[0] <= 0:
        raise NonMonotoneTimestamps(f"first timestamp must be > 0{where}", index)
    if len(times) > 1 and not np.all(np.diff(times) > 0):
        raise NonMonotoneTimestamps(f"timestamps not strictly increasing{where}", index)
    if times[-1] > t_end:
        raise NonMonotoneTimestamps(f"t_end precedes last event{where}", index)


@dataclass(frozen=True)
class Dataset:
    sequences: tuple
    num_types: int
    split: str = "train"
    name: str = "dataset"

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        top = max((int(s.types.max()) for s in self.sequences if len(s)), default=-1)
        if self.num_types < top + 1:
            raise SchemaMismatch(f"num_types={self.num_types} but type id {top} present")

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]

    @property
    def num_events(self):
        return sum(len(s) for s in self.sequences)

    def mean_dtime(self):
        gaps = [s.dtimes for s in self.sequences if len(s)]
        return float(np.concatenate(gaps).mean()) if gaps else 1.0


@dataclass(frozen=True)
class Schema:
    """Field names used when reading JSON Lines records."""

    times_field: str = "times"
    types_field: str = "types"
    t_end_field: str = "t_end"
    num_types: int = None
    split: str = "train"
    name: str = None


def infer_num_types(seqs):
    return max((int(s.types.max()) for s in seqs if len(s)), default=0) + 1


def _meta_path(path):
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def load_dataset(path, schema=None):
    """Read a JSON Lines file into a validated :class:`Dataset`.

    If a ``<file>.meta.json`` sidecar exists, its ``num_types`` is used unless
    ``schema.num_types`` overrides it.
    """
    schema = schema or Schema()
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"dataset file not found: {path}")
    seqs = []
    with path.open(encoding="utf-8") as fh:
        for idx, line in enumerate(l for l in fh if l.strip()):
            rec = json.loads(line)
            for key in (schema.times_field, schema.types_field):
                if key not in rec:
                    raise SchemaMismatch(f"record {idx} lacks field {key!r}")
            times, types = rec[schema.times_field], rec[schema.types_field]
            if len(times) != len(types):
                raise SchemaMismatch(f"record {idx}: {len(times)} times vs {len(types)} types")
            t_end = rec.get(schema.t_end_field)
            try:
                seqs.append(EventSequence(times, types, t_end))
            except NonMonotoneTimestamps as exc:
                raise NonMonotoneTimestamps(f"sequence {idx}: {exc}", idx) from None
    num_types = schema.num_types
    meta = {}
    if _meta_path(path).is_file():
        meta = json.loads(_meta_path(path).read_text(encoding="utf-8"))
    if num_types is None:
        num_types = max(meta.get("num_types", 0), infer_num_types(seqs))
    split = schema.split if schema.split else meta.get("split", "train")
    name = schema.name or meta.get("name") or path.stem
    return Dataset(seqs, num_types, split=split, name=name)


def write_dataset(path, dataset_or_seqs, num_types=None, name=None, split=None):
    """Write sequences as JSON Lines plus a ``.meta.json`` sidecar."""
    if isinstance(dataset_or_seqs, Dataset):
        seqs = dataset_or_seqs.sequences
        num_types = num_types or dataset_or_seqs.num_types
        name = name or dataset_or_seqs.name
        split = split or dataset_or_seqs.split
    else:
        seqs = list(dataset_or_seqs)
    num_types = num_types or infer_num_types(seqs)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in seqs:
            fh.write(json.dumps(s.to_record()) + "\n")
    meta = {
        "name": name or path.stem,
        "split": split or "train",
        "num_types": int(num_types),
        "num_sequences": len(seqs),
        "num_events": int(sum(len(s) for s in seqs)),
    }
    _meta_path(path).write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return path


def split_dataset(seqs, ratios, seed, num_types=None, name="dataset"):
    """Deterministically split sequences into train/dev/test datasets.

    Each split gets ``floor(n * ratio)`` sequences; the remainder goes to train.
    """
    seqs = list(seqs)
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must be three positive fractions summing to 1, got {ratios}")
    n = len(seqs)
    # the epsilon keeps e.g. 1800 * (200/1800) from flooring to 199
    sizes = [math.floor(n * r + 1e-9) for r in ratios]
    sizes[0] += n - sum(sizes)
    perm = np.random.default_rng(seed).permutation(n)
    num_types = num_types or infer_num_types(seqs)
    out, start = [], 0
    for split, size in zip(SPLITS, sizes):
        idx = perm[start:start + size]
        start += size
        out.append(Dataset([seqs[i] for i in idx], num_types, split=split, name=name))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class PaddedBatch:
    """Right-padded batch. Padded cells hold time 0 and type ``pad_type``."""

    times: np.ndarray
    dtimes: np.ndarray
    types: np.ndarray
    seq_mask: np.ndarray
    attn_mask: np.ndarray
    seq_lens: np.ndarray
    t_end: np.ndarray
    pad_type: int

    @property
    def batch_size(self):
        return self.times.shape[0]

    @property
    def max_len(self):
        return self.times.shape[1]

    @property
    def num_events(self):
        return int(self.seq_lens.sum())

    def anchor_times(self):
        """(B, L+1) times of the anchors: window start, then each event."""
        return np.concatenate([np.zeros((self.batch_size, 1)), self.times], axis=1)

    def anchor_mask(self):
        """(B, L+1) validity of anchors; anchor 0 is always valid."""
        return np.arange(self.max_len + 1)[None, :] <= self.seq_lens[:, None]

    def interval_ends(self):
        """(B, L+1) right end of the interval following each anchor.

        The interval after the last event runs to ``t_end``; padded anchors
        get zero-length intervals.
        """
        starts = self.anchor_times()
        ends = starts.copy()
        ends[:, :-1] = np.where(self.seq_mask, self.times, starts[:, :-1])
        rows = np.arange(self.batch_size)
        ends[rows, self.seq_lens] = self.t_end
        return ends

    def unpad(self):
        return [
            EventSequence(self.times[b, :n], self.types[b, :n], t_end=self.t_end[b])
            for b, n in enumerate(self.seq_lens)
        ]


def pad_batch(seqs: Sequence[EventSequence], pad_type: int) -> PaddedBatch:
    seqs = list(seqs)
    if not seqs:
        raise EmptyBatch("cannot pad an empty list of sequences")
    lens = np.array([len(s) for s in seqs], dtype=np.int64)
    B, L = len(seqs), int(lens.max())
    times = np.zeros((B, L))
    types = np.full((B, L), pad_type, dtype=np.int64)
    for b, s in enumerate(seqs):
        times[b, : len(s)] = s.times
        types[b, : len(s)] = s.types
    seq_mask = np.arange(L)[None, :] < lens[:, None]
    dtimes = np.where(seq_mask, np.diff(times, axis=1, prepend=0.0), 0.0)
    causal = np.tril(np.ones((L, L), dtype=bool))
    attn_mask = causal[None] & seq_mask[:, :, None] & seq_mask[:, None, :]
    t_end = np.array([s.t_end for s in seqs])
    return PaddedBatch(times, dtimes, types, seq_mask, attn_mask, lens, t_end, pad_type)


def iter_batches(dataset, batch_size, rng=None, bucket=True) -> Iterable[PaddedBatch]:
    """Yield padded batches; shuffled when ``rng`` is given.

    With ``bucket``, sequences are length-sorted inside windows of eight
    batches so that padding stays small.
    """
    n = len(dataset)
    order = rng.permutation(n) if rng is not None else np.arange(n)
    lens = np.array([len(s) for s in dataset.sequences])
    batches = []
    window = batch_size * 8 if bucket else n
    for w in range(0, n, max(window, 1)):
        chunk = order[w:w + window]
        if bucket:
            chunk = chunk[np.argsort(lens[chunk], kind="stable")]
        batches.extend(chunk[i:i + batch_size] for i in range(0, len(chunk), batch_size))
    if rng is not None:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    for idx in batches:
        yield pad_batch([dataset.sequences[i] for i in idx], dataset.num_types)
