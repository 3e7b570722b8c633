"""Interaction datasets: loading, preprocessing, indexing and splitting."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np

_log = logging.getLogger(__name__)


class Scenario(str, Enum):
    EXPLICIT = "explicit"
    IMPLICIT = "implicit"
    SEQUENTIAL = "sequential"


class DatasetError(ValueError):
    pass


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable store of ``(user, item, rating, timestamp)`` four-tuples.

    Ids are dense and zero-based. ``num_users``/``num_items`` describe the id
    space, which sub-samples share with their parent, so a subset may contain
    users or items without any interaction (see :attr:`active_users`).
    """

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray
    num_users: int
    num_items: int
    name: str = ""
    user_ids: np.ndarray | None = field(default=None, repr=False)
    item_ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "users", _frozen(self.users, np.int64))
        object.__setattr__(self, "items", _frozen(self.items, np.int64))
        object.__setattr__(self, "ratings", _frozen(self.ratings, np.float64))
        object.__setattr__(self, "timestamps", _frozen(self.timestamps, np.int64))
        n = len(self.users)
        if not (len(self.items) == len(self.ratings) == len(self.timestamps) == n):
            raise DatasetError("column lengths differ")
        if n:
            if self.users.min() < 0 or self.users.max() >= self.num_users:
                raise DatasetError("user id outside id space")
            if self.items.min() < 0 or self.items.max() >= self.num_items:
                raise DatasetError("item id outside id space")
        if not np.all(np.isfinite(self.ratings)):
            raise DatasetError("non-finite rating")

    def __len__(self) -> int:
        return len(self.users)

    @cached_property
    def _user_index(self):
        # lexsort is stable: timestamp ties keep file order
        order = np.lexsort((self.timestamps, self.users))
        indptr = np.zeros(self.num_users + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.users, minlength=self.num_users), out=indptr[1:])
        return indptr, order

    @cached_property
    def _item_index(self):
        order = np.lexsort((self.timestamps, self.items))
        indptr = np.zeros(self.num_items + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.items, minlength=self.num_items), out=indptr[1:])
        return indptr, order

    def user_history(self, u: int) -> np.ndarray:
        """Interaction indices of user ``u``, ascending by timestamp."""
        indptr, order = self._user_index
        return order[indptr[u]:indptr[u + 1]]

    def item_history(self, i: int) -> np.ndarray:
        indptr, order = self._item_index
        return order[indptr[i]:indptr[i + 1]]

    @property
    def user_indptr(self) -> np.ndarray:
        return self._user_index[0]

    @property
    def user_order(self) -> np.ndarray:
        return self._user_index[1]

    @cached_property
    def user_degree(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.num_users)

    @cached_property
    def item_degree(self) -> np.ndarray:
        return np.bincount(self.items, minlength=self.num_items)

    @property
    def active_users(self) -> np.ndarray:
        return np.flatnonzero(self.user_degree)

    @property
    def active_items(self) -> np.ndarray:
        return np.flatnonzero(self.item_degree)

    @cached_property
    def pair_keys(self) -> np.ndarray:
        """Sorted unique ``user * num_items + item`` keys, for membership tests."""
        return np.unique(self.users * self.num_items + self.items)

    def contains_pairs(self, users, items) -> np.ndarray:
        keys = np.asarray(users, dtype=np.int64) * self.num_items + np.asarray(items, dtype=np.int64)
        pk = self.pair_keys
        if len(pk) == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.searchsorted(pk, keys)
        pos[pos == len(pk)] = 0
        return pk[pos] == keys

    def subset(self, indices, name: str | None = None) -> Dataset:
        """Interactions at ``indices`` (in that order), same id space."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.users[idx], self.items[idx], self.ratings[idx], self.timestamps[idx],
            self.num_users, self.num_items, name if name is not None else self.name,
            self.user_ids, self.item_ids,
        )

    def with_ratings(self, ratings) -> Dataset:
        return Dataset(self.users, self.items, ratings, self.timestamps,
                       self.num_users, self.num_items, self.name, self.user_ids, self.item_ids)

    def binarized(self) -> Dataset:
        return self.with_ratings(np.ones(len(self)))

    def original_records(self) -> list[tuple]:
        """Map dense ids back to the original ones."""
        uids = self.user_ids if self.user_ids is not None else np.arange(self.num_users)
        iids = self.item_ids if self.item_ids is not None else np.arange(self.num_items)
        return [(uids[u], iids[i], float(r), int(t)) for u, i, r, t in
                zip(self.users, self.items, self.ratings, self.timestamps)]


@dataclass(frozen=True, eq=False)
class SplitDataset:
    scenario: Scenario
    train: Dataset
    validation: Dataset
    test: Dataset


def _densify(users, items, ratings, timestamps, name, user_ids=None, item_ids=None) -> Dataset:
    """Re-densify ids in order of first appearance."""
    uniq_u, first_u, inv_u = np.unique(users, return_index=True, return_inverse=True)
    uniq_i, first_i, inv_i = np.unique(items, return_index=True, return_inverse=True)
    # relabel so dense id follows first appearance
    rank_u = np.empty(len(uniq_u), dtype=np.int64)
    rank_u[np.argsort(first_u, kind="stable")] = np.arange(len(uniq_u))
    rank_i = np.empty(len(uniq_i), dtype=np.int64)
    rank_i[np.argsort(first_i, kind="stable")] = np.arange(len(uniq_i))
    new_users = rank_u[inv_u.ravel()]
    new_items = rank_i[inv_i.ravel()]
    u_orig = uniq_u[np.argsort(rank_u)]
    i_orig = uniq_i[np.argsort(rank_i)]
    if user_ids is not None:
        u_orig = np.asarray(user_ids)[u_orig]
    if item_ids is not None:
        i_orig = np.asarray(item_ids)[i_orig]
    return Dataset(new_users, new_items, ratings, timestamps, len(uniq_u), len(uniq_i),
                   name, u_orig, i_orig)


def from_arrays(users, items, ratings=None, timestamps=None, name: str = "") -> Dataset:
    """Build a dataset from raw (possibly sparse or non-integer) id columns."""
    users = np.asarray(users)
    items = np.asarray(items)
    n = len(users)
    ratings = np.ones(n) if ratings is None else np.asarray(ratings, dtype=np.float64)
    timestamps = np.arange(n) if timestamps is None else np.asarray(timestamps, dtype=np.int64)
    return _densify(users, items, ratings, timestamps, name)


def preprocess(raw: Dataset, min_interactions: int = 3) -> Dataset:
    """Drop users with fewer than ``min_interactions`` interactions.

    Iterated to a fixed point; empty items vanish and ids are re-densified.
    """
    keep = np.ones(len(raw), dtype=bool)
    while True:
        deg = np.bincount(raw.users[keep], minlength=raw.num_users)
        bad = keep & (deg[raw.users] < min_interactions)
        if not bad.any():
            break
        keep &= ~bad
    if not keep.any():
        raise DatasetError("dataset degenerate after preprocessing")
    idx = np.flatnonzero(keep)
    return _densify(raw.users[idx], raw.items[idx], raw.ratings[idx], raw.timestamps[idx],
                    raw.name, raw.user_ids, raw.item_ids)


def read_interactions(path, fmt: str = "csv", name: str | None = None) -> Dataset:
    """Parse a header-bearing ``user_id,item_id,rating,timestamp`` file."""
    path = Path(path)
    delimiter = {"csv": ",", "tsv": "\t"}[fmt]
    users, items, ratings, stamps = [], [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        for row in reader:
            lineno = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise DatasetError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                r = float(row[2])
                t = int(float(row[3]))
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            if not np.isfinite(r):
                raise DatasetError(f"{path}:{lineno}: non-finite rating")
            users.append(row[0].strip())
            items.append(row[1].strip())
            ratings.append(r)
            stamps.append(t)
    if not users:
        raise DatasetError(f"{path}: no interactions")
    return _densify(np.array(users, dtype=object).astype(str), np.array(items).astype(str),
                    np.array(ratings), np.array(stamps, dtype=np.int64),
                    name if name is not None else path.stem)


def load_dataset(path, fmt: str = "csv", min_interactions: int = 3, name: str | None = None) -> Dataset:
    return preprocess(read_interactions(path, fmt, name), min_interactions)


def _share(n: int) -> int:
    return max(1, int(np.floor(0.1 * n + 0.5)))


def split(ds: Dataset, scenario: Scenario | str, seed: int = 0) -> SplitDataset:
    """Per-user 80/10/10 split, or leave-one-last for sequential feedback.

    The validation and test shares are ``max(1, round(0.1 * n_u))`` each; the
    rest goes to train. Implicit and sequential views carry binarized ratings.
    """
    scenario = Scenario(scenario)
    indptr, order = ds.user_indptr, ds.user_order
    if np.any(np.diff(indptr)[ds.active_users] < 3):
        raise DatasetError("split needs every user to have at least 3 interactions")
    rng = np.random.default_rng(seed)
    tr, va, te = [], [], []
    for u in range(ds.num_users):
        hist = order[indptr[u]:indptr[u + 1]]
        n = len(hist)
        if n == 0:
            continue
        if scenario is Scenario.SEQUENTIAL:
            tr.append(hist[:-2])
            va.append(hist[-2:-1])
            te.append(hist[-1:])
        else:
            hist = rng.permutation(hist)
            k = _share(n)
            n_train = n - 2 * k
            tr.append(hist[:n_train])
            va.append(hist[n_train:n_train + k])
            te.append(hist[n_train + k:])
    view = ds if scenario is Scenario.EXPLICIT else ds.binarized()
    # keep global file order inside each part
    parts = [view.subset(np.sort(np.concatenate(p)), f"{ds.name}:{scenario.value}:{tag}")
             for p, tag in ((tr, "train"), (va, "validation"), (te, "test"))]
    return SplitDataset(scenario, *parts)


def write_csv(ds: Dataset, path, original_ids: bool = False) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "item_id", "rating", "timestamp"])
        if original_ids:
            w.writerows(ds.original_records())
        else:
            for u, i, r, t in zip(ds.users.tolist(), ds.items.tolist(),
                                  ds.ratings.tolist(), ds.timestamps.tolist()):
                w.writerow([u, i, repr(r), t])


def read_dense_csv(path, num_users: int, num_items: int, name: str = "") -> Dataset:
    """Read a CSV written by :func:`write_csv` in dense-id form."""
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if arr.size == 0:
        arr = np.zeros((0, 4))
    return Dataset(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2],
                   arr[:, 3].astype(np.int64), num_users, num_items, name)


def write_manifest(ds: Dataset, directory, source: str | None = None) -> Path:
    """Persist ``ds`` as dense CSV plus id maps and a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_csv(ds, directory / "interactions.csv")
    for kind, ids in (("users", ds.user_ids), ("items", ds.item_ids)):
        ids = ids if ids is not None else np.arange(ds.num_users if kind == "users" else ds.num_items)
        (directory / f"{kind}.idmap").write_text("".join(f"{x}\n" for x in ids))
    manifest = {
        "name": ds.name,
        "source": source,
        "num_users": int(ds.num_users),
        "num_items": int(ds.num_items),
        "num_interactions": len(ds),
        "interactions": "interactions.csv",
        "user_map": "users.idmap",
        "item_map": "items.idmap",
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> Dataset:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    meta = json.loads(path.read_text())
    base = path.parent
    ds = read_dense_csv(base / meta["interactions"], meta["num_users"], meta["num_items"], meta["name"])
    uids = np.array((base / meta["user_map"]).read_text().splitlines())
    iids = np.array((base / meta["item_map"]).read_text().splitlines())
    return Dataset(ds.users, ds.items, ds.ratings, ds.timestamps, ds.num_users, ds.num_items,
                   meta["name"], uids, iids)
