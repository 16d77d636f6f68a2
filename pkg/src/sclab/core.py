"""Transaction records, the Dataset container, file I/O and chronological splits.

A dataset is stored column-wise in numpy arrays. The consumer sentinel is
encoded as ``CONSUMER = -1`` in the buyer column and written as the literal
token ``CONSUMER`` in transaction files.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

CONSUMER = -1
CONSUMER_TOKEN = "CONSUMER"
HEADER = ("t", "supplier", "buyer", "product", "amount")


class ParseError(ValueError):
    """Malformed transaction file. ``line`` is 1-based, header included."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


class Transaction(NamedTuple):
    t: int
    supplier: int
    buyer: int
    product: int
    amount: float


def _sort_order(t, supplier, buyer, product) -> np.ndarray:
    # lexsort uses the last key as primary; it is a stable sort
    return np.lexsort((product, buyer, supplier, t))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Chronologically sorted transactions over ``n_firms`` firms and ``n_products`` products."""

    t: np.ndarray
    supplier: np.ndarray
    buyer: np.ndarray
    product: np.ndarray
    amount: np.ndarray
    n_firms: int
    n_products: int
    split: tuple[int, int] | None = None

    def __post_init__(self):
        cols = {}
        for name, dtype in (("t", np.int64), ("supplier", np.int64), ("buyer", np.int64),
                            ("product", np.int64), ("amount", np.float64)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            cols[name] = arr
            object.__setattr__(self, name, arr)
        n = len(cols["t"])
        if any(len(c) != n for c in cols.values()):
            raise ValidationError("column lengths differ")
        if self.split is not None:
            train_end, val_end = self.split
            if not 0 <= train_end <= val_end <= n:
                raise ValidationError(f"invalid split {self.split} for {n} transactions")

    @classmethod
    def from_transactions(cls, transactions: Iterable[Transaction], n_firms: int | None = None,
                          n_products: int | None = None) -> "Dataset":
        rows = list(transactions)
        if rows:
            t, s, b, p, a = (np.array(c) for c in zip(*rows))
        else:
            t = s = b = p = np.zeros(0, dtype=np.int64)
            a = np.zeros(0)
        return cls.build(t, s, b, p, a, n_firms=n_firms, n_products=n_products)

    @classmethod
    def build(cls, t, supplier, buyer, product, amount, n_firms=None, n_products=None,
              validate=True) -> "Dataset":
        """Sort the columns into canonical order and infer node universes if not given."""
        t, supplier, buyer, product = (np.asarray(c, dtype=np.int64) for c in (t, supplier, buyer, product))
        amount = np.asarray(amount, dtype=np.float64)
        order = _sort_order(t, supplier, buyer, product)
        if n_firms is None:
            n_firms = int(max(supplier.max(initial=-1), buyer.max(initial=-1)) + 1)
        if n_products is None:
            n_products = int(product.max(initial=-1) + 1)
        ds = cls(t[order], supplier[order], buyer[order], product[order], amount[order],
                 n_firms=n_firms, n_products=n_products)
        if validate:
            ds.validate()
        return ds

    def validate(self) -> None:
        if np.any(self.amount < 0) or not np.all(np.isfinite(self.amount)):
            raise ValidationError("amounts must be finite and non-negative")
        if np.any(self.t < 0):
            raise ValidationError("timesteps must be non-negative")
        if np.any(self.supplier == self.buyer):
            raise ValidationError("supplier equals buyer")
        if np.any((self.supplier < 0) | (self.supplier >= self.n_firms)):
            raise ValidationError("supplier id out of range")
        bad_buyer = (self.buyer != CONSUMER) & ((self.buyer < 0) | (self.buyer >= self.n_firms))
        if np.any(bad_buyer):
            raise ValidationError("buyer id out of range")
        if np.any((self.product < 0) | (self.product >= self.n_products)):
            raise ValidationError("product id out of range")

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Transaction]:
        for row in zip(self.t.tolist(), self.supplier.tolist(), self.buyer.tolist(),
                       self.product.tolist(), self.amount.tolist()):
            yield Transaction(*row)

    def __getitem__(self, i: int) -> Transaction:
        return Transaction(int(self.t[i]), int(self.supplier[i]), int(self.buyer[i]),
                           int(self.product[i]), float(self.amount[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.n_firms == other.n_firms and self.n_products == other.n_products
                and self.split == other.split
                and all(np.array_equal(getattr(self, c), getattr(other, c))
                        for c in ("t", "supplier", "buyer", "product", "amount")))

    @property
    def transactions(self) -> list[Transaction]:
        return list(self)

    def subset(self, mask_or_index) -> "Dataset":
        """Rows selected by a boolean mask or a slice, keeping node universes. Split is dropped."""
        return Dataset(self.t[mask_or_index], self.supplier[mask_or_index], self.buyer[mask_or_index],
                       self.product[mask_or_index], self.amount[mask_or_index],
                       n_firms=self.n_firms, n_products=self.n_products)

    def with_split(self, split: tuple[int, int] | None) -> "Dataset":
        return Dataset(self.t, self.supplier, self.buyer, self.product, self.amount,
                       self.n_firms, self.n_products, split)

    @property
    def train(self) -> "Dataset":
        return self.subset(slice(0, self._split()[0]))

    @property
    def val(self) -> "Dataset":
        a, b = self._split()
        return self.subset(slice(a, b))

    @property
    def test(self) -> "Dataset":
        return self.subset(slice(self._split()[1], len(self)))

    def _split(self) -> tuple[int, int]:
        if self.split is None:
            raise ValueError("dataset has no split; call chrono_split first")
        return self.split

    def timesteps(self) -> np.ndarray:
        return np.unique(self.t)

    def active_firms(self) -> np.ndarray:
        """Firm ids appearing as supplier or buyer (consumer sentinel excluded)."""
        ids = np.union1d(self.supplier, self.buyer)
        return ids[ids != CONSUMER]

    def rows_at(self, t: int) -> slice:
        lo, hi = np.searchsorted(self.t, [t, t + 1])
        return slice(int(lo), int(hi))


def _parse_int(text: str, field: str, line: int, allow_consumer: bool = False) -> int:
    text = text.strip()
    if allow_consumer and text == CONSUMER_TOKEN:
        return CONSUMER
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"bad {field} value {text!r}", line) from None


def parse_transactions(path: str | os.PathLike, n_firms: int | None = None,
                       n_products: int | None = None) -> Dataset:
    """Read a ``t,supplier,buyer,product,amount`` file into a sorted Dataset.

    Node universes are inferred from the ids present unless given.
    """
    cols: list[list] = [[], [], [], [], []]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HEADER:
            raise ParseError(f"expected header {','.join(HEADER)!r}, got {header!r}", 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ParseError(f"expected 5 fields, got {len(row)}", line)
            t = _parse_int(row[0], "t", line)
            s = _parse_int(row[1], "supplier", line)
            b = _parse_int(row[2], "buyer", line, allow_consumer=True)
            p = _parse_int(row[3], "product", line)
            try:
                a = float(row[4])
            except ValueError:
                raise ParseError(f"bad amount value {row[4]!r}", line) from None
            if not a >= 0 or not np.isfinite(a):
                raise ValidationError(f"line {line}: amount must be a finite non-negative number, got {row[4]!r}")
            if t < 0:
                raise ValidationError(f"line {line}: negative timestep")
            if s == b:
                raise ValidationError(f"line {line}: supplier equals buyer")
            for c, v in zip(cols, (t, s, b, p, a)):
                c.append(v)
    return Dataset.build(*cols, n_firms=n_firms, n_products=n_products)


def serialize_transactions(dataset: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(HEADER) + "\n")
        for t, s, b, p, a in zip(dataset.t.tolist(), dataset.supplier.tolist(), dataset.buyer.tolist(),
                                 dataset.product.tolist(), dataset.amount.tolist()):
            buyer = CONSUMER_TOKEN if b == CONSUMER else str(b)
            fh.write(f"{t},{s},{buyer},{p},{a!r}\n")


def chrono_split(dataset: Dataset, train_frac: float = 0.7, val_frac: float = 0.15) -> Dataset:
    """Index-based split: floor for train and val, remainder to test.

    Train always keeps at least one transaction so tiny datasets stay trainable.
    """
    if not (train_frac > 0 and val_frac > 0 and train_frac + val_frac < 1):
        raise ValueError("need 0 < train_frac, val_frac and train_frac + val_frac < 1")
    n = len(dataset)
    if n == 0:
        raise EmptyDatasetError("cannot split an empty dataset")
    # tolerance keeps exact products such as 0.7 * 100 from flooring to 69
    train_end = max(1, int(np.floor(train_frac * n + 1e-9)))
    val_end = min(n, train_end + int(np.floor(val_frac * n + 1e-9)))
    return dataset.with_split((train_end, val_end))


def split_sizes(dataset: Dataset) -> tuple[int, int, int]:
    a, b = dataset._split()
    return a, b - a, len(dataset) - b


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent PCG64 stream for a named consumer of the global seed."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [ord(c) for c in name]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
