"""Visit records, CSV ingestion, splitting, normalization and grouping."""
from dataclasses import dataclass, field, replace
import csv
import math
import os

import numpy as np

from .errors import EmptyDataset, EmptyGroup, MissingColumn, NonNumericCell, UnknownTreatmentLabel


@dataclass(frozen=True)
class PatientRecord:
    id: str
    features: np.ndarray
    treatment_current: int
    outcome_current: float
    outcome_next: float


@dataclass(frozen=True)
class CsvSchema:
    """Maps column names to roles.

    ``features=None`` means every column that is not id, treatment or
    outcome_next, in header order. The outcome_current column is always a
    feature; its position among the features is the dataset's ``co_index``.
    """

    id: str = "id"
    treatment: str = "treatment"
    outcome_current: str = "outcome_current"
    outcome_next: str = "outcome_next"
    features: tuple = None

    @classmethod
    def from_file(cls, path):
        kv = read_key_values(path)
        feats = kv.pop("features", None)
        if feats is not None:
            kv["features"] = tuple(f.strip() for f in feats.split(",") if f.strip())
        unknown = set(kv) - {"id", "treatment", "outcome_current", "outcome_next", "features"}
        if unknown:
            raise ValueError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**kv)


def read_key_values(path):
    """Parse a flat ``key = value`` file; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


@dataclass(frozen=True)
class Dataset:
    """Column-oriented, immutable collection of visit records.

    ``X[:, co_index]`` is the (possibly normalized) current outcome while
    ``outcome_current`` always keeps raw units.
    """

    ids: tuple
    X: np.ndarray
    treatment: np.ndarray
    outcome_current: np.ndarray
    outcome_next: np.ndarray
    feature_names: tuple
    treatment_names: tuple
    co_index: int
    normalization: tuple = None  # (means, stds) captured from training data

    def __post_init__(self):
        for arr in (self.X, self.treatment, self.outcome_current, self.outcome_next):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.ids)

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def n_treatments(self):
        return len(self.treatment_names)

    @property
    def records(self):
        return [self.record(i) for i in range(len(self))]

    def record(self, i):
        return PatientRecord(
            self.ids[i],
            self.X[i],
            int(self.treatment[i]),
            float(self.outcome_current[i]),
            float(self.outcome_next[i]),
        )

    def subset(self, index):
        index = np.asarray(index, dtype=int)
        return replace(
            self,
            ids=tuple(self.ids[i] for i in index),
            X=self.X[index].copy(),
            treatment=self.treatment[index].copy(),
            outcome_current=self.outcome_current[index].copy(),
            outcome_next=self.outcome_next[index].copy(),
        )

    def concat(self, other):
        return replace(
            self,
            ids=self.ids + other.ids,
            X=np.vstack([self.X, other.X]),
            treatment=np.concatenate([self.treatment, other.treatment]),
            outcome_current=np.concatenate([self.outcome_current, other.outcome_current]),
            outcome_next=np.concatenate([self.outcome_next, other.outcome_next]),
        )


def make_dataset(ids, X, treatment, outcome_next, feature_names, treatment_names, co_index,
                 outcome_current=None):
    X = np.array(X, dtype=float)
    oc = X[:, co_index].copy() if outcome_current is None else np.array(outcome_current, dtype=float)
    return Dataset(
        tuple(str(i) for i in ids),
        X,
        np.array(treatment, dtype=int),
        oc,
        np.array(outcome_next, dtype=float),
        tuple(feature_names),
        tuple(treatment_names),
        int(co_index),
    )


def _parse_float(text, row, col, path):
    try:
        value = float(text)
    except ValueError:
        raise NonNumericCell(row, col, text, path) from None
    if not math.isfinite(value):
        raise NonNumericCell(row, col, text, path)
    return value


def load_csv(path, schema=None, treatment_names=None):
    """Read a visit CSV into an un-normalized :class:`Dataset`.

    Treatment labels are mapped to dense indices in order of first
    appearance unless ``treatment_names`` fixes the mapping, in which case
    unseen labels raise :class:`UnknownTreatmentLabel`.
    """
    schema = schema or CsvSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path}: no header row") from None
        rows = [row for row in reader if row]

    for col in (schema.id, schema.treatment, schema.outcome_current, schema.outcome_next):
        if col not in header:
            raise MissingColumn(col, path)
    if schema.features is None:
        reserved = {schema.id, schema.treatment, schema.outcome_next}
        features = [h for h in header if h not in reserved]
    else:
        features = list(schema.features)
        if schema.outcome_current not in features:
            features.insert(0, schema.outcome_current)
        for col in features:
            if col not in header:
                raise MissingColumn(col, path)
    pos = {h: i for i, h in enumerate(header)}
    co_index = features.index(schema.outcome_current)

    labels = list(treatment_names) if treatment_names is not None else []
    fixed = treatment_names is not None
    label_index = {lab: i for i, lab in enumerate(labels)}
    ids, X, trt, y = [], [], [], []
    for rownum, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise NonNumericCell(rownum, "<row>", ",".join(row), path)
        lab = row[pos[schema.treatment]].strip()
        if lab not in label_index:
            if fixed:
                raise UnknownTreatmentLabel(lab, rownum)
            label_index[lab] = len(labels)
            labels.append(lab)
        ids.append(row[pos[schema.id]].strip())
        trt.append(label_index[lab])
        X.append([_parse_float(row[pos[c]], rownum, c, path) for c in features])
        y.append(_parse_float(row[pos[schema.outcome_next]], rownum, schema.outcome_next, path))
    if not ids:
        raise EmptyDataset(f"{path}: no data rows")
    return make_dataset(ids, np.array(X), trt, y, features, labels, co_index)


def write_csv(ds, path, schema=None):
    """Write a dataset in the CSV layout :func:`load_csv` reads.

    Always writes raw units: a normalized dataset is mapped back first.
    """
    schema = schema or CsvSchema()
    X = ds.X
    if ds.normalization is not None:
        means, stds = ds.normalization
        X = X * stds + means
        X[:, ds.co_index] = ds.outcome_current
    names = list(ds.feature_names)
    names[ds.co_index] = schema.outcome_current
    header = [schema.id, schema.treatment] + names + [schema.outcome_next]
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(ds)):
            w.writerow(
                [ds.ids[i], ds.treatment_names[ds.treatment[i]]]
                + [repr(float(v)) for v in X[i]]
                + [repr(float(ds.outcome_next[i]))]
            )
    os.replace(tmp, path)


def split(ds, train_frac=0.8, seed=0):
    """Random disjoint split with ``round(train_frac * N)`` training rows.

    Row order inside each part follows the original dataset order.
    """
    if len(ds) == 0:
        raise EmptyDataset("cannot split an empty dataset")
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must lie in (0, 1)")
    n = len(ds)
    n_train = int(round(train_frac * n))
    perm = np.random.default_rng(seed).permutation(n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))


def normalize(train, others=()):
    """Z-score features with training statistics (population std).

    Constant columns get std 1, so they map to zero. ``outcome_current``
    keeps raw units. Returns ``(train_normalized, [others_normalized])``.
    """
    if len(train) == 0:
        raise EmptyDataset("cannot normalize with an empty training set")
    means = train.X.mean(axis=0)
    stds = train.X.std(axis=0)
    stds = np.where(stds > 0, stds, 1.0)
    return apply_normalization(train, means, stds), [apply_normalization(o, means, stds) for o in others]


def apply_normalization(ds, means, stds):
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    return replace(ds, X=(ds.X - means) / stds, normalization=(means.copy(), stds.copy()))


@dataclass(frozen=True)
class TreatmentGroup:
    treatment: int
    X: np.ndarray
    y: np.ndarray
    index: np.ndarray = field(default=None, compare=False)  # rows in the source dataset

    @property
    def size(self):
        return len(self.y)

    @property
    def members(self):
        return list(zip(self.X, self.y))


def group_by_treatment(ds, allow_empty=False):
    """One group per treatment, members in dataset order.

    Raises :class:`EmptyGroup` for a treatment with no members unless
    ``allow_empty``, in which case that slot is ``None``.
    """
    if len(ds) == 0:
        raise EmptyDataset("cannot group an empty dataset")
    groups = []
    for m in range(ds.n_treatments):
        idx = np.flatnonzero(ds.treatment == m)
        if idx.size == 0:
            if not allow_empty:
                raise EmptyGroup(m)
            groups.append(None)
            continue
        groups.append(TreatmentGroup(m, ds.X[idx], ds.outcome_next[idx], idx))
    return groups
