"""Cases, feature-file I/O, split protocols and the synthetic feature generator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CaseFileError, ShapeError


@dataclass(frozen=True)
class Case:
    id: str
    features: np.ndarray
    solution: float


class CaseBase:
    """Immutable, ordered collection of cases sharing one feature dimension.

    A case's position is its tie-break key in retrieval.
    """

    def __init__(self, ids, features, solutions):
        ids = tuple(str(i) for i in ids)
        X = np.array(features, dtype=np.float64)
        y = np.array(solutions, dtype=np.float64)
        if X.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[1] < 1:
            raise ShapeError("feature dimension must be positive")
        if not (len(ids) == X.shape[0] == y.shape[0]) or y.ndim != 1:
            raise ShapeError("ids, features and solutions must have matching lengths")
        if not np.all(np.isfinite(y)):
            raise ValueError("solutions must be finite")
        if len(set(ids)) != len(ids):
            raise ValueError("case ids must be unique")
        X.flags.writeable = False
        y.flags.writeable = False
        self._ids = ids
        self._X = X
        self._y = y
        self._index = None

    @classmethod
    def from_cases(cls, cases, feature_dim=None) -> CaseBase:
        cases = list(cases)
        if not cases:
            if feature_dim is None:
                raise ValueError("feature_dim is required for an empty case base")
            return cls.empty(feature_dim)
        return cls(
            [c.id for c in cases],
            np.stack([np.asarray(c.features, dtype=np.float64) for c in cases]),
            [c.solution for c in cases],
        )

    @classmethod
    def empty(cls, feature_dim: int) -> CaseBase:
        return cls((), np.zeros((0, feature_dim)), np.zeros(0))

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def features(self) -> np.ndarray:
        return self._X

    @property
    def solutions(self) -> np.ndarray:
        return self._y

    @property
    def feature_dim(self) -> int:
        return self._X.shape[1]

    def __len__(self):
        return len(self._ids)

    def __getitem__(self, i) -> Case:
        return Case(self._ids[i], self._X[i], float(self._y[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, CaseBase):
            return NotImplemented
        return (
            self._ids == other._ids
            and np.array_equal(self._X, other._X)
            and np.array_equal(self._y, other._y)
        )

    __hash__ = None

    def index_of(self, case_id: str) -> int:
        if self._index is None:
            self._index = {cid: i for i, cid in enumerate(self._ids)}
        return self._index[case_id]

    def subset(self, indices) -> CaseBase:
        idx = np.asarray(indices, dtype=np.intp)
        return CaseBase([self._ids[i] for i in idx], self._X[idx], self._y[idx])

    def __repr__(self):
        return f"CaseBase(n={len(self)}, feature_dim={self.feature_dim})"


# -- feature files ------------------------------------------------------------


def _format_real(x: float) -> str:
    return repr(float(x))


def save_cases(cb: CaseBase, path) -> None:
    """Write ``id,label,f0,...`` CSV with shortest round-trip float text."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label", *(f"f{j}" for j in range(cb.feature_dim))])
        for cid, x, y in zip(cb.ids, cb.features, cb.solutions):
            writer.writerow([cid, _format_real(y), *map(_format_real, x)])


def load_cases(path) -> CaseBase:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CaseFileError(f"{path} is empty")
    header = rows[0]
    if len(header) < 3 or header[0] != "id" or header[1] != "label":
        raise CaseFileError("header must start with 'id,label' followed by feature columns", 1)
    dim = len(header) - 2
    expected = [f"f{j}" for j in range(dim)]
    if header[2:] != expected:
        raise CaseFileError(f"feature columns must be named f0..f{dim - 1}", 1)
    if len(rows) == 1:
        raise CaseFileError(f"{path} has a header but no cases")
    ids, X, y = [], np.empty((len(rows) - 1, dim)), np.empty(len(rows) - 1)
    seen = {}
    for r, row in enumerate(rows[1:]):
        line = r + 2
        if len(row) != dim + 2:
            raise CaseFileError(f"expected {dim + 2} fields, found {len(row)}", line)
        cid = row[0]
        if cid in seen:
            raise CaseFileError(f"duplicate id {cid!r} (first seen on line {seen[cid]})", line)
        seen[cid] = line
        try:
            values = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise CaseFileError(f"non-numeric field: {exc}", line) from None
        if not all(math.isfinite(v) for v in values):
            raise CaseFileError("non-finite value", line)
        ids.append(cid)
        y[r] = values[0]
        X[r] = values[1:]
    return CaseBase(ids, X, y)


# -- split protocols ----------------------------------------------------------


@dataclass(frozen=True)
class LabelRange:
    """Interval of solution values with per-end inclusivity."""

    name: str
    lower: float = -math.inf
    upper: float = math.inf
    include_lower: bool = True
    include_upper: bool = True

    def contains(self, values):
        v = np.asarray(values, dtype=np.float64)
        lo = v >= self.lower if self.include_lower else v > self.lower
        hi = v <= self.upper if self.include_upper else v < self.upper
        return lo & hi

    def overlaps(self, other: LabelRange) -> bool:
        if self.upper < other.lower or other.upper < self.lower:
            return False
        if self.upper == other.lower:
            return self.include_upper and other.include_lower
        if other.upper == self.lower:
            return other.include_upper and self.include_lower
        return True


DEFAULT_TRAIN_RANGE = LabelRange("20-50", 20.0, 50.0)
DEFAULT_QUERY_BUCKETS = (
    LabelRange("<20", upper=20.0, include_upper=False),
    LabelRange("50-70", 50.0, 70.0, include_lower=False),
    LabelRange(">70", lower=70.0, include_lower=False),
)


@dataclass(frozen=True)
class SplitPlan:
    setting: str
    fold_count: int = 10
    fractions: tuple[float, float, float] | None = None
    train_range: LabelRange | None = None
    query_buckets: tuple[LabelRange, ...] = ()

    def __post_init__(self):
        if self.setting not in ("normal", "novel"):
            raise ValueError(f"setting must be 'normal' or 'novel', got {self.setting!r}")
        k = self.fold_count
        min_folds = 3 if self.setting == "normal" else 2
        if k < min_folds:
            raise ValueError(f"{self.setting} setting needs at least {min_folds} folds")
        implied = (1 - 2 / k, 1 / k, 1 / k) if self.setting == "normal" else (1 - 1 / k, 1 / k, 0.0)
        fr = implied if self.fractions is None else tuple(self.fractions)
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {fr}")
        if any(abs(a - b) > 1e-9 for a, b in zip(fr, implied)):
            raise ValueError(f"fractions {fr} are inconsistent with {k} folds (expected {implied})")
        object.__setattr__(self, "fractions", fr)
        if self.setting == "novel":
            if self.train_range is None:
                object.__setattr__(self, "train_range", DEFAULT_TRAIN_RANGE)
            if not self.query_buckets:
                object.__setattr__(self, "query_buckets", DEFAULT_QUERY_BUCKETS)
            for b in self.query_buckets:
                if b.overlaps(self.train_range):
                    raise ValueError(f"query bucket {b.name!r} overlaps the training range")
            for i, a in enumerate(self.query_buckets):
                for b in self.query_buckets[i + 1 :]:
                    if a.overlaps(b):
                        raise ValueError(f"query buckets {a.name!r} and {b.name!r} overlap")

    @classmethod
    def normal(cls, fold_count=10) -> SplitPlan:
        return cls("normal", fold_count)

    @classmethod
    def novel(cls, fold_count=10, train_range=None, query_buckets=()) -> SplitPlan:
        return cls("novel", fold_count, train_range=train_range, query_buckets=tuple(query_buckets))


def _blocks(n: int, k: int, seed) -> list[np.ndarray]:
    # np.array_split gives the first n % k blocks one extra case
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(b) for b in np.array_split(perm, k)]


def _check_fold(plan: SplitPlan, fold: int, setting: str):
    if plan.setting != setting:
        raise ValueError(f"expected a {setting} plan, got {plan.setting!r}")
    if not 0 <= fold < plan.fold_count:
        raise ValueError(f"fold {fold} out of range [0, {plan.fold_count})")


def kfold_split(cb: CaseBase, plan: SplitPlan, fold: int, seed):
    """``(train, validation, test)`` for one fold of the normal protocol.

    One seeded shuffle cuts the case base into ``fold_count`` blocks; block
    ``fold`` is the test set and block ``fold + 1`` (cyclically) validation.
    Each subset keeps case-base order.
    """
    _check_fold(plan, fold, "normal")
    k = plan.fold_count
    blocks = _blocks(len(cb), k, seed)
    test = blocks[fold]
    val = blocks[(fold + 1) % k]
    train = np.sort(np.concatenate([b for i, b in enumerate(blocks) if i not in (fold, (fold + 1) % k)]))
    return cb.subset(train), cb.subset(val), cb.subset(test)


@dataclass
class NovelSplit:
    train: CaseBase
    validation: CaseBase
    buckets: list[tuple[str, CaseBase]] = field(default_factory=list)
    unassigned: int = 0

    @property
    def empty_buckets(self) -> list[str]:
        return [name for name, b in self.buckets if len(b) == 0]


def novel_split(cb: CaseBase, plan: SplitPlan, fold: int, seed) -> NovelSplit:
    """Train/validation from inside ``plan.train_range``; everything else goes to query buckets."""
    _check_fold(plan, fold, "novel")
    in_range = np.flatnonzero(plan.train_range.contains(cb.solutions))
    if in_range.size == 0:
        raise ValueError(f"no cases inside training range {plan.train_range.name}")
    blocks = _blocks(in_range.size, plan.fold_count, seed)
    val_pos = blocks[fold]
    train_pos = np.sort(np.concatenate([b for i, b in enumerate(blocks) if i != fold]))
    buckets = []
    assigned = np.zeros(len(cb), dtype=bool)
    assigned[in_range] = True
    for b in plan.query_buckets:
        members = np.flatnonzero(b.contains(cb.solutions))
        assigned[members] = True
        buckets.append((b.name, cb.subset(members)))
    return NovelSplit(
        train=cb.subset(in_range[train_pos]),
        validation=cb.subset(in_range[val_pos]),
        buckets=buckets,
        unassigned=int((~assigned).sum()),
    )


# -- synthetic features -------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    case_count: int = 2000
    feature_dim: int = 32
    label_mean: float = 35.0
    label_sd: float = 15.0
    label_range: tuple[float, float] = (1.0, 100.0)
    frequency_range: tuple[float, float] = (0.02, 0.2)
    noise_sigma: float = 0.05
    seed: int = 42

    def __post_init__(self):
        if self.case_count < 1 or self.feature_dim < 1:
            raise ValueError("case_count and feature_dim must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        lo, hi = self.frequency_range
        if not 0 < lo <= hi:
            raise ValueError("frequency_range must be positive and ordered")
        if not self.label_range[0] < self.label_range[1] or self.label_sd <= 0:
            raise ValueError("invalid label distribution")


def _truncated_normal(rng, n, mean, sd, lo, hi):
    out = np.empty(0)
    while out.size < n:
        draw = rng.normal(mean, sd, size=2 * (n - out.size) + 16)
        out = np.concatenate([out, draw[(draw >= lo) & (draw <= hi)]])
    return out[:n]


@dataclass(frozen=True)
class SyntheticFeatureMap:
    """``feature_j(t) = sin(frequency_j * t + phase_j)``, before noise."""

    frequencies: np.ndarray
    phases: np.ndarray

    def __call__(self, labels):
        t = np.asarray(labels, dtype=np.float64)[:, None]
        return np.sin(t * self.frequencies[None, :] + self.phases[None, :])


def _draw_feature_map(rng, config: SynthConfig) -> SyntheticFeatureMap:
    freqs = rng.uniform(*config.frequency_range, size=config.feature_dim)
    phases = rng.uniform(0.0, 2 * np.pi, size=config.feature_dim)
    return SyntheticFeatureMap(freqs, phases)


def synthetic_feature_map(config: SynthConfig) -> SyntheticFeatureMap:
    """The noise-free map :func:`generate_synthetic` uses for ``config``."""
    return _draw_feature_map(np.random.default_rng(config.seed), config)


def generate_synthetic(config: SynthConfig = SynthConfig()) -> CaseBase:
    """Cases whose features are noisy sinusoids of a skewed, bounded label.

    Features are computed from the drawn age; the stored solution is that
    age rounded to one decimal.
    """
    rng = np.random.default_rng(config.seed)
    fmap = _draw_feature_map(rng, config)
    lo, hi = config.label_range
    ages = _truncated_normal(rng, config.case_count, config.label_mean, config.label_sd, lo, hi)
    labels = np.clip(np.round(ages, 1), lo, hi)
    X = fmap(ages)
    if config.noise_sigma > 0:
        X = X + rng.normal(0.0, config.noise_sigma, size=X.shape)
    width = max(5, len(str(config.case_count - 1)))
    ids = [f"c{i:0{width}d}" for i in range(config.case_count)]
    return CaseBase(ids, X, labels)
