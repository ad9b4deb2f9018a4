"""Listing ingestion, tokenization, vocabulary and popularity stratification."""
from __future__ import annotations

import csv
import io
import json
import math
import string
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum


from ._rng import stream

FIELDS = ("id", "description", "price", "bedrooms", "bathrooms", "zipcode", "occupancy_rate")
OOV = "<oov>"


class PopularityLabel(IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    def __str__(self):
        return self.name.lower()

    @classmethod
    def parse(cls, text):
        return cls[text.strip().upper()]


@dataclass(frozen=True)
class ListingRecord:
    id: str
    description: str
    price: float
    bedrooms: int
    bathrooms: float = 1.0
    zipcode: str = ""
    occupancy_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.occupancy_rate <= 1.0:
            raise ValueError(f"occupancy_rate {self.occupancy_rate} outside [0, 1]")
        if self.price < 0:
            raise ValueError(f"negative price {self.price}")
        if self.bedrooms < 0:
            raise ValueError(f"negative bedroom count {self.bedrooms}")
        if self.bathrooms < 0:
            raise ValueError(f"negative bathroom count {self.bathrooms}")


@dataclass
class ParseReport:
    rows_read: int = 0
    rows_rejected: int = 0
    reasons: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({"rows_read": self.rows_read, "rows_rejected": self.rows_rejected,
                           "reasons": self.reasons}, indent=2) + "\n"


def _parse_row(row):
    if None in row or any(row.get(f) is None for f in FIELDS):
        raise ValueError("wrong number of fields")
    nums = {}
    for name, conv in (("price", float), ("bedrooms", float), ("bathrooms", float), ("occupancy_rate", float)):
        try:
            nums[name] = conv(row[name])
        except ValueError:
            raise ValueError(f"{name} is not a number: {row[name]!r}") from None
        if not math.isfinite(nums[name]):
            raise ValueError(f"{name} is not finite")
    if nums["bedrooms"] != int(nums["bedrooms"]):
        raise ValueError(f"bedrooms is not an integer: {row['bedrooms']!r}")
    return ListingRecord(id=row["id"], description=row["description"], price=nums["price"],
                         bedrooms=int(nums["bedrooms"]), bathrooms=nums["bathrooms"],
                         zipcode=row["zipcode"], occupancy_rate=nums["occupancy_rate"])


def parse_listings(data):
    """Parse listing CSV (bytes or str). Returns ``(records, report)``.

    Bad rows are skipped and described in the report; row order is kept.
    """
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    missing = [f for f in FIELDS if f not in header]
    if missing:
        raise ValueError(f"CSV header lacks columns: {', '.join(missing)}")
    records, report = [], ParseReport()
    for lineno, row in enumerate(reader, start=2):
        report.rows_read += 1
        try:
            records.append(_parse_row(row))
        except ValueError as exc:
            report.rows_rejected += 1
            report.reasons.append(f"line {lineno}: {exc}")
    return records, report


def _is_punct(ch):
    return ch in string.punctuation or unicodedata.category(ch).startswith("P")


def tokenize(text):
    out = []
    for raw in text.lower().split():
        lo, hi = 0, len(raw)
        while lo < hi and _is_punct(raw[lo]):
            lo += 1
        while hi > lo and _is_punct(raw[hi - 1]):
            hi -= 1
        if lo < hi:
            out.append(raw[lo:hi])
    return out


@dataclass
class Vocabulary:
    tokens: list
    counts: dict
    min_count: int

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def oov_index(self):
        return len(self.tokens)

    def __len__(self):
        """Size including the OOV slot."""
        return len(self.tokens) + 1

    def __contains__(self, token):
        return token in self.index

    def lookup(self, token):
        return self.index.get(token, self.oov_index)

    def word(self, idx):
        return OOV if idx == self.oov_index else self.tokens[idx]

    def words(self):
        return self.tokens + [OOV]


def build_vocabulary(token_lists, min_count=2):
    if min_count < 1:
        raise ValueError("min_count must be at least 1")
    counts = Counter(t for toks in token_lists for t in toks)
    kept = sorted((t for t, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(tokens=kept, counts={t: counts[t] for t in kept}, min_count=min_count)


def price_per_bedroom(record):
    return record.price / max(record.bedrooms, 1)


@dataclass
class StratifiedDataset:
    records: list  # (ListingRecord, PopularityLabel) pairs
    bin_width: float
    boundaries: dict  # bin index -> {"n", "cut1", "cut2"}

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def with_label(self, label):
        return [r for r, lab in self.records if lab == label]


def tercile_labels(n):
    """Labels for ``n`` records already sorted by descending occupancy."""
    cut1, cut2 = -(-n // 3), -(-2 * n // 3)
    return [PopularityLabel.HIGH if k < cut1 else PopularityLabel.MEDIUM if k < cut2 else PopularityLabel.LOW
            for k in range(n)], cut1, cut2


def stratify(records, bin_width=30.0):
    """Label records High/Medium/Low by occupancy terciles within price-per-bedroom bins."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if not records:
        raise ValueError("no data to stratify")
    bins = {}
    for r in records:
        bins.setdefault(math.floor(price_per_bedroom(r) / bin_width), []).append(r)
    out, bounds = [], {}
    for b in sorted(bins):
        members = sorted(bins[b], key=lambda r: (-r.occupancy_rate, r.id))
        labels, cut1, cut2 = tercile_labels(len(members))
        out.extend(zip(members, labels))
        bounds[b] = {"n": len(members), "cut1": cut1, "cut2": cut2}
    return StratifiedDataset(out, bin_width, bounds)


@dataclass
class SplitDataset:
    train: list
    test: list
    seed: int
    ratio: float


def train_test_split(dataset, ratio=0.7, seed=0):
    items = list(dataset)
    n = len(items)
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    if n < 2:
        raise ValueError("need at least two records to split")
    order = stream(seed, "split").permutation(n)
    n_train = math.floor(ratio * n + 0.5)
    return SplitDataset([items[k] for k in order[:n_train]], [items[k] for k in order[n_train:]], seed, ratio)


# -- CSV output ------------------------------------------------------------

def _num(v):
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_labeled_csv(dataset, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FIELDS + ("label",))
    for r, lab in dataset:
        w.writerow([r.id, r.description, _num(r.price), r.bedrooms, _num(r.bathrooms), r.zipcode,
                    repr(float(r.occupancy_rate)), str(lab)])


def write_listings_csv(records, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FIELDS)
    for r in records:
        w.writerow([r.id, r.description, _num(r.price), r.bedrooms, _num(r.bathrooms), r.zipcode,
                    repr(float(r.occupancy_rate))])


def read_labeled_csv(text):
    """Inverse of :func:`write_labeled_csv`: a list of (record, label) pairs."""
    reader = csv.DictReader(io.StringIO(text))
    if "label" not in (reader.fieldnames or []):
        raise ValueError("CSV has no label column")
    out = []
    for row in reader:
        out.append((_parse_row(row), PopularityLabel.parse(row["label"])))
    return out


# -- synthetic data --------------------------------------------------------

DEFAULT_MARKERS = {
    PopularityLabel.HIGH: ("stunning", "renovated", "luxurious", "sunlit", "rooftop"),
    PopularityLabel.MEDIUM: ("comfortable", "decent", "tidy", "standard", "adequate"),
    PopularityLabel.LOW: ("basic", "cramped", "dated", "shared", "noisy"),
}

DEFAULT_FILLER = (
    "apartment", "bedroom", "kitchen", "bathroom", "street", "block", "subway", "parking",
    "laundry", "manhattan", "park", "station", "walk", "minutes", "close", "restaurants",
    "shops", "bars", "quiet", "bright", "view", "floor", "building", "elevator", "doorman",
    "wifi", "tv", "couch", "bed", "queen", "king", "closet", "space", "guests", "travelers",
    "weekend", "stay", "home", "neighborhood", "village", "midtown", "downtown", "uptown",
    "train", "bus", "airport", "coffee", "cafe", "museum", "central", "great", "lovely",
    "perfect", "easy", "access", "location", "entire", "private", "the", "a", "and", "to",
    "in", "of", "with", "for", "on", "is", "near", "our", "your",
)


@dataclass(frozen=True)
class CorpusTemplate:
    """Recipe for a synthetic corpus: class marker words plus shared filler."""

    markers: dict = field(default_factory=lambda: dict(DEFAULT_MARKERS))
    filler: tuple = DEFAULT_FILLER
    length: tuple = (10, 20)
    markers_per_record: tuple = (1, 3)
    price_per_bedroom: tuple = (31.0, 59.0)
    occupancy: dict = field(default_factory=lambda: {
        PopularityLabel.HIGH: (0.7, 1.0),
        PopularityLabel.MEDIUM: (0.35, 0.65),
        PopularityLabel.LOW: (0.0, 0.3),
    })


def generate_synthetic_corpus(template=None, n=300, seed=0, return_labels=False):
    """Deterministic listings whose text carries class-specific marker words.

    Classes are assigned round-robin (High, Medium, Low, ...) so counts are
    balanced; occupancy comes from disjoint per-class ranges and prices all
    land in one default price-per-bedroom bin.
    """
    template = template or CorpusTemplate()
    if n < 3:
        raise ValueError("n must be at least 3")
    sets = [set(v) for v in template.markers.values()]
    for a in range(len(sets)):
        for b in range(a + 1, len(sets)):
            if sets[a] & sets[b]:
                raise ValueError(f"marker sets overlap: {sorted(sets[a] & sets[b])}")
    rng = stream(seed, "corpus")
    order = (PopularityLabel.HIGH, PopularityLabel.MEDIUM, PopularityLabel.LOW)
    records, labels = [], []
    for k in range(n):
        label = order[k % 3]
        marks = template.markers[label]
        n_words = int(rng.integers(template.length[0], template.length[1] + 1))
        n_marks = int(rng.integers(template.markers_per_record[0], template.markers_per_record[1] + 1))
        words = [template.filler[j] for j in rng.integers(0, len(template.filler), size=n_words)]
        for _ in range(n_marks):
            pos = int(rng.integers(0, len(words) + 1))
            words.insert(pos, marks[int(rng.integers(0, len(marks)))])
        bedrooms = int(rng.integers(1, 4))
        ppb = rng.uniform(*template.price_per_bedroom)
        lo, hi = template.occupancy[label]
        records.append(ListingRecord(
            id=f"S{k:05d}",
            description=" ".join(words),
            price=round(ppb * bedrooms, 2),
            bedrooms=bedrooms,
            bathrooms=float(rng.integers(1, 3)),
            zipcode=f"100{int(rng.integers(0, 40)):02d}",
            occupancy_rate=round(float(rng.uniform(lo, hi)), 4),
        ))
        labels.append(label)
    return (records, labels) if return_labels else records
