"""Dataset records, writer-disjoint splits, pair/triplet generation and a
synthetic signature generator.

Supported directory layouts (file extensions are matched case-insensitively
among png, jpg, jpeg, tif, tiff, bmp and pgm):

``CEDAR``
    ``full_org/original_<writer>_<n>.<ext>`` and ``full_forg/forgeries_<writer>_<n>.<ext>``
``ICDAR``
    ``genuine/<writer>_<n>.<ext>`` and ``forged/<forger><writer>_<n>.<ext>``;
    a forged stem's last three digits before the underscore name the writer.
``GPDS``
    ``<writer>/c-<writer>-<n>.<ext>`` (genuine) and ``<writer>/cf-<writer>-<n>.<ext>`` (forged)
``SYNTH``
    ``<writer>/genuine_<n>.png`` and ``<writer>/forged_<n>.png``
"""

from __future__ import annotations

import csv
import json
import os
import re
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy.interpolate import CubicSpline

from .errors import EmptyDataset, InsufficientSignatures, MissingDataset, TooFewWriters, UnknownLayout

LAYOUTS = ("CEDAR", "ICDAR", "GPDS", "SYNTH")
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp", ".pgm"}
GROUPS = {"C": "CEDAR", "I": "ICDAR", "G": "GPDS", "S": "SYNTH"}
# pairs (and triplets) per writer for each class, matching the usual split-file sizes
DEFAULT_QUOTAS = {"CEDAR": 105, "ICDAR": 81, "GPDS": 100, "SYNTH": 100}
PAIR_FIELDS = ["path_a", "path_b", "label", "writer_a", "kind_a", "writer_b", "kind_b", "dataset_a", "dataset_b"]
TRIPLET_FIELDS = ["path_a", "path_p", "path_n", "writer_a", "kind_n", "writer_n", "dataset_a", "dataset_n"]


def _id_key(s: str):
    """Numeric-aware sort key: '2' < '10'."""
    return (0, int(s), s) if s.isdigit() else (1, 0, s)


@dataclass(frozen=True)
class SignatureRecord:
    writer_id: str
    kind: str  # genuine | forged
    path: str
    dataset: str = "SYNTH"

    def __post_init__(self):
        if self.kind not in ("genuine", "forged"):
            raise ValueError(f"kind must be genuine or forged, got {self.kind!r}")

    @property
    def writer(self) -> str:
        """Writer identity qualified by dataset, so groups never merge writers."""
        return f"{self.dataset}:{self.writer_id}"

    @property
    def genuine(self) -> bool:
        return self.kind == "genuine"

    def sort_key(self):
        return (self.dataset, _id_key(self.writer_id), Path(self.path).name)


@dataclass(frozen=True)
class PairSample:
    a: SignatureRecord
    b: SignatureRecord
    label: int

    @property
    def keys(self) -> tuple[str, str]:
        return (self.a.path, self.b.path)

    def label_is_consistent(self) -> bool:
        if self.label == 0:
            return self.a.writer == self.b.writer and self.a.genuine and self.b.genuine
        same = self.a.writer == self.b.writer
        return (same and self.a.genuine != self.b.genuine) or (not same and self.a.genuine and self.b.genuine)


@dataclass(frozen=True)
class TripletSample:
    anchor: SignatureRecord
    positive: SignatureRecord
    negative: SignatureRecord

    @property
    def keys(self) -> tuple[str, str, str]:
        return (self.anchor.path, self.positive.path, self.negative.path)

    def is_consistent(self) -> bool:
        a, p, n = self.anchor, self.positive, self.negative
        pos_ok = a.genuine and p.genuine and a.writer == p.writer and a.path != p.path
        neg_ok = (n.writer == a.writer and not n.genuine) or (n.writer != a.writer and n.genuine)
        return pos_ok and neg_ok


@dataclass
class WriterSplit:
    train: list[str]
    valid: list[str]
    test: list[str]

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.valid), len(self.test)

    def as_dict(self) -> dict[str, list[str]]:
        return {"train": list(self.train), "valid": list(self.valid), "test": list(self.test)}


SPLITS = ("train", "valid", "test")


@dataclass
class SplitManifest:
    train: list[PairSample] = field(default_factory=list)
    valid: list[PairSample] = field(default_factory=list)
    test: list[PairSample] = field(default_factory=list)
    train_triplets: list[TripletSample] = field(default_factory=list)
    valid_triplets: list[TripletSample] = field(default_factory=list)
    test_triplets: list[TripletSample] = field(default_factory=list)
    writers: dict[str, list[str]] = field(default_factory=lambda: {s: [] for s in SPLITS})

    def pairs(self, split: str) -> list[PairSample]:
        return getattr(self, split)

    def triplets(self, split: str) -> list[TripletSample]:
        return getattr(self, f"{split}_triplets")

    def check(self) -> None:
        """Raise ``ValueError`` if writer-disjointness, label rules or balance fail."""
        seen: dict[str, str] = {}
        for split in SPLITS:
            for w in self.writers.get(split, []):
                if w in seen and seen[w] != split:
                    raise ValueError(f"writer {w} appears in {seen[w]} and {split}")
                seen[w] = split
            for p in self.pairs(split):
                if not p.label_is_consistent():
                    raise ValueError(f"pair {p.keys} violates its label rule")
                for r in (p.a, p.b):
                    if seen.get(r.writer, split) != split:
                        raise ValueError(f"{split} pair uses writer {r.writer} from another split")
            for t in self.triplets(split):
                if not t.is_consistent():
                    raise ValueError(f"triplet {t.keys} violates its rule")
            n1 = sum(p.label for p in self.pairs(split))
            if abs(len(self.pairs(split)) - 2 * n1) > 1:
                raise ValueError(f"{split} pairs are unbalanced")

    def save(self, directory) -> Path:
        """Write ``<split>_pairs.csv``, ``<split>_triplets.csv`` and ``writers.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for split in SPLITS:
            write_pairs_csv(d / f"{split}_pairs.csv", self.pairs(split))
            write_triplets_csv(d / f"{split}_triplets.csv", self.triplets(split))
        (d / "writers.json").write_text(json.dumps(self.writers, indent=2, sort_keys=True) + "\n")
        return d

    @classmethod
    def load(cls, directory) -> "SplitManifest":
        d = Path(directory)
        if not d.is_dir():
            raise MissingDataset(f"no manifest directory at {d}")
        m = cls()
        for split in SPLITS:
            p = d / f"{split}_pairs.csv"
            t = d / f"{split}_triplets.csv"
            setattr(m, split, read_pairs_csv(p) if p.exists() else [])
            setattr(m, f"{split}_triplets", read_triplets_csv(t) if t.exists() else [])
        w = d / "writers.json"
        if w.exists():
            m.writers = json.loads(w.read_text())
        return m


# --------------------------------------------------------------------------
# scanning


def _image_files(d: Path):
    if not d.is_dir():
        return []
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _scan_cedar(root: Path):
    pats = [("full_org", re.compile(r"original_(\d+)_(\d+)$", re.I), "genuine"),
            ("full_forg", re.compile(r"forgeries_(\d+)_(\d+)$", re.I), "forged")]
    for sub, pat, kind in pats:
        for f in _image_files(root / sub):
            m = pat.match(f.stem)
            if m:
                yield m.group(1), kind, f


def _scan_icdar(root: Path):
    for f in _image_files(root / "genuine"):
        m = re.match(r"(\d+)_(\d+)$", f.stem)
        if m:
            yield m.group(1), "genuine", f
    for f in _image_files(root / "forged"):
        m = re.match(r"(\d*?)(\d{3})_(\d+)$", f.stem)
        if m:
            yield m.group(2), "forged", f


def _scan_gpds(root: Path):
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        for f in _image_files(d):
            m = re.match(r"(cf|c)-(\d+)-(\d+)$", f.stem, re.I)
            if m:
                yield m.group(2), "forged" if m.group(1).lower() == "cf" else "genuine", f


def _scan_synth(root: Path):
    for d in sorted(p for p in root.iterdir() if p.is_dir()):
        for f in _image_files(d):
            m = re.match(r"(genuine|forged)_(\d+)$", f.stem)
            if m:
                yield d.name, m.group(1), f


_SCANNERS = {"CEDAR": _scan_cedar, "ICDAR": _scan_icdar, "GPDS": _scan_gpds, "SYNTH": _scan_synth}


def scan_dataset(root, layout: str) -> list[SignatureRecord]:
    """Enumerate signature images under ``root`` for one of the known layouts.

    Missing writer IDs are simply absent. Records are ordered by
    (dataset, writer id, file name) and carry absolute paths.
    """
    layout = layout.upper()
    if layout not in _SCANNERS:
        raise UnknownLayout(f"unknown layout {layout!r}; expected one of {', '.join(LAYOUTS)}")
    root = Path(root).resolve()
    if not root.is_dir():
        raise EmptyDataset(f"{root} is not a directory")
    records = [SignatureRecord(w, kind, str(f), layout) for w, kind, f in _SCANNERS[layout](root)]
    if not records:
        raise EmptyDataset(f"no {layout} signatures found under {root}")
    return sorted(records, key=SignatureRecord.sort_key)


def count_records(records) -> dict[str, dict[str, int]]:
    """Per-writer genuine/forged counts."""
    out: dict[str, dict[str, int]] = defaultdict(lambda: {"genuine": 0, "forged": 0})
    for r in records:
        out[r.writer][r.kind] += 1
    return dict(out)


def _by_writer(records):
    g: dict[str, list[SignatureRecord]] = defaultdict(list)
    f: dict[str, list[SignatureRecord]] = defaultdict(list)
    for r in sorted(records, key=SignatureRecord.sort_key):
        (g if r.genuine else f)[r.writer].append(r)
    return g, f


def _writer_sort(writers):
    def key(w):
        ds, _, wid = w.partition(":")
        return (ds, _id_key(wid))

    return sorted(writers, key=key)


# --------------------------------------------------------------------------
# splits


def split_sizes(n: int, fractions) -> tuple[int, ...]:
    """Largest-remainder rounding of n * fractions, at least one writer per nonzero share."""
    fr = np.asarray(fractions, dtype=np.float64)
    raw = n * fr
    sizes = np.floor(raw).astype(int)
    rem = np.round(raw - sizes, 9)
    # stable: ties go to the earlier split
    for i in sorted(range(len(fr)), key=lambda i: (-rem[i], i))[: n - sizes.sum()]:
        sizes[i] += 1
    for i in range(len(fr)):
        if fr[i] > 0 and sizes[i] == 0:
            sizes[int(np.argmax(sizes))] -= 1
            sizes[i] += 1
    return tuple(int(s) for s in sizes)


def split_writers(records, fractions=(2 / 3, 1 / 6, 1 / 6), seed: int = 0, ordered: bool = False) -> WriterSplit:
    """Writer-disjoint train/valid/test partition.

    ``ordered`` assigns consecutive writer IDs (e.g. 01-37 / 38-46 / 47-55 for
    55 writers); otherwise writers are shuffled with ``seed``.
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"fractions must be three non-negative shares summing to 1, got {fractions}")
    writers = _writer_sort({r.writer for r in records})
    if len(writers) < 3:
        raise TooFewWriters(f"need at least 3 writers for a three-way split, found {len(writers)}")
    if not ordered:
        writers = [writers[i] for i in np.random.default_rng(seed).permutation(len(writers))]
    a, b, _ = split_sizes(len(writers), fractions)
    return WriterSplit(
        _writer_sort(writers[:a]), _writer_sort(writers[a : a + b]), _writer_sort(writers[a + b :])
    )


# --------------------------------------------------------------------------
# pairs and triplets


def _draw(pool: list, k: int, rng: np.random.Generator) -> list:
    """k items: without replacement until the pool is exhausted, then with replacement."""
    if k <= 0 or not pool:
        return []
    order = rng.permutation(len(pool))
    picked = [pool[i] for i in order[:k]]
    if k > len(pool):
        picked += [pool[i] for i in rng.integers(0, len(pool), size=k - len(pool))]
    return picked


def _cross_count(quota: int, fraction: float) -> int:
    return int(np.floor(quota * fraction + 0.5))


def generate_pairs(
    records,
    writers=None,
    genuine_pairs_per_writer: int = 50,
    forged_pairs_per_writer: int = 50,
    cross_writer_fraction: float = 0.2,
    seed: int = 0,
    dedup: bool = False,
) -> list[PairSample]:
    """Balanced pairs for the contrastive loss.

    Label 0: ordered genuine-genuine pairs of the same writer; (a, b) and
    (b, a) are distinct samples. Label 1: of each writer's forged quota, a
    ``cross_writer_fraction`` share pairs a genuine signature with a genuine
    signature of another writer in the set and the rest pair it with one of
    the writer's forgeries. The larger class is trimmed so the counts differ
    by at most one. With ``dedup`` the pools are sampled without replacement
    only, so quotas may come up short.
    """
    if not 0.0 <= cross_writer_fraction <= 1.0:
        raise ValueError("cross_writer_fraction must lie in [0, 1]")
    gen, forg = _by_writer(records)
    ws = _writer_sort(writers if writers is not None else set(gen) | set(forg))
    rng = np.random.default_rng(seed)
    n_cross = _cross_count(forged_pairs_per_writer, cross_writer_fraction) if len(ws) > 1 else 0
    n_forged = forged_pairs_per_writer - n_cross
    zeros, ones = [], []
    for w in ws:
        g, f = gen.get(w, []), forg.get(w, [])
        if len(g) < 2:
            raise InsufficientSignatures(f"writer {w} has {len(g)} genuine signatures; 2 are needed")
        if n_forged > 0 and not f:
            raise InsufficientSignatures(f"writer {w} has no forged signatures")
        draw = (lambda pool, k: _draw(pool, min(k, len(pool)), rng)) if dedup else (lambda pool, k: _draw(pool, k, rng))
        for a, b in draw(list(permutations(g, 2)), genuine_pairs_per_writer):
            zeros.append(PairSample(a, b, 0))
        for a, b in draw([(a, b) for a in g for b in f], n_forged):
            ones.append(PairSample(a, b, 1))
        others = [r for o in ws if o != w for r in gen.get(o, [])]
        for a, b in draw([(a, b) for a in g for b in others], n_cross):
            ones.append(PairSample(a, b, 1))
    zeros, ones = _balance(zeros, ones, rng)
    return zeros + ones


def _balance(zeros, ones, rng):
    n = min(len(zeros), len(ones))
    if len(zeros) > n + 1:
        keep = np.sort(rng.permutation(len(zeros))[:n])
        zeros = [zeros[i] for i in keep]
    elif len(ones) > n + 1:
        keep = np.sort(rng.permutation(len(ones))[:n])
        ones = [ones[i] for i in keep]
    return zeros, ones


def generate_triplets(
    records, writers=None, triplets_per_writer: int = 50, cross_writer_fraction: float = 0.2, seed: int = 0
) -> list[TripletSample]:
    """Anchor/positive are distinct genuine signatures of one writer; the
    negative is one of that writer's forgeries or, for a
    ``cross_writer_fraction`` share, a genuine signature of another writer."""
    if not 0.0 <= cross_writer_fraction <= 1.0:
        raise ValueError("cross_writer_fraction must lie in [0, 1]")
    gen, forg = _by_writer(records)
    ws = _writer_sort(writers if writers is not None else set(gen) | set(forg))
    rng = np.random.default_rng(seed)
    n_cross = _cross_count(triplets_per_writer, cross_writer_fraction) if len(ws) > 1 else 0
    n_forged = triplets_per_writer - n_cross
    out = []
    for w in ws:
        g, f = gen.get(w, []), forg.get(w, [])
        if len(g) < 2:
            raise InsufficientSignatures(f"writer {w} has {len(g)} genuine signatures; 2 are needed")
        if n_forged > 0 and not f:
            raise InsufficientSignatures(f"writer {w} has no forged signatures")
        anchors = _draw(list(permutations(g, 2)), triplets_per_writer, rng)
        others = [r for o in ws if o != w for r in gen.get(o, [])]
        negatives = _draw(f, n_forged, rng) + _draw(others, n_cross, rng)
        out += [TripletSample(a, p, n) for (a, p), n in zip(anchors, negatives)]
    return out


def build_manifest(
    records,
    split: WriterSplit,
    genuine_pairs_per_writer: int = 50,
    forged_pairs_per_writer: int = 50,
    triplets_per_writer: int = 50,
    cross_writer_fraction: float = 0.2,
    seed: int = 0,
) -> SplitManifest:
    """Pairs and triplets for each split, drawn only among that split's writers."""
    m = SplitManifest(writers=split.as_dict())
    ss = np.random.SeedSequence(seed).spawn(6)
    for i, name in enumerate(SPLITS):
        ws = getattr(split, name)
        if not ws:
            continue
        recs = [r for r in records if r.writer in set(ws)]
        setattr(m, name, generate_pairs(recs, ws, genuine_pairs_per_writer, forged_pairs_per_writer,
                                        cross_writer_fraction, int(ss[i].generate_state(1)[0])))
        setattr(m, f"{name}_triplets", generate_triplets(recs, ws, triplets_per_writer, cross_writer_fraction,
                                                         int(ss[3 + i].generate_state(1)[0])))
    return m


def downsample_writers(pairs, target_per_writer: int, seed: int = 0) -> list[PairSample]:
    """Cap every writer (of the first pair member) at ``target_per_writer`` pairs.

    Labels are sampled in equal shares where possible, the odd pair going to
    label 0 and 1 on alternate writers. Retained pairs keep their order.
    """
    pairs = list(pairs)
    rng = np.random.default_rng(seed)
    groups: dict[str, list[int]] = defaultdict(list)
    for i, p in enumerate(pairs):
        groups[p.a.writer].append(i)
    keep: list[int] = []
    for j, w in enumerate(_writer_sort(groups)):
        idx = groups[w]
        if len(idx) <= target_per_writer:
            keep += idx
            continue
        by_label = [[i for i in idx if pairs[i].label == lab] for lab in (0, 1)]
        half = target_per_writer // 2
        want = [half + (target_per_writer % 2) * (j % 2 == 0), half + (target_per_writer % 2) * (j % 2 == 1)]
        # move unused quota to the other label when one side runs short
        for a, b in ((0, 1), (1, 0)):
            short = want[a] - len(by_label[a])
            if short > 0:
                want[a] -= short
                want[b] += short
        for lab in (0, 1):
            keep += [by_label[lab][i] for i in rng.permutation(len(by_label[lab]))[: want[lab]]]
    return [pairs[i] for i in sorted(keep)]


def compose_groups(manifests: dict[str, SplitManifest], group) -> SplitManifest:
    """Concatenate member manifests split-wise.

    ``group`` is a letter code (CI, CG, IG, CIG; S stands for SYNTH) or a
    list of dataset names.
    """
    names = [GROUPS[c] for c in group.upper()] if isinstance(group, str) else list(group)
    if isinstance(group, str) and any(c not in GROUPS for c in group.upper()):
        raise MissingDataset(f"unknown group code {group!r}")
    missing = [n for n in names if n not in manifests]
    if missing:
        raise MissingDataset(f"group {group!r} needs {', '.join(missing)}")
    out = SplitManifest()
    for n in names:
        m = manifests[n]
        for s in SPLITS:
            out.pairs(s).extend(m.pairs(s))
            out.triplets(s).extend(m.triplets(s))
            out.writers[s] = out.writers[s] + list(m.writers.get(s, []))
    return out


# --------------------------------------------------------------------------
# manifest CSV


def _rel(path: str, base: Path) -> str:
    return Path(os.path.relpath(path, base)).as_posix()


def _abs(path: str, base: Path) -> str:
    p = Path(path)
    return str(p if p.is_absolute() else (base / p).resolve())


def write_pairs_csv(path, pairs) -> Path:
    """Pairs with paths relative to the CSV's directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PAIR_FIELDS)
        for p in pairs:
            w.writerow([_rel(p.a.path, base), _rel(p.b.path, base), p.label,
                        p.a.writer_id, p.a.kind, p.b.writer_id, p.b.kind, p.a.dataset, p.b.dataset])
    return path


def read_pairs_csv(path) -> list[PairSample]:
    path = Path(path)
    base = path.parent.resolve()
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            label = int(r["label"])
            # minimal files (path_a, path_b, label) get placeholder identities
            a = SignatureRecord(r.get("writer_a") or "?", r.get("kind_a") or "genuine",
                                _abs(r["path_a"], base), r.get("dataset_a") or "SYNTH")
            b = SignatureRecord(r.get("writer_b") or "?", r.get("kind_b") or ("forged" if label else "genuine"),
                                _abs(r["path_b"], base), r.get("dataset_b") or "SYNTH")
            out.append(PairSample(a, b, label))
    return out


def write_triplets_csv(path, triplets) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRIPLET_FIELDS)
        for t in triplets:
            w.writerow([_rel(t.anchor.path, base), _rel(t.positive.path, base), _rel(t.negative.path, base),
                        t.anchor.writer_id, t.negative.kind, t.negative.writer_id, t.anchor.dataset, t.negative.dataset])
    return path


def read_triplets_csv(path) -> list[TripletSample]:
    path = Path(path)
    base = path.parent.resolve()
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            ds = r.get("dataset_a") or "SYNTH"
            wa = r.get("writer_a") or "?"
            a = SignatureRecord(wa, "genuine", _abs(r["path_a"], base), ds)
            p = SignatureRecord(wa, "genuine", _abs(r["path_p"], base), ds)
            n = SignatureRecord(r.get("writer_n") or "?", r.get("kind_n") or "forged",
                                _abs(r["path_n"], base), r.get("dataset_n") or ds)
            out.append(TripletSample(a, p, n))
    return out


# --------------------------------------------------------------------------
# synthetic signatures


@dataclass
class StrokeStyle:
    """Seeded parameters of one synthetic writer (or of one rendering)."""

    points: np.ndarray  # (k, 2) control points, unit square (x right, y down)
    loops: int
    loop_amp: tuple[float, float]
    loop_phase: float
    width: float  # pixels on a 512 canvas
    slant: float  # horizontal shear
    ink: float  # darkest gray level
    pressure_freq: float
    pressure_phase: float
    tremor: float = 0.0  # pixels of high-frequency wobble


def _writer_style(rng: np.random.Generator) -> StrokeStyle:
    k = int(rng.integers(5, 9))
    xs = np.sort(rng.uniform(0.1, 0.9, k))
    xs[0], xs[-1] = 0.08 + rng.uniform(0, 0.05), 0.92 - rng.uniform(0, 0.05)
    ys = 0.5 + rng.uniform(-0.18, 0.18, k)
    return StrokeStyle(
        points=np.stack([xs, ys], 1),
        loops=int(rng.integers(3, 8)),
        loop_amp=(float(rng.uniform(0.02, 0.05)), float(rng.uniform(0.05, 0.12))),
        loop_phase=float(rng.uniform(0, 2 * np.pi)),
        width=float(rng.uniform(4.0, 8.0)),
        slant=float(rng.uniform(-0.35, 0.35)),
        ink=float(rng.uniform(10, 60)),
        pressure_freq=float(rng.uniform(1.0, 4.0)),
        pressure_phase=float(rng.uniform(0, 2 * np.pi)),
    )


def _vary(style: StrokeStyle, rng: np.random.Generator, amount: float) -> StrokeStyle:
    """Copy of ``style`` with every parameter jittered; ``amount`` 1 is a genuine rendering."""
    pts = style.points + rng.normal(0, 0.006 * amount, style.points.shape)
    return StrokeStyle(
        points=pts,
        loops=style.loops,
        loop_amp=tuple(a * (1 + rng.normal(0, 0.03 * amount)) for a in style.loop_amp),
        loop_phase=style.loop_phase + rng.normal(0, 0.05 * amount),
        width=max(2.0, style.width * (1 + rng.normal(0, 0.04 * amount))),
        slant=style.slant + rng.normal(0, 0.015 * amount),
        ink=float(np.clip(style.ink + rng.normal(0, 3 * amount), 0, 90)),
        pressure_freq=style.pressure_freq,
        pressure_phase=style.pressure_phase + rng.normal(0, 0.1 * amount),
        tremor=style.tremor,
    )


def _forgery_style(target: StrokeStyle, forger: StrokeStyle, rng: np.random.Generator) -> StrokeStyle:
    """A forger imitating ``target``: the shape is copied with larger errors,
    while stroke width, ink and pressure rhythm partly follow the forger's hand
    and the slow, careful trace adds tremor."""
    s = _vary(target, rng, 4.0)
    mix = float(rng.uniform(0.3, 0.7))
    s.width = max(2.0, (1 - mix) * s.width + mix * forger.width)
    s.ink = float(np.clip((1 - mix) * s.ink + mix * forger.ink, 0, 90))
    s.pressure_freq = forger.pressure_freq
    s.pressure_phase = forger.pressure_phase
    s.tremor = float(rng.uniform(0.8, 2.0))
    return s


def _trace(style: StrokeStyle, rng: np.random.Generator, canvas: int, n: int = 600) -> np.ndarray:
    t_ctrl = np.linspace(0, 1, len(style.points))
    spline = CubicSpline(t_ctrl, style.points, bc_type="natural")
    t = np.linspace(0, 1, n)
    xy = spline(t)
    ang = 2 * np.pi * style.loops * t + style.loop_phase
    xy[:, 0] += style.loop_amp[0] * np.cos(ang)
    xy[:, 1] += style.loop_amp[1] * np.sin(ang)
    xy[:, 0] += style.slant * (0.5 - xy[:, 1])
    xy = 0.06 + 0.88 * np.clip(xy, 0, 1)
    pts = xy * (canvas - 1)
    if style.tremor > 0:
        wobble = rng.normal(0, 1, (n, 2))
        kernel = np.ones(5) / 5
        wobble = np.stack([np.convolve(wobble[:, i], kernel, mode="same") for i in range(2)], 1)
        pts += style.tremor * wobble / wobble.std()
    return pts


def render_signature(style: StrokeStyle, rng: np.random.Generator, canvas: int = 512) -> np.ndarray:
    """Dark strokes on a white canvas as uint8; pen pressure modulates width and ink."""
    pts = _trace(style, rng, canvas)
    img = Image.new("L", (canvas, canvas), 255)
    draw = ImageDraw.Draw(img)
    n = len(pts)
    u = np.linspace(0, 1, n)
    pressure = 0.5 + 0.5 * np.sin(2 * np.pi * style.pressure_freq * u + style.pressure_phase)
    for i in range(n - 1):
        w = max(1, int(round(style.width * (0.7 + 0.6 * pressure[i]))))
        ink = int(np.clip(style.ink + 60 * (1 - pressure[i]), 0, 150))
        draw.line([tuple(pts[i]), tuple(pts[i + 1])], fill=ink, width=w)
        if w > 2:
            r = w / 2
            x, y = pts[i + 1]
            draw.ellipse([x - r, y - r, x + r, y + r], fill=ink)
    arr = np.asarray(img, dtype=np.float64)
    arr += rng.normal(0, 2.0, arr.shape)
    return np.clip(np.round(arr), 0, 255).astype(np.uint8)


def synth_generate(
    out_dir,
    num_writers: int,
    genuine_per_writer: int,
    forged_per_writer: int,
    canvas: int = 512,
    seed: int = 0,
) -> list[SignatureRecord]:
    """Write a SYNTH-layout tree of seeded synthetic signatures and return its records.

    Writer ``w`` gets its own seeded style; each forgery of ``w`` is produced by
    another writer imitating it. Identical arguments give byte-identical files.
    """
    if min(num_writers, genuine_per_writer, forged_per_writer, canvas) < 1:
        raise ValueError("counts and canvas must be at least 1")
    out = Path(out_dir)
    styles = [_writer_style(np.random.default_rng([seed, w, 0])) for w in range(num_writers)]
    for w in range(num_writers):
        rng = np.random.default_rng([seed, w, 1])
        wdir = out / f"w{w + 1:03d}"
        wdir.mkdir(parents=True, exist_ok=True)
        for i in range(genuine_per_writer):
            img = render_signature(_vary(styles[w], rng, 1.0), rng, canvas)
            Image.fromarray(img, mode="L").save(wdir / f"genuine_{i + 1:02d}.png", format="PNG")
        for i in range(forged_per_writer):
            forger = (w + 1 + int(rng.integers(0, max(num_writers - 1, 1)))) % num_writers if num_writers > 1 else w
            img = render_signature(_forgery_style(styles[w], styles[forger], rng), rng, canvas)
            Image.fromarray(img, mode="L").save(wdir / f"forged_{i + 1:02d}.png", format="PNG")
    return scan_dataset(out, "SYNTH")
