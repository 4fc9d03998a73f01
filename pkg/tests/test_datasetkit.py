from collections import Counter
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from shellsig import datasetkit as dk
from shellsig import imgcore
from shellsig.errors import EmptyDataset, InsufficientSignatures, MissingDataset, TooFewWriters, UnknownLayout


def make_records(writers, genuine, forged, dataset="SYNTH"):
    recs = []
    for w in range(writers):
        wid = f"{w + 1:02d}"
        recs += [dk.SignatureRecord(wid, "genuine", f"/d/{dataset}/{wid}/g{i}.png", dataset) for i in range(genuine)]
        recs += [dk.SignatureRecord(wid, "forged", f"/d/{dataset}/{wid}/f{i}.png", dataset) for i in range(forged)]
    return recs


def touch(path):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new("L", (4, 4), 255).save(path)


class TestScan:
    def test_synth_tree(self, tmp_path):
        for w in ("w001", "w002"):
            for i in range(1, 4):
                touch(tmp_path / w / f"genuine_{i:02d}.png")
                touch(tmp_path / w / f"forged_{i:02d}.png")
        (tmp_path / "w001" / "notes.txt").write_text("ignored")
        recs = dk.scan_dataset(tmp_path, "SYNTH")
        assert len(recs) == 12
        assert Counter(r.kind for r in recs) == {"genuine": 6, "forged": 6}
        assert recs == sorted(recs, key=dk.SignatureRecord.sort_key)

    def test_icdar_missing_writers(self, tmp_path):
        for w in ("001", "002", "003", "004", "006", "009", "012"):
            touch(tmp_path / "genuine" / f"{w}_01.png")
            touch(tmp_path / "forged" / f"0119{w}_01.PNG")
        recs = dk.scan_dataset(tmp_path, "ICDAR")
        writers = {r.writer_id for r in recs}
        assert "005" not in writers and "012" in writers
        assert all(r.dataset == "ICDAR" for r in recs)
        assert Counter(r.kind for r in recs if r.writer_id == "006") == {"genuine": 1, "forged": 1}

    def test_cedar_and_gpds(self, tmp_path):
        touch(tmp_path / "c" / "full_org" / "original_1_1.png")
        touch(tmp_path / "c" / "full_forg" / "forgeries_1_1.png")
        touch(tmp_path / "g" / "001" / "c-001-01.jpg")
        touch(tmp_path / "g" / "001" / "cf-001-01.jpg")
        for sub, layout in (("c", "CEDAR"), ("g", "GPDS")):
            recs = dk.scan_dataset(tmp_path / sub, layout)
            assert sorted(r.kind for r in recs) == ["forged", "genuine"]
            assert len({r.writer for r in recs}) == 1

    def test_empty(self, tmp_path):
        with pytest.raises(EmptyDataset):
            dk.scan_dataset(tmp_path, "SYNTH")
        with pytest.raises(EmptyDataset):
            dk.scan_dataset(tmp_path / "missing", "SYNTH")

    def test_unknown_layout(self, tmp_path):
        with pytest.raises(UnknownLayout):
            dk.scan_dataset(tmp_path, "MNIST")


class TestSplit:
    def test_rounding(self):
        recs = make_records(6, 2, 1)
        assert dk.split_writers(recs, seed=0).sizes() == (4, 1, 1)

    def test_cedar_ordered(self):
        recs = make_records(55, 2, 1, "CEDAR")
        s = dk.split_writers(recs, ordered=True)
        assert s.sizes() == (37, 9, 9)
        assert s.train[0] == "CEDAR:01" and s.train[-1] == "CEDAR:37"
        assert s.valid == [f"CEDAR:{i:02d}" for i in range(38, 47)]
        assert s.test == [f"CEDAR:{i:02d}" for i in range(47, 56)]

    def test_deterministic(self):
        recs = make_records(20, 2, 1)
        assert dk.split_writers(recs, seed=5) == dk.split_writers(recs, seed=5)
        assert dk.split_writers(recs, seed=5) != dk.split_writers(recs, seed=6)

    def test_too_few(self):
        with pytest.raises(TooFewWriters):
            dk.split_writers(make_records(2, 2, 1))

    @given(st.integers(3, 80), st.integers(0, 1000))
    def test_partition(self, n, seed):
        s = dk.split_writers(make_records(n, 1, 0), seed=seed)
        sets = [set(s.train), set(s.valid), set(s.test)]
        assert sum(map(len, sets)) == n and len(set().union(*sets)) == n
        assert all(sets)
        assert abs(len(s.train) - n * 2 / 3) <= 1


class TestPairs:
    def test_all_ordered_genuine_pairs(self):
        recs = make_records(2, 3, 3)
        pairs = dk.generate_pairs(recs, None, 6, 6, 0.0, seed=1)
        for w in ("SYNTH:01", "SYNTH:02"):
            g = sorted(r.path for r in recs if r.writer == w and r.genuine)
            got = sorted(p.keys for p in pairs if p.label == 0 and p.a.writer == w)
            assert got == sorted(permutations(g, 2))

    def test_forged_split_rule(self):
        recs = make_records(4, 5, 5)
        pairs = dk.generate_pairs(recs, None, 10, 10, 0.2, seed=0)
        for w in {r.writer for r in recs}:
            ones = [p for p in pairs if p.label == 1 and p.a.writer == w]
            assert sum(p.b.writer == w for p in ones) == 8
            assert sum(p.b.writer != w for p in ones) == 2

    def test_label_rules_and_balance(self):
        recs = make_records(5, 4, 3)
        pairs = dk.generate_pairs(recs, None, 7, 9, 0.3, seed=2)
        assert all(p.label_is_consistent() for p in pairs)
        n1 = sum(p.label for p in pairs)
        assert abs(len(pairs) - 2 * n1) <= 1

    def test_deterministic_and_seeded(self):
        recs = make_records(3, 4, 4)
        assert dk.generate_pairs(recs, seed=3) == dk.generate_pairs(recs, seed=3)
        assert dk.generate_pairs(recs, seed=3) != dk.generate_pairs(recs, seed=4)

    def test_without_replacement_first(self):
        recs = make_records(1, 4, 1)
        pairs = dk.generate_pairs(recs, None, 12, 12, 0.2, seed=0)
        zeros = [p.keys for p in pairs if p.label == 0]
        assert len(set(zeros)) == 12  # the whole 4*3 pool, no repeats

    def test_reversed_pairs_coexist(self):
        recs = make_records(1, 2, 1)
        zeros = {p.keys for p in dk.generate_pairs(recs, None, 2, 2, 0.0, seed=0) if p.label == 0}
        a, b = sorted(r.path for r in recs if r.genuine)
        assert zeros == {(a, b), (b, a)}

    def test_dedup_caps_quota(self):
        recs = make_records(1, 3, 1)
        pairs = dk.generate_pairs(recs, None, 20, 20, 0.0, seed=0, dedup=True)
        assert len({p.keys for p in pairs}) == len(pairs)

    def test_insufficient(self):
        with pytest.raises(InsufficientSignatures):
            dk.generate_pairs(make_records(2, 1, 2), seed=0)
        with pytest.raises(InsufficientSignatures):
            dk.generate_pairs(make_records(2, 3, 0), None, 5, 5, 0.2, seed=0)


class TestTriplets:
    def test_minimal(self):
        recs = make_records(1, 2, 1)
        (t,) = dk.generate_triplets(recs, None, 1, 0.0, seed=0)
        assert {t.anchor.path, t.positive.path} == {r.path for r in recs if r.genuine}
        assert t.negative.kind == "forged"

    def test_all_cross(self):
        trips = dk.generate_triplets(make_records(3, 3, 2), None, 10, 1.0, seed=0)
        assert all(t.negative.writer != t.anchor.writer and t.negative.genuine for t in trips)

    def test_counts(self):
        trips = dk.generate_triplets(make_records(3, 6, 6), None, 100, 0.2, seed=0)
        for w in ("SYNTH:01", "SYNTH:02", "SYNTH:03"):
            mine = [t for t in trips if t.anchor.writer == w]
            assert len(mine) == 100
            assert sum(t.negative.writer == w for t in mine) == 80
            assert sum(t.negative.writer != w for t in mine) == 20
        assert all(t.is_consistent() for t in trips)


class TestManifest:
    def _manifest(self, seed=0):
        recs = make_records(8, 4, 4)
        split = dk.split_writers(recs, seed=seed)
        return dk.build_manifest(recs, split, 6, 6, 5, 0.2, seed=seed)

    def test_check_and_disjoint(self):
        m = self._manifest()
        m.check()
        ws = [{r.writer for p in m.pairs(s) for r in (p.a, p.b)} for s in dk.SPLITS]
        assert not (ws[0] & ws[1]) and not (ws[0] & ws[2]) and not (ws[1] & ws[2])

    def test_check_detects_leak(self):
        m = self._manifest()
        m.valid.append(m.train[0])
        with pytest.raises(ValueError):
            m.check()

    def test_csv_roundtrip(self, tmp_path):
        m = self._manifest()
        m.save(tmp_path / "man")
        header = (tmp_path / "man" / "train_pairs.csv").read_text().splitlines()[0]
        assert header.startswith("path_a,path_b,label")
        back = dk.SplitManifest.load(tmp_path / "man")
        assert back.train == m.train and back.test_triplets == m.test_triplets
        assert back.writers == m.writers

    def test_csv_relative_paths(self, tmp_path):
        m = self._manifest()
        m.save(tmp_path / "man")
        rows = (tmp_path / "man" / "train_pairs.csv").read_text().splitlines()[1:]
        assert all(not r.startswith("/") for r in rows)

    def test_compose(self):
        parts = {"CEDAR": self._manifest(0), "ICDAR": self._manifest(1), "GPDS": self._manifest(2)}
        ci = dk.compose_groups(parts, "CI")
        assert len(ci.train) == len(parts["CEDAR"].train) + len(parts["ICDAR"].train)
        cig = dk.compose_groups(parts, "CIG")
        assert len(cig.train) == sum(len(p.train) for p in parts.values())
        assert len(cig.test) == sum(len(p.test) for p in parts.values())
        with pytest.raises(MissingDataset):
            dk.compose_groups({"CEDAR": parts["CEDAR"]}, "CG")

    def test_load_missing(self, tmp_path):
        with pytest.raises(MissingDataset):
            dk.SplitManifest.load(tmp_path / "nope")


class TestDownsample:
    def test_cap(self):
        recs = make_records(1, 12, 12)
        pairs = dk.generate_pairs(recs, None, 60, 60, 0.0, seed=0)
        assert len(pairs) == 120
        out = dk.downsample_writers(pairs, 81, seed=0)
        assert len(out) == 81
        assert abs(sum(p.label for p in out) * 2 - 81) <= 1

    def test_unchanged_below_target(self):
        pairs = dk.generate_pairs(make_records(2, 3, 2), None, 4, 4, 0.0, seed=0)
        assert dk.downsample_writers(pairs, 100) == pairs

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 30), st.integers(0, 100))
    def test_per_writer_bound(self, target, seed):
        pairs = dk.generate_pairs(make_records(3, 5, 4), None, 12, 12, 0.25, seed=seed)
        out = dk.downsample_writers(pairs, target, seed=seed)
        counts = Counter(p.a.writer for p in out)
        assert all(c <= target for c in counts.values())
        assert dk.downsample_writers(pairs, target, seed=seed) == out


class TestSynth:
    def test_deterministic(self, tmp_path):
        dk.synth_generate(tmp_path / "a", 2, 2, 1, canvas=128, seed=4)
        dk.synth_generate(tmp_path / "b", 2, 2, 1, canvas=128, seed=4)
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.png"))
        assert len(files) == 6
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_intra_writer_closer_than_inter(self, tmp_path):
        recs = dk.synth_generate(tmp_path, 10, 3, 1, canvas=128, seed=0)
        imgs = {r.path: imgcore.read_gray(r.path).astype(float) for r in recs if r.genuine}
        by_writer = {}
        for r in recs:
            if r.genuine:
                by_writer.setdefault(r.writer, []).append(imgs[r.path])
        intra, inter = [], []
        ws = sorted(by_writer)
        for i, w in enumerate(ws):
            g = by_writer[w]
            intra += [np.abs(g[a] - g[b]).mean() for a in range(3) for b in range(a + 1, 3)]
            for w2 in ws[i + 1 :]:
                inter += [np.abs(x - y).mean() for x in g for y in by_writer[w2]]
        assert np.mean(intra) < np.mean(inter)

    def test_every_image_preprocesses(self, tmp_path):
        recs = dk.synth_generate(tmp_path, 3, 2, 2, canvas=256, seed=9)
        for r in recs:
            gray, mask = imgcore.preprocess_signature(imgcore.read_gray(r.path))
            assert mask.any() and gray.shape == (512, 512)
