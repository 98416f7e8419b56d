"""Accuracy report: per-tag recall, both overall variants, rendering."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_sequence
from lexattr.errors import InputError
from lexattr.evaluation import render_report, token_accuracy
from lexattr.tags import DEFAULT_TAGS, REPORT_ORDER


def seq_pair(doc, idx, words, gold, pred):
    g = make_sequence(doc, idx, words, gold)
    return g, g.with_labels(pred)


class TestTokenAccuracy:
    def test_perfect_prediction_all_ones(self):
        gold, pred = seq_pair("d", 0, ["a", "b", "c"], [1, 4, 7], [1, 4, 7])
        report = token_accuracy([gold], [pred])
        assert report.per_tag["Wittest"] == 1.0
        assert report.per_tag["Homicide"] == 1.0
        assert report.per_tag["NoTag"] == 1.0
        assert report.overall_excl_notag == 1.0
        assert report.overall_incl_notag == 1.0

    def test_homicide_quarter_recall_fixture(self):
        # 4 Homicide gold tokens, exactly 1 predicted as Homicide.
        words = ["w1", "w2", "w3", "w4", "w5"]
        gold, pred = seq_pair("d", 0, words, [4, 4, 4, 4, 7], [4, 7, 7, 1, 7])
        report = token_accuracy([gold], [pred])
        assert report.per_tag["Homicide"] == 0.25
        assert report.counts["Homicide"] == 4
        assert "0.25" in render_report(report)

    def test_zero_gold_tag_is_none_and_renders_na(self):
        gold, pred = seq_pair("d", 0, ["a", "b"], [1, 7], [1, 7])
        report = token_accuracy([gold], [pred])
        assert report.per_tag["Evidence"] is None
        rendered = render_report(report)
        assert "n/a" in rendered

    def test_overall_incl_equals_confusion_trace_ratio(self):
        gold, pred = seq_pair("d", 0, ["a", "b", "c", "e"], [1, 4, 7, 7], [4, 4, 7, 1])
        report = token_accuracy([gold], [pred])
        want = np.trace(report.confusion) / report.confusion.sum()
        assert report.overall_incl_notag == pytest.approx(want)

    def test_overall_excl_is_weighted_mean_of_attribute_tags(self):
        gold, pred = seq_pair("d", 0, ["a", "b", "c", "e", "f"], [1, 1, 4, 7, 7], [1, 7, 4, 7, 7])
        report = token_accuracy([gold], [pred])
        total = correct = 0
        for name in DEFAULT_TAGS.attribute_names:
            count = report.counts[name]
            if count:
                total += count
                correct += report.per_tag[name] * count
        assert report.overall_excl_notag == pytest.approx(correct / total)

    def test_confusion_row_sums_equal_gold_counts(self):
        gold, pred = seq_pair("d", 0, ["a", "b", "c"], [1, 1, 4], [4, 1, 7])
        report = token_accuracy([gold], [pred])
        for i, name in enumerate(DEFAULT_TAGS.names):
            assert report.confusion[i].sum() == report.counts[name]

    def test_misalignment_names_doc_and_sentence(self):
        gold, _ = seq_pair("docA", 3, ["a", "b"], [1, 7], [1, 7])
        other = make_sequence("docB", 3, ["a", "b"], [1, 7])
        with pytest.raises(InputError, match=r"docA.*3"):
            token_accuracy([gold], [other])

    def test_length_mismatch_detected(self):
        gold = make_sequence("d", 0, ["a", "b"], [1, 7])
        pred = make_sequence("d", 0, ["a"], [1])
        with pytest.raises(InputError):
            token_accuracy([gold], [pred])

    def test_json_shape(self):
        gold, pred = seq_pair("d", 0, ["a", "b"], [1, 7], [1, 7])
        payload = json.loads(token_accuracy([gold], [pred]).to_json())
        assert set(payload) == {"per_tag", "overall_excl_notag", "overall_incl_notag", "confusion"}
        assert set(payload["per_tag"]) == set(DEFAULT_TAGS.names)
        assert len(payload["confusion"]) == 8
        assert all(len(row) == 8 for row in payload["confusion"])


class TestRender:
    def test_column_order_and_notag_row(self):
        gold, pred = seq_pair("d", 0, ["a"] * 8, list(range(8)), list(range(8)))
        lines = render_report(token_accuracy([gold], [pred])).splitlines()
        assert lines[0].split() == list(REPORT_ORDER) + ["Overall"]
        assert lines[1].split() == ["1.00"] * 8
        assert lines[2].split() == ["NoTag", "1.00"]

    def test_both_overall_variants_rendered(self):
        # Column holds the attribute-only score; the trailing line holds
        # the all-token score. Only NoTag mistakes tell them apart.
        gold, pred = seq_pair("d", 0, ["a"] * 4, [1, 1, 7, 7], [1, 1, 7, 1])
        report = token_accuracy([gold], [pred])
        lines = render_report(report).splitlines()
        assert lines[1].split()[-1] == "1.00"  # both Wittest tokens correct
        assert lines[3].split() == ["Overall", "including", "NoTag", "0.75"]

    def test_method_label_prefixes_value_row(self):
        gold, pred = seq_pair("d", 0, ["a"] * 8, list(range(8)), list(range(8)))
        lines = render_report(token_accuracy([gold], [pred]), method="crf-sparse").splitlines()
        assert lines[0].split() == ["method"] + list(REPORT_ORDER) + ["Overall"]
        assert lines[1].split() == ["crf-sparse"] + ["1.00"] * 8

    def test_two_decimal_formatting(self):
        words = ["w"] * 3
        gold, pred = seq_pair("d", 0, words, [1, 1, 1], [1, 7, 7])
        rendered = render_report(token_accuracy([gold], [pred]))
        assert "0.33" in rendered


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 40))
def test_reordering_sentences_does_not_change_report(seed, n):
    rng = np.random.default_rng(seed)
    gold, pred = [], []
    for i in range(1 + n // 10):
        length = int(rng.integers(1, 8))
        words = [f"w{j}" for j in range(length)]
        g = rng.integers(0, 8, length).tolist()
        p = rng.integers(0, 8, length).tolist()
        g_seq, p_seq = seq_pair(f"d{i}", 0, words, g, p)
        gold.append(g_seq)
        pred.append(p_seq)
    base = token_accuracy(gold, pred)
    order = rng.permutation(len(gold))
    shuffled = token_accuracy([gold[i] for i in order], [pred[i] for i in order])
    assert base.per_tag == shuffled.per_tag
    assert base.overall_incl_notag == shuffled.overall_incl_notag
    assert (base.confusion == shuffled.confusion).all()
