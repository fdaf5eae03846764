import random
import time
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabflow.backend import ScriptedBackend
from tabflow.corpus_filter import (
    ALL_SUBTASKS,
    CATEGORY_SUBTASKS,
    CorpusSample,
    EmptyCategory,
    JudgeUnparseable,
    KEYWORD_RULES,
    QaTier,
    SEMANTIC_TASKS,
    balance_categories,
    classify_question,
    count_duplicate_ngrams,
    dump_corpus_jsonl,
    f_density,
    f_repeat,
    f_score,
    f_short,
    filter_dataset,
    load_corpus_jsonl,
    parse_judge_score,
    qa_quality_pipeline,
    tokenize,
    weighted_resample,
)

LONG_ANSWER = "the third quarter revenue grew by twelve percent year over year"
TRACE = "inspect table sums compute quarterly revenue deltas compare against totals " * 4


def sample(answer=LONG_ANSWER, reasoning=TRACE, **kwargs):
    defaults = dict(id="s1", question="What changed?", answer=answer, reasoning=reasoning)
    defaults.update(kwargs)
    return CorpusSample(**defaults)


def brute_force_max_ngram(text, n):
    tokens = tokenize(text)
    if len(tokens) < n:
        return 0
    counts = Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return max(counts.values())


class TestTaxonomy:
    def test_six_categories_thirty_four_subtasks(self):
        assert len(CATEGORY_SUBTASKS) == 6
        assert len(ALL_SUBTASKS) == 34

    def test_keyword_plus_semantic_partition(self):
        keyword_labels = {label for label, _ in KEYWORD_RULES}
        assert len(keyword_labels) == 21
        assert len(SEMANTIC_TASKS) == 13
        assert keyword_labels | set(SEMANTIC_TASKS) == set(ALL_SUBTASKS)


class TestFShort:
    def test_short_answer_without_trace_flagged(self):
        assert f_short(sample(answer="42", reasoning=None)) == 1

    def test_short_answer_with_trace_kept(self):
        assert f_short(sample(answer="42", reasoning="worked it out carefully")) == 0

    def test_long_answer_kept(self):
        # 6 tokens and >= 25 chars: both thresholds satisfied.
        assert f_short(sample(answer="the total was forty two units", reasoning=None)) == 0

    def test_many_tokens_but_few_chars_flagged(self):
        assert f_short(sample(answer="a b c d e f", reasoning=None)) == 1

    def test_boundaries_are_strict(self):
        # exactly 5 tokens and exactly 25 chars is not short
        answer = "aaaa bbbb cccc dddd eeee!"
        assert len(answer) == 25 and len(tokenize(answer)) == 5
        assert f_short(sample(answer=answer, reasoning=None)) == 0


class TestDuplicateNgrams:
    def test_short_text_zero(self):
        assert count_duplicate_ngrams("a b c", 10) == 0

    def test_repeated_phrase(self):
        text = " ".join(["one two three four five six seven eight nine ten"] * 21)
        assert count_duplicate_ngrams(text, 10) == 21

    def test_all_distinct_tokens(self):
        assert count_duplicate_ngrams(" ".join(str(i) for i in range(40)), 10) == 1

    def test_equals_brute_force_on_random_streams(self):
        rng = random.Random(123)
        for _ in range(300):
            length = rng.randrange(0, 300)
            vocab_size = rng.choice([2, 3, 5, 11, 40])
            text = " ".join(str(rng.randrange(vocab_size)) for _ in range(length))
            n = rng.choice([1, 2, 3, 5, 10])
            assert count_duplicate_ngrams(text, n) == brute_force_max_ngram(text, n)

    @given(
        st.lists(st.integers(min_value=0, max_value=4), max_size=120),
        st.integers(min_value=1, max_value=12),
    )
    @settings(max_examples=200)
    def test_equals_brute_force_property(self, token_ids, n):
        text = " ".join(f"w{t}" for t in token_ids)
        assert count_duplicate_ngrams(text, n) == brute_force_max_ngram(text, n)


class TestFRepeat:
    def test_over_threshold_flagged(self):
        text = " ".join(["a b c d e f g h i j"] * 21)
        assert count_duplicate_ngrams(text, 10) == 21
        assert f_repeat(sample(reasoning=text)) == 1

    def test_at_threshold_kept(self):
        text = " ".join(["a b c d e f g h i j"] * 20)
        assert count_duplicate_ngrams(text, 10) == 20
        assert f_repeat(sample(reasoning=text)) == 0

    def test_no_reasoning_vacuous(self):
        assert f_repeat(sample(reasoning=None)) == 0


class TestFDensity:
    def test_six_of_ten_low_info_flagged(self):
        text = "the a an and or but revenue grew twelve percent"
        s = sample(reasoning=text)
        assert f_density(s) == 1

    def test_exactly_half_kept(self):
        text = "the a an and or revenue grew twelve percent sharply"
        assert f_density(sample(reasoning=text)) == 0

    def test_zero_low_info_kept(self):
        assert f_density(sample(reasoning="revenue grew twelve percent sharply")) == 0

    def test_empty_reasoning_kept(self):
        assert f_density(sample(reasoning=None)) == 0


class TestFScore:
    def test_below_threshold_flagged(self):
        flag, score = f_score(sample(), ScriptedBackend(["8.4"]))
        assert (flag, score) == (1, 8.4)

    def test_at_threshold_kept(self):
        flag, score = f_score(sample(), ScriptedBackend(["8.5"]))
        assert (flag, score) == (0, 8.5)

    def test_prose_score_parsed(self):
        flag, score = f_score(sample(), ScriptedBackend(["Looks solid. Score: 9/10"]))
        assert (flag, score) == (0, 9.0)

    def test_unparseable_after_retries_raises(self):
        judge = ScriptedBackend(["no clue", "still nothing", "shrug"])
        with pytest.raises(JudgeUnparseable):
            f_score(sample(), judge)
        assert len(judge.calls) == 3

    def test_retry_recovers(self):
        judge = ScriptedBackend(["hmm", "Score: 9"])
        assert f_score(sample(), judge) == (0, 9.0)


class TestParseJudgeScore:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("8.5", 8.5),
            ("Score: 9/10", 9.0),
            ("score=7", 7.0),
            ("I give it a 10", 10.0),
            ("garbage", None),
            ("Score: 15", None),
        ],
    )
    def test_cases(self, text, expected):
        assert parse_judge_score(text) == expected


class TestFilterDataset:
    def test_all_clean_retained(self):
        samples = [sample(id=str(i)) for i in range(10)]
        judge = ScriptedBackend(["9.0"] * 10)
        retained, report = filter_dataset(samples, judge=judge)
        assert len(retained) == 10
        assert report.counts["retained"] == 10

    def test_one_violator_per_rule_removed(self):
        repeat_text = " ".join(["a b c d e f g h i j"] * 21)
        dense_text = "the a an and or but so yet of in"
        samples = [
            sample(id="clean"),
            sample(id="short", answer="42", reasoning=None),
            sample(id="repeat", reasoning=repeat_text),
            sample(id="dense", reasoning=dense_text),
            sample(id="lowscore"),
        ]
        judge = ScriptedBackend(["9.0", "9.0", "9.0", "9.0", "3.0"][: len(samples)])
        retained, report = filter_dataset(samples, judge=judge)
        assert {s.id for s in retained} == {"clean"}
        counts = report.counts
        assert counts["f_short"] == 1
        assert counts["f_repeat"] == 1
        assert counts["f_density"] == 1
        assert counts["f_score"] == 1

    def test_empty_input(self):
        retained, report = filter_dataset([])
        assert retained == [] and report.counts["total"] == 0

    def test_unparseable_judge_goes_to_manual_queue(self):
        judge = ScriptedBackend(["?", "?", "?"])
        retained, report = filter_dataset([sample(id="odd")], judge=judge)
        assert retained == []
        assert report.manual_queue == ["odd"]

    def test_runtime_under_one_second_on_1k(self):
        samples = [sample(id=str(i)) for i in range(1000)]
        judge = ScriptedBackend(["9.0"] * 1000)
        start = time.perf_counter()
        filter_dataset(samples, judge=judge)
        assert time.perf_counter() - start < 1.0


class TestBalancing:
    DIST = {
        "Natural Language Understanding": 2365,
        "Table Understanding": 2484,
        "Table Basic Operation": 3116,
        "Table Computational Operation": 1577,
        "Data Analysis": 399,
        "Advanced Data Analysis": 59,
    }

    def _samples(self):
        out = []
        for category, n in self.DIST.items():
            for i in range(n):
                out.append(sample(id=f"{category}-{i}", category=category))
        return out

    def test_weight_formula(self):
        samples = self._samples()
        target = {c: 1 / 6 for c in self.DIST}
        weights = balance_categories(samples, target)
        assert weights["Data Analysis"] == pytest.approx((1 / 6) / 0.0399, rel=1e-3)
        assert weights["Data Analysis"] == pytest.approx(4.177, abs=0.001)

    def test_identity_when_already_balanced(self):
        samples = [sample(id=str(i), category="A") for i in range(5)]
        samples += [sample(id=str(i + 5), category="B") for i in range(5)]
        weights = balance_categories(samples, {"A": 0.5, "B": 0.5})
        assert weights == {"A": pytest.approx(1.0), "B": pytest.approx(1.0)}

    def test_empty_category_raises(self):
        samples = [sample(id="1", category="A")]
        with pytest.raises(EmptyCategory):
            balance_categories(samples, {"A": 0.5, "B": 0.5})

    def test_resample_hits_uniform_within_one_percent(self):
        samples = self._samples()
        target = {c: 1 / 6 for c in self.DIST}
        weights = balance_categories(samples, target)
        resampled = weighted_resample(samples, weights, k=60_000, seed=13)
        counts = Counter(s.category for s in resampled)
        for category in self.DIST:
            assert abs(counts[category] / 60_000 - 1 / 6) < 0.01


class TestClassifyQuestion:
    def test_summary(self):
        assert classify_question(sample(question="Summarize this table")) == "Table Summary"

    def test_ranking(self):
        q = sample(question="Sort rows by revenue descending")
        assert classify_question(q) == "Table Ranking"

    def test_fallback_unclassified(self):
        q = sample(question="Do a complicated multi hop thing")
        assert classify_question(q) == "unclassified"

    def test_semantic_backend_consulted(self):
        q = sample(question="Do a complicated multi hop thing")
        backend = ScriptedBackend(["Multi-step Operations"])
        assert classify_question(q, semantic=backend) == "Multi-step Operations"

    def test_every_keyword_rule_hits_itself(self):
        probes = {
            "Pivot Transformation": "Pivot the table to wide format",
            "Table Visualization": "Draw a bar chart of sales",
            "Table Correlation Analysis": "Is there a correlation between age and income?",
            "Table Hypothesis Testing": "Run a t-test on the means",
            "Table Distribution Testing": "Check the distribution for normality",
            "Table Null Imputation": "Fill the missing values in column b",
            "Table Deletion": "Delete the second row",
            "Table Ranking": "Rank the teams by points",
            "Table Selection": "Which rows have sales above 10?",
            "Table Query": "What is the value of profit for acme?",
            "Table Retrieval": "Retrieve the cell in row 3",
            "Table Fact Checking": "True or false: revenue doubled",
            "Table Summary": "Give an overview of the table",
            "Table Column Naming": "Suggest a column name for the second field",
            "Table Title Naming": "Propose a title for this table",
        }
        for label, question in probes.items():
            assert classify_question(sample(question=question)) == label


class TestQaQualityPipeline:
    def test_perfect_agreement_high(self):
        backends = [ScriptedBackend(["42"]) for _ in range(3)]
        judge = ScriptedBackend(["Score: 10"])
        review = qa_quality_pipeline(sample(answer="42"), backends, judge)
        assert review.tier is QaTier.HIGH

    def test_contradictions_low(self):
        backends = [ScriptedBackend([a]) for a in ("1", "2", "3")]
        judge = ScriptedBackend(["Score: 2"])
        review = qa_quality_pipeline(sample(answer="42"), backends, judge)
        assert review.tier is QaTier.LOW

    def test_image_markup_candidate_excluded(self):
        backends = [
            ScriptedBackend(["42"]),
            ScriptedBackend(["![chart](x.png)"]),
            ScriptedBackend(["42"]),
        ]
        judge = ScriptedBackend(["Score: 10"])
        review = qa_quality_pipeline(sample(answer="42"), backends, judge)
        assert len(review.candidates) == 2

    def test_rule_generated_short_circuits(self):
        s = sample(meta={"rule_generated": True})
        review = qa_quality_pipeline(s, [None, None, None], None)
        assert review.tier is QaTier.HIGH

    def test_backend_failure_degrades_to_low(self):
        backends = [ScriptedBackend([]), ScriptedBackend(["x"]), ScriptedBackend(["x"])]
        review = qa_quality_pipeline(sample(), backends, ScriptedBackend(["10"]))
        assert review.tier is QaTier.LOW and "failure" in review.reason


class TestJsonl:
    def test_round_trip(self, tmp_path):
        samples = [sample(id="a"), sample(id="b", reasoning=None, category="Data Analysis")]
        path = tmp_path / "corpus.jsonl"
        dump_corpus_jsonl(samples, path)
        loaded = load_corpus_jsonl(path)
        assert [s.id for s in loaded] == ["a", "b"]
        assert loaded[1].reasoning is None
        assert loaded[1].category == "Data Analysis"
