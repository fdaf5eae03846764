"""Corpus-filter walkthrough: plant one violator per rule, filter, rebalance."""

import random
from collections import Counter

from tabflow.backend import ScriptedBackend
from tabflow.corpus_filter import (
    CATEGORIES,
    CorpusSample,
    balance_categories,
    filter_dataset,
    weighted_resample,
)

TRACE = "compare quarterly totals against the reported aggregates and verify " * 3
ANSWER = "revenue grew by twelve percent year over year"


def build_corpus(n=600, seed=0):
    rng = random.Random(seed)
    # skewed category mix, mirroring a filtered real-world corpus
    shares = [0.24, 0.25, 0.31, 0.16, 0.035, 0.005]
    samples = []
    for i in range(n):
        category = rng.choices(CATEGORIES, weights=shares)[0]
        samples.append(
            CorpusSample(
                id=f"s{i}", question="describe the table", answer=ANSWER,
                reasoning=TRACE, category=category,
            )
        )
    # one violator per rule
    samples[0] = CorpusSample(id="short", question="q", answer="42")
    samples[1] = CorpusSample(
        id="repeat", question="q", answer=ANSWER,
        reasoning=" ".join(["a b c d e f g h i j"] * 25),
    )
    samples[2] = CorpusSample(
        id="dense", question="q", answer=ANSWER,
        reasoning="the a an and or but so yet of in",
    )
    samples[3] = CorpusSample(id="lowscore", question="q", answer=ANSWER, reasoning=TRACE)
    return samples


def main() -> None:
    samples = build_corpus()
    judge_replies = ["3.0" if s.id == "lowscore" else "9.2" for s in samples]
    retained, report = filter_dataset(samples, judge=ScriptedBackend(judge_replies))
    print("filter counts:", report.counts)
    print("removed ids:", [f.sample_id for f in report.flags if not f.retained])

    target = {c: 1 / len(CATEGORIES) for c in CATEGORIES}
    weights = balance_categories(retained, target)
    print("balancing weights:")
    for category, weight in weights.items():
        print(f"  {category}: {weight:.3f}")
    resampled = weighted_resample(retained, weights, k=30_000, seed=1)
    proportions = Counter(s.category for s in resampled)
    print("post-resample proportions:")
    for category in CATEGORIES:
        print(f"  {category}: {proportions[category] / 30_000:.4f}")


if __name__ == "__main__":
    main()
