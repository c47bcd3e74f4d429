#!/usr/bin/env python3
"""Regenerate the bundled offline fixtures under data/.

Outputs:
  data/sample_reviews.jsonl  1,000 synthetic reviews in the Amazon 5-core layout
  data/toy_glove.50d.txt     50-token, 50-dimensional embedding file
  data/cf_hand.jsonl         3-user collaborative-filtering fixture

Deterministic: rerunning produces byte-identical files.
"""
import json
import math
import random
import string
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data"
DIM = 50

POSITIVE = ["great", "love", "excellent", "amazing", "wonderful",
            "fun", "best", "enjoyed", "brilliant", "good"]
NEGATIVE = ["bad", "boring", "awful", "terrible", "worst",
            "waste", "dull", "poor", "hated", "disappointing"]
NEUTRAL = ["the", "a", "movie", "film", "this", "was", "is", "and", "it", "to",
           "of", "story", "acting", "plot", "watch", "season", "episode", "show",
           "character", "series", "i", "really", "very", "but", "time",
           "ending", "cast", "scenes", "director", "music"]
# Words that appear in reviews but are absent from the embedding file.
OOV = ["netflix", "dvd", "prime", "2", "hd"]


def gen_embeddings(rng):
    vocab = POSITIVE + NEGATIVE + NEUTRAL
    assert len(vocab) == 50
    lines = []
    for word in vocab:
        polarity = 0.8 if word in POSITIVE else (-0.8 if word in NEGATIVE else 0.0)
        vec = [polarity + rng.gauss(0.0, 0.1)]
        vec += [rng.gauss(0.0, 0.3) for _ in range(DIM - 1)]
        lines.append(word + " " + " ".join(f"{v:.5f}" for v in vec))
    (OUT / "toy_glove.50d.txt").write_text("\n".join(lines) + "\n")


def rand_id(rng, prefix, n):
    alphabet = string.ascii_uppercase + string.digits
    return prefix + "".join(rng.choice(alphabet) for _ in range(n))


def review_text(rng, rating):
    p_pos = (rating - 1.0) / 4.0
    words = []
    for _ in range(rng.randint(8, 25)):
        u = rng.random()
        if u < 0.35:
            bank = POSITIVE if rng.random() < p_pos else NEGATIVE
            words.append(rng.choice(bank))
        elif u < 0.38:
            words.append(rng.choice(OOV))
        else:
            words.append(rng.choice(NEUTRAL))
    text = " ".join(words)
    return text[0].upper() + text[1:] + rng.choice([".", "!", "!!", "..."])


def gen_reviews(rng):
    n_users, n_items, per_user = 100, 60, 10
    users = sorted({rand_id(rng, "A", 13) for _ in range(n_users)})
    items = sorted({rand_id(rng, "B00", 7) for _ in range(n_items)})
    assert len(users) == n_users and len(items) == n_items
    user_bias = {u: rng.gauss(0.0, 0.7) for u in users}
    item_bias = {i: rng.gauss(0.0, 0.7) for i in items}

    pairs = []
    for u in users:
        for i in rng.sample(items, per_user):
            pairs.append((u, i))
    rng.shuffle(pairs)
    seen_items = {i for _, i in pairs}
    assert seen_items == set(items)

    lines = []
    for u, i in pairs:
        raw = 3.9 + user_bias[u] + item_bias[i] + rng.gauss(0.0, 0.5)
        rating = float(min(5, max(1, round(raw))))
        t = 1_300_000_000 + rng.randint(0, 100_000_000)
        rec = {
            "reviewerID": u,
            "asin": i,
            "reviewerName": "user " + u[-4:].lower(),
            "helpful": [rng.randint(0, 3), rng.randint(3, 6)],
            "reviewText": review_text(rng, rating),
            "overall": rating,
            "summary": "Review",
            "unixReviewTime": t,
            "reviewTime": "01 1, 2014",
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    (OUT / "sample_reviews.jsonl").write_text("\n".join(lines) + "\n")


def gen_cf_hand():
    rows = [
        ("u1", "m1", 4.0), ("u1", "m3", 2.0),
        ("u2", "m1", 3.0), ("u2", "m2", 4.0), ("u2", "m3", 5.0),
        ("u3", "m1", 4.0), ("u3", "m2", 3.0), ("u3", "m3", 1.0),
    ]
    lines = [json.dumps({"reviewerID": u, "asin": i, "reviewText": "ok", "overall": r},
                        separators=(",", ":")) for u, i, r in rows]
    (OUT / "cf_hand.jsonl").write_text("\n".join(lines) + "\n")


def main():
    OUT.mkdir(exist_ok=True)
    rng = random.Random(20221)
    gen_embeddings(rng)
    gen_reviews(rng)
    gen_cf_hand()


if __name__ == "__main__":
    main()
