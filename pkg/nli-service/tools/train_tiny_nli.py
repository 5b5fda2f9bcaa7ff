"""Train the tiny NLI cross-encoder shipped with the service.

The model learns three-way NLI on a synthetic corpus built from sentence
templates where the class signal is structural: hypotheses that copy or
subset the premise entail it, hypotheses that flip the premise's negation
contradict it, and hypotheses that introduce new content are neutral. That
is enough signal for a 70k-parameter encoder to serve as a deterministic
local checker backend.

Run from the nli-service directory after an editable install:

    python3 tools/train_tiny_nli.py

Writes src/nli_service/weights/tiny-nli-v1.npz and records the identity-pair
goldens at src/nli_service/goldens/identity_pairs.json from the final model.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

from nli_service.model import ModelDimensions, NliScorer, TinyCrossEncoder, save_weights
from nli_service.tokenizer import PAD_ID, encode_pair

LABELS = ("entailment", "neutral", "contradiction")

SUBJECTS = [
    "cat", "dog", "doctor", "farmer", "pilot", "teacher", "student", "nurse",
    "judge", "lawyer", "clerk", "engineer", "singer", "author", "painter",
    "driver", "baker", "captain", "soldier", "sailor", "child", "woman",
    "man", "king", "queen", "mayor", "chef", "waiter", "guard", "monk",
]
ADJECTIVES = [
    "red", "tall", "old", "small", "young", "quiet", "busy", "brave",
    "tired", "happy", "clever", "strange",
]
VERBS = [
    ("eats", "eat"), ("feeds", "feed"), ("reads", "read"), ("writes", "write"),
    ("visits", "visit"), ("repairs", "repair"), ("paints", "paint"),
    ("drives", "drive"), ("bakes", "bake"), ("guards", "guard"),
    ("opens", "open"), ("closes", "close"), ("carries", "carry"),
    ("builds", "build"), ("breaks", "break"), ("cleans", "clean"),
    ("watches", "watch"), ("teaches", "teach"), ("helps", "help"),
    ("follows", "follow"), ("finds", "find"), ("loses", "lose"),
    ("sells", "sell"), ("buys", "buy"),
]
OBJECTS = [
    "fish", "horse", "letter", "essay", "museum", "bridge", "wall", "truck",
    "bread", "gate", "window", "door", "box", "house", "road", "floor",
    "show", "class", "garden", "piano", "map", "boat", "field", "tower",
    "book", "cake", "fence", "lamp", "mirror", "carpet",
]
PLACES = [
    "in the park", "near the river", "at the market", "on the hill",
    "in the village", "at the station", "in the morning", "every day",
]

WORD_POOL = sorted(
    set(SUBJECTS) | set(ADJECTIVES) | set(OBJECTS)
    | {form for pair in VERBS for form in pair}
    | {word for place in PLACES for word in place.split()}
    | {"1889", "1990", "2005", "seven", "three", "paris", "london",
       "serves", "opened", "chases", "files", "ball", "record", "crêpes",
       "café", "not", "never", "does", "and", "the"}
)


def random_phrase(rng, low=2, high=12) -> str:
    length = int(rng.integers(low, high + 1))
    picks = rng.integers(0, len(WORD_POOL), size=length)
    return " ".join(WORD_POOL[int(i)] for i in picks)


def with_negator_inserted(phrase: str, rng) -> str:
    """Copy of the phrase with one negation word inserted at a random slot."""
    tokens = phrase.split()
    negator = ["not", "never", "does not"][int(rng.integers(3))]
    slot = int(rng.integers(0, len(tokens) + 1))
    return " ".join(tokens[:slot] + negator.split() + tokens[slot:])

IDENTITY_GOLDEN_SENTENCES = [
    "the red cat eats the fish",
    "the doctor visits the museum",
    "the farmer does not feed the horse",
    "the old teacher reads the letter and the student writes the essay",
    "the museum opened in 1889",
    "the café serves crêpes",
    "the small dog chases the ball in the park",
    "the engineer repairs the bridge near the river",
    "the queen never opens the gate",
    "the busy clerk files the record at the station every day",
]


def make_clause(rng) -> dict:
    place = None
    roll = rng.random()
    if roll < 0.4:
        place = PLACES[rng.integers(len(PLACES))]
        if roll < 0.1:
            extra = PLACES[rng.integers(len(PLACES))]
            if not extra.startswith(place.split()[0]):
                place = f"{place} {extra}"
    return {
        "adj": ADJECTIVES[rng.integers(len(ADJECTIVES))] if rng.random() < 0.5 else None,
        "subject": SUBJECTS[rng.integers(len(SUBJECTS))],
        "verb": VERBS[rng.integers(len(VERBS))],
        "object": OBJECTS[rng.integers(len(OBJECTS))],
        "place": place,
        "negated": False,
    }


def render(clause: dict, drop_adj=False, drop_place=False) -> str:
    adj = "" if drop_adj or clause["adj"] is None else clause["adj"] + " "
    third_person, base = clause["verb"]
    if clause["negated"]:
        verb = f"does not {base}" if clause.get("negator", "does") == "does" \
            else f"never {third_person}"
    else:
        verb = third_person
    place = "" if drop_place or clause["place"] is None else " " + clause["place"]
    return f"the {adj}{clause['subject']} {verb} the {clause['object']}{place}"


def flipped(clause: dict, rng) -> dict:
    out = dict(clause)
    out["negated"] = not clause["negated"]
    out["negator"] = "does" if rng.random() < 0.6 else "never"
    return out


def make_pair(rng, label: str) -> tuple[str, str]:
    clause = make_clause(rng)
    if rng.random() < 0.25:
        clause["negated"] = True
        clause["negator"] = "does" if rng.random() < 0.6 else "never"
    if label == "entailment":
        roll = rng.random()
        if roll < 0.25:
            return render(clause), render(clause)
        if roll < 0.45:
            phrase = random_phrase(rng)
            return phrase, phrase
        if roll < 0.75:
            premise = render(clause)
            return premise, render(clause, drop_adj=True,
                                    drop_place=rng.random() < 0.7)
        other = make_clause(rng)
        premise = f"{render(clause)} and {render(other)}"
        kept = clause if rng.random() < 0.5 else other
        return premise, render(kept)
    if label == "contradiction":
        roll = rng.random()
        if roll < 0.5:
            return render(clause), render(flipped(clause, rng))
        if roll < 0.75:
            phrase = random_phrase(rng)
            negated = with_negator_inserted(phrase, rng)
            if rng.random() < 0.5:
                return phrase, negated
            return negated, phrase
        other = make_clause(rng)
        premise = f"{render(clause)} and {render(other)}"
        target = clause if rng.random() < 0.5 else other
        return premise, render(flipped(target, rng))
    roll = rng.random()
    if roll < 0.3:
        unrelated = make_clause(rng)
        while unrelated["subject"] == clause["subject"]:
            unrelated = make_clause(rng)
        return render(clause), render(unrelated)
    if roll < 0.55:
        variant = make_clause(rng)
        variant["subject"] = clause["subject"]
        while variant["verb"] == clause["verb"] and variant["object"] == clause["object"]:
            variant = make_clause(rng)
        return render(clause), render(variant)
    if roll < 0.8:
        bare = dict(clause, adj=None, place=None)
        richer = dict(clause)
        if richer["adj"] is None:
            richer["adj"] = ADJECTIVES[rng.integers(len(ADJECTIVES))]
        if richer["place"] is None:
            richer["place"] = PLACES[rng.integers(len(PLACES))]
        return render(bare), render(richer)
    first = random_phrase(rng)
    second = random_phrase(rng)
    while second == first:
        second = random_phrase(rng)
    return first, second


def build_split(rng, per_class: int, vocab_size: int):
    encoded = []
    for label_index, label in enumerate(LABELS):
        for _ in range(per_class):
            premise, hypothesis = make_pair(rng, label)
            ids, segments = encode_pair(premise, hypothesis, vocab_size)
            encoded.append((ids, segments, label_index))
    order = rng.permutation(len(encoded))
    return [encoded[i] for i in order]


def batches(split, batch_size: int):
    for start in range(0, len(split), batch_size):
        chunk = split[start:start + batch_size]
        width = max(len(ids) for ids, _, _ in chunk)
        ids = torch.full((len(chunk), width), PAD_ID, dtype=torch.long)
        segments = torch.zeros((len(chunk), width), dtype=torch.long)
        mask = torch.zeros((len(chunk), width), dtype=torch.bool)
        labels = torch.zeros(len(chunk), dtype=torch.long)
        for row, (token_ids, segment_ids, label_index) in enumerate(chunk):
            ids[row, : len(token_ids)] = torch.tensor(token_ids)
            segments[row, : len(segment_ids)] = torch.tensor(segment_ids)
            mask[row, : len(token_ids)] = True
            labels[row] = label_index
        yield ids, segments, mask, labels


def accuracy(model, split, batch_size: int) -> float:
    correct = 0
    with torch.no_grad():
        for ids, segments, mask, labels in batches(split, batch_size):
            logits, _ = model(ids, segments, mask)
            correct += int((logits.argmax(dim=1) == labels).sum())
    return correct / len(split)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    package_dir = Path(__file__).resolve().parents[1] / "src" / "nli_service"
    parser.add_argument("--out", default=str(package_dir / "weights" / "tiny-nli-v1.npz"))
    parser.add_argument("--goldens-out",
                        default=str(package_dir / "goldens" / "identity_pairs.json"))
    parser.add_argument("--per-class", type=int, default=8000)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--batch-size", type=int, default=128)
    parser.add_argument("--learning-rate", type=float, default=1e-3)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    torch.manual_seed(args.seed)
    rng = np.random.default_rng(args.seed)
    dims = ModelDimensions()
    train_split = build_split(rng, args.per_class, dims.vocab_size)
    dev_split = build_split(rng, args.per_class // 10, dims.vocab_size)

    model = TinyCrossEncoder(dims)
    optimizer = torch.optim.Adam(model.parameters(), lr=args.learning_rate)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=args.epochs)
    loss_fn = nn.CrossEntropyLoss()
    for epoch in range(args.epochs):
        model.train()
        total = 0.0
        for ids, segments, mask, labels in batches(train_split, args.batch_size):
            optimizer.zero_grad()
            logits, _ = model(ids, segments, mask)
            loss = loss_fn(logits, labels)
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(labels)
        scheduler.step()
        model.eval()
        dev_acc = accuracy(model, dev_split, args.batch_size)
        print(f"epoch {epoch + 1}: train loss {total / len(train_split):.4f} "
              f"dev accuracy {dev_acc:.4f}")

    model.eval()
    save_weights(model, args.out)
    print(f"saved weights to {args.out}")

    scorer = NliScorer(args.out)
    goldens = []
    for sentence in IDENTITY_GOLDEN_SENTENCES:
        label, scores = scorer.classify(sentence, sentence)
        entailment = scores[0]
        status = "ok" if label == "entailment" and entailment > max(scores[1:]) \
            else "NOT ENTAILMENT"
        print(f"  identity [{status}] e={scores[0]:.4f} n={scores[1]:.4f} "
              f"c={scores[2]:.4f}  {sentence!r}")
        goldens.append({
            "premise": sentence,
            "hypothesis": sentence,
            "label": label,
            "scores": list(scores),
        })
    if any(g["label"] != "entailment" for g in goldens):
        print("refusing to record goldens: an identity pair is not entailment")
        return 1
    goldens_path = Path(args.goldens_out)
    goldens_path.parent.mkdir(parents=True, exist_ok=True)
    goldens_path.write_text(
        json.dumps({"pairs": goldens}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    print(f"recorded {len(goldens)} identity goldens to {goldens_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
