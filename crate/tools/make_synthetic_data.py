#!/usr/bin/env python3
"""Regenerate the bundled synthetic data under data/.

Everything is templated prose over closed word pools with a fixed RNG seed,
so the output is deterministic and contains no real-world text. Run from the
repository root:

    python3 tools/make_synthetic_data.py
"""

import json
import pathlib
import random

ROOT = pathlib.Path(__file__).resolve().parent.parent
RNG = random.Random(0x1E9F05)

PARTIES = [
    "the lessor", "the lessee", "the contractor", "the supplier",
    "the licensee", "the custodian", "the surveyor", "the registrar",
    "the assignee", "the guarantor", "the trustee", "the broker",
]
VERBS = [
    "shall deliver", "must maintain", "agrees to furnish", "shall not assign",
    "is required to disclose", "shall promptly return", "may inspect",
    "undertakes to preserve", "shall certify", "must reconcile",
    "agrees to indemnify", "shall surrender",
]
OBJECTS = [
    "the premises", "the deliverables", "the records", "the schedules",
    "the inventory", "the fixtures", "the accounts", "the easements",
    "the manifests", "the appendices", "the disclosures", "the warranties",
]
CLAUSES = [
    "within thirty days", "upon written notice", "at its own expense",
    "without undue delay", "in the ordinary course of business",
    "subject to the annexed conditions", "for the duration of the term",
    "notwithstanding any prior waiver", "under seal where required",
    "in duplicate originals", "before the renewal date",
    "absent manifest error",
]
OPENERS = [
    "Whereas", "Provided that", "It is agreed that", "For the avoidance of doubt,",
    "Subject to clause review,", "In witness whereof,", "Further,",
    "Accordingly,",
]


def sentence(rng):
    parts = [rng.choice(PARTIES), rng.choice(VERBS), rng.choice(OBJECTS),
             rng.choice(CLAUSES)]
    if rng.random() < 0.35:
        text = f"{rng.choice(OPENERS)} {parts[0]} {parts[1]} {parts[2]} {parts[3]}."
    else:
        text = f"{parts[0].capitalize()} {parts[1]} {parts[2]} {parts[3]}."
    return text


def paragraph(rng, n_sentences):
    return " ".join(sentence(rng) for _ in range(n_sentences))


def document(rng):
    paras = [paragraph(rng, rng.randint(3, 7)) for _ in range(rng.randint(6, 12))]
    return "\n\n".join(paras) + "\n"


def write_corpus():
    out = ROOT / "data" / "synthetic"
    out.mkdir(parents=True, exist_ok=True)
    total = 0
    for i in range(14):
        text = document(RNG)
        (out / f"doc{i:02}.txt").write_text(text, encoding="utf-8")
        total += len(text)
    # A couple of records arrive as JSONL to exercise that ingestion path.
    with (out / "extra.jsonl").open("w", encoding="utf-8") as f:
        for _ in range(6):
            f.write(json.dumps({"text": paragraph(RNG, RNG.randint(4, 8))}) + "\n")
    print(f"corpus: ~{total // 1024} KiB across 14 txt files + extra.jsonl")


KEYWORD_LABELS = [("maritime", "maritime"), ("aviation", "aviation")]


def keyword_text(rng, keyword):
    lead = sentence(rng)
    marker = f"This filing concerns the {keyword} registry."
    tail = sentence(rng)
    order = rng.random()
    if order < 0.4:
        return f"{marker} {lead}"
    if order < 0.8:
        return f"{lead} {marker}"
    return f"{lead} {marker} {tail}"


def write_keyword2():
    out = ROOT / "data" / "tasks" / "keyword2"
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(0xA11CE)

    def rows(n_per_class):
        rows = []
        for keyword, label in KEYWORD_LABELS:
            for _ in range(n_per_class):
                rows.append({"text": keyword_text(rng, keyword), "label": label})
        rng.shuffle(rows)
        return rows

    for name, n in (("train.jsonl", 100), ("test.jsonl", 25)):
        with (out / name).open("w", encoding="utf-8") as f:
            for row in rows(n):
                f.write(json.dumps(row) + "\n")
    (out / "labels.txt").write_text(
        "".join(label + "\n" for _, label in KEYWORD_LABELS), encoding="utf-8"
    )
    print("keyword2: 200 train / 50 test, 2 labels")


TOPICS = ["arbitration", "easement", "royalty", "salvage", "quarry", "ledger"]


def write_choice5():
    out = ROOT / "data" / "tasks" / "choice5"
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(0xC0FFEE)

    def example():
        topic = rng.choice(TOPICS)
        distractors = rng.sample([t for t in TOPICS if t != topic], 4)
        answer = rng.randrange(5)
        choices = distractors[:answer] + [topic] + distractors[answer:]
        context = f"The disputed subject is the {topic} provision."
        return {
            "context": context,
            "choices": [f"the matter concerns the {c} provision" for c in choices],
            "answer": answer,
        }

    for name, n in (("train.jsonl", 200), ("test.jsonl", 50)):
        with (out / name).open("w", encoding="utf-8") as f:
            for _ in range(n):
                f.write(json.dumps(example()) + "\n")
    print("choice5: 200 train / 50 test, 5 choices each")


if __name__ == "__main__":
    write_corpus()
    write_keyword2()
    write_choice5()
