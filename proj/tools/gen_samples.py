#!/usr/bin/env python3
# Writes small sample inputs under data/samples/ for the instruct and loss
# subcommands. Run from the repo root after gen_mini_suite.py.
import csv, json, random

rng = random.Random(7)

with open("data/mini_suite.tsv") as f, open("data/samples/pairs.jsonl", "w") as out:
    for row in csv.DictReader(f, delimiter="\t"):
        for lang in ("lug", "ach", "teo"):
            out.write(json.dumps({"src_lang": "eng", "tgt_lang": lang, "src_text": row["english"],
                                  "tgt_text": row[lang], "origin": "parallel",
                                  "doc_id": "c%02d" % int(row["category_id"])}) + "\n")

conversations = [
    ("question_answering", "What is the capital of Uganda?", "The capital of Uganda is Kampala."),
    ("question_answering", "Which lake is the source of the Nile?", "The White Nile flows out of Lake Victoria."),
    ("question_answering", "When do the long rains usually start?", "In much of the region the long rains start in March."),
    ("summarization_correction", "Fix the spelling: 'the childen went to shool'", "The children went to school."),
    ("summarization_correction", "Summarise: The council met on Monday and agreed to repair the market roof before the rains.",
     "The council agreed to fix the market roof before the rains."),
    ("creative", "Write one line about the morning market.", "Baskets of mangoes glow as the market wakes."),
    ("creative", "Give a short proverb about patience.", "Slowly, slowly, the bird builds its nest."),
    ("cultural_explanation", "What is a kanzu?", "A kanzu is a long white robe worn by men on formal occasions."),
    ("cultural_explanation", "Why are names given at a ceremony?", "Naming ceremonies welcome a child into the clan and record its lineage."),
    ("question_answering", "How should drinking water be made safe?", "Boil it for at least one minute and store it covered."),
]
with open("data/samples/conversations.jsonl", "w") as out:
    for cat, q, a in conversations:
        out.write(json.dumps({"category": cat, "turns": [{"role": "user", "text": q}, {"role": "assistant", "text": a}],
                              "langs": ["eng"]}) + "\n")

prefs = [
    {"prompt": "What is the capital of Uganda?", "chosen": "Kampala is the capital of Uganda.",
     "rejected": "Nairobi is the capital of Uganda.", "defect": "factuality"},
    {"prompt": "Translate to English: Oli otya?", "chosen": "How are you?",
     "rejected": "How are you? you? you? you? you? you? you? you? you? you?", "defect": "glitching"},
]
with open("data/samples/preferences.jsonl", "w") as out:
    for p in prefs:
        out.write(json.dumps(p) + "\n")

def logps(n):
    return [round(-rng.uniform(0.01, 3.0), 4) for _ in range(n)]

with open("data/samples/pair_logps.jsonl", "w") as out:
    for _ in range(20):
        c, r = rng.randint(1, 12), rng.randint(1, 12)
        out.write(json.dumps({"policy_chosen": logps(c), "policy_rejected": logps(r),
                              "ref_chosen": logps(c), "ref_rejected": logps(r)}) + "\n")
