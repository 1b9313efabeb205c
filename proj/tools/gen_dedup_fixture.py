#!/usr/bin/env python3
# Writes data/fixtures/dedup_1mb.jsonl. Run from the repo root.
#
# Layout (all ASCII, so chars == bytes of text):
#   700 clean docs   P(499) + "\n\n" + P(499)                    = 1000 chars
#    50 noisy docs   P(495) + "\n\n" + P(494) + "\n\nPage <nn>"  = 1000 chars
#                    (footer is exactly 9 chars; cleaning removes it)
#   200 exact copies of clean docs 0..199                        = 1000 chars
#    50 docs built from two paragraphs of earlier clean docs      = 1000 chars
#
# chars_in  = 1000 * 1000                  = 1,000,000
# chars_out = 700 * 1000 + 50 * 991        =   749,550   (ratio 0.74955)
import json, random

rng = random.Random(20250)
SYL = ["ka", "mu", "ba", "ki", "lo", "te", "ng", "wa", "ri", "so", "pe", "di", "nu", "ga", "yo"]

def para(n):
    words = []
    length = -1
    while length < n:
        w = "".join(rng.choice(SYL) for _ in range(rng.randint(1, 4)))
        words.append(w)
        length += len(w) + 1
    s = " ".join(words)[:n]
    return s[:-1] + "a" if s.endswith(" ") else s

docs = []
clean = []
for i in range(700):
    a, b = para(499), para(499)
    clean.append((a, b))
    docs.append(a + "\n\n" + b)
for i in range(50):
    docs.append(para(495) + "\n\n" + para(494) + "\n\nPage " + str(10 + i))
for i in range(200):
    docs.append(docs[i])
for i in range(50):
    docs.append(clean[300 + i][0] + "\n\n" + clean[400 + i][1])

assert all(len(d) == 1000 for d in docs), "every document is 1000 chars"
with open("data/fixtures/dedup_1mb.jsonl", "w") as f:
    for d in docs:
        f.write(json.dumps({"lang": "lug", "source": "web", "text": d}) + "\n")
