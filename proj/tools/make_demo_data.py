#!/usr/bin/env python3
"""Generate the bundled demo corpora under data/.

Two synthetic English-like domains are produced from a small probabilistic
grammar that emits a Penn Treebank II tag with every token, so the tag files
are gold annotations rather than tagger output:

  wiki.txt / wiki.tags               encyclopedic text, ~200k tokens
  reviews_train.tsv / .tags          labeled movie reviews (label<TAB>text)
  reviews_test.tsv                   held-out labeled reviews

The output is fully determined by --seed.
"""

import argparse
import os
import random

# ---------------------------------------------------------------------------
# Lexicon. Shared words appear in both domains so that the pretrained encoder
# has seen most review tokens.

DT = ["the", "a", "an", "this", "that", "its", "their", "his", "her", "each"]
DT_PLURAL = ["the", "these", "many", "several", "some", "two", "three", "all"]
IN = ["in", "of", "with", "for", "on", "at", "from", "by", "after", "during",
      "near", "before", "under", "between", "against", "through", "into"]
CC = ["and", "but", "or"]
PRP = ["he", "she", "it", "they", "we"]
RB = ["also", "later", "often", "still", "only", "largely", "quickly",
      "eventually", "never", "again", "soon", "nearly"]
MD = ["would", "could", "will", "might", "should"]
TO = ["to"]
CD_YEAR = [str(y) for y in range(1790, 2016, 3)]
CD_NUM = ["two", "three", "four", "five", "six", "ten", "twelve", "hundred",
          "several"]

NNP = ["london", "paris", "york", "smith", "johnson", "william", "henry",
       "george", "charles", "mary", "elizabeth", "james", "thomas", "robert",
       "washington", "france", "england", "germany", "italy", "china", "india",
       "texas", "ohio", "boston", "chicago", "victoria", "albert", "edward",
       "arthur", "walter", "archer", "celia", "dorothy", "grant", "lincoln",
       "madrid", "berlin", "vienna", "scotland", "ireland", "wales", "egypt",
       "rome", "athens", "tokyo", "canada", "mexico", "brazil", "peru"]

NN_WIKI = ["city", "river", "war", "album", "season", "team", "church",
           "building", "population", "government", "song", "game", "army",
           "battle", "station", "school", "island", "ship", "road", "village",
           "bridge", "county", "party", "election", "company", "university",
           "record", "single", "band", "league", "club", "storm", "hurricane",
           "species", "family", "castle", "empire", "king", "queen", "bishop",
           "century", "region", "coast", "valley", "mountain", "lake",
           "railway", "court", "law", "treaty", "navy", "fleet", "division",
           "campaign", "attack", "siege", "temple", "museum", "garden",
           "tower", "harbour", "port", "district", "province", "state",
           "nation", "council", "minister", "president", "general", "officer",
           "soldier", "player", "coach", "stadium", "tournament", "title",
           "victory", "defeat", "tour", "chart", "release", "version",
           "edition", "book", "novel", "poem", "painting", "design",
           "structure", "system", "network", "line", "route", "highway",
           "track", "condition", "area", "period", "year", "month", "day"]
NN_SHARED = ["film", "series", "story", "character", "role", "time", "end",
             "part", "work", "show", "production", "director", "writer",
             "music", "history", "life", "world", "music", "performance",
             "scene", "actor", "name", "style", "feature", "set", "score"]
NN_REVIEW = ["movie", "plot", "acting", "cast", "script", "ending", "dialogue",
             "cinematography", "soundtrack", "sequel", "episode", "drama",
             "comedy", "thriller", "horror", "romance", "effects", "pacing",
             "screenplay", "camera", "budget", "audience", "viewer", "hero",
             "villain", "twist", "shot", "minute", "hour", "dvd", "theater",
             "review", "rating", "studio", "trailer", "mess", "masterpiece",
             "classic", "disappointment", "gem"]

NNS_WIKI = ["cities", "rivers", "wars", "albums", "seasons", "teams",
            "churches", "buildings", "songs", "games", "ships", "roads",
            "villages", "bridges", "parties", "elections", "records", "bands",
            "storms", "species", "families", "kings", "soldiers", "players",
            "troops", "forces", "members", "residents", "officials",
            "workers", "students", "people", "years", "months", "days",
            "miles", "kilometres", "votes", "copies", "points", "goals"]
NNS_REVIEW = ["movies", "films", "actors", "characters", "scenes", "effects",
              "fans", "viewers", "critics", "performances", "jokes", "lines",
              "moments", "minutes", "shots", "episodes", "stories", "roles"]

JJ_WIKI = ["first", "new", "large", "northern", "southern", "eastern",
           "western", "national", "early", "major", "original", "small",
           "local", "royal", "military", "political", "public", "former",
           "main", "final", "second", "third", "british", "american",
           "french", "english", "german", "italian", "indian", "ancient",
           "modern", "famous", "several", "other", "similar", "strong",
           "heavy", "entire", "central", "official", "naval", "tropical",
           "commercial", "annual", "total", "later", "rare", "black",
           "grand", "solid", "overall", "real", "odd", "possible"]
JJ_POS = ["great", "superb", "wonderful", "brilliant", "excellent", "fine",
          "good", "beautiful", "terrific", "enjoyable", "perfect", "moving",
          "gentle", "memorable", "stunning", "clever", "best", "nice",
          "amazing", "favorite"]
JJ_NEG = ["dull", "boring", "awful", "terrible", "bad", "poor", "weak",
          "stupid", "worst", "horrible", "pointless", "silly", "bland",
          "unbelievable", "lame", "tedious", "annoying", "predictable",
          "forgettable", "cheap"]

VBD_WIKI = ["was", "became", "played", "released", "built", "won", "served",
            "moved", "recorded", "destroyed", "joined", "founded", "formed",
            "reached", "opened", "entered", "captured", "attacked", "held",
            "led", "named", "elected", "crossed", "replaced", "defeated",
            "completed", "described", "produced", "wrote", "returned"]
VBD_REVIEW = ["loved", "hated", "enjoyed", "watched", "liked", "saw",
              "expected", "found", "thought", "felt", "wanted", "laughed",
              "cried", "missed", "rented", "bought"]
VBN = ["built", "released", "named", "destroyed", "elected", "recorded",
       "founded", "described", "designed", "located", "known", "considered",
       "written", "directed", "produced", "made", "shot", "filmed"]
VBZ = ["is", "has", "remains", "includes", "features", "contains", "shows",
       "makes", "gives", "tells"]
VB = ["be", "become", "make", "take", "see", "watch", "build", "win",
      "return", "remain", "find", "give"]
VBG = ["including", "following", "making", "playing", "using", "watching",
       "leading", "becoming"]
RB_REVIEW = ["really", "very", "quite", "simply", "truly", "just", "so",
             "absolutely", "pretty", "rather", "too", "completely"]


def zipf_pick(rng, words, s=0.9):
    key = tuple(words)
    cdf = _ZIPF_CACHE.get(key)
    if cdf is None:
        total = 0.0
        cdf = []
        for rank in range(len(words)):
            total += 1.0 / (rank + 1) ** s
            cdf.append(total)
        _ZIPF_CACHE[key] = cdf
    x = rng.random() * cdf[-1]
    lo, hi = 0, len(cdf) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return words[lo]


_ZIPF_CACHE = {}


class Gen:
    def __init__(self, rng, nouns, plurals, adjectives, verbs):
        self.rng = rng
        self.nouns = nouns
        self.plurals = plurals
        self.adjectives = adjectives
        self.verbs = verbs

    def w(self, words, tag):
        return [(zipf_pick(self.rng, words), tag)]

    def np(self, depth=0):
        r = self.rng.random()
        if r < 0.45:
            out = self.w(DT, "DT")
            if self.rng.random() < 0.45:
                out += self.w(self.adjectives, "JJ")
            out += self.w(self.nouns, "NN")
        elif r < 0.62:
            out = self.w(NNP, "NNP")
            if self.rng.random() < 0.3:
                out += self.w(NNP, "NNP")
        elif r < 0.77:
            out = self.w(DT_PLURAL, "DT")
            if self.rng.random() < 0.35:
                out += self.w(self.adjectives, "JJ")
            out += self.w(self.plurals, "NNS")
        elif r < 0.85:
            out = self.w(CD_NUM, "CD") + self.w(self.plurals, "NNS")
        elif depth == 0:
            out = self.w(PRP, "PRP")
        else:
            out = self.w(DT, "DT") + self.w(self.nouns, "NN")
        if depth < 1 and out[-1][1] in ("NN", "NNS") and self.rng.random() < 0.3:
            out += self.pp(depth + 1)
        return out

    def pp(self, depth=0):
        return self.w(IN, "IN") + self.np(depth)

    def vp(self):
        r = self.rng.random()
        if r < 0.35:
            out = self.w(self.verbs, "VBD") + self.np(1)
        elif r < 0.5:
            out = [("was", "VBD")] + self.w(VBN, "VBN") + self.pp(1)
        elif r < 0.62:
            out = self.w(self.verbs, "VBD") + self.pp(1)
        elif r < 0.72:
            out = self.w(VBZ, "VBZ") + self.np(1)
        elif r < 0.82:
            out = self.w(MD, "MD") + self.w(VB, "VB") + self.np(1)
        elif r < 0.9:
            out = [("was", "VBD")] + self.w(self.adjectives, "JJ")
        else:
            out = self.w(RB, "RB") + self.w(self.verbs, "VBD") + self.np(1)
        if self.rng.random() < 0.2:
            out += self.w(IN, "IN") + self.w(CD_YEAR, "CD")
        return out

    def sentence(self):
        out = []
        if self.rng.random() < 0.2:
            out += self.w(IN, "IN") + self.w(CD_YEAR, "CD") + [(",", ",")]
        out += self.np() + self.vp()
        if self.rng.random() < 0.25:
            out += self.w(CC, "CC") + self.vp()
        if self.rng.random() < 0.15:
            out += [(",", ",")] + self.w(VBG, "VBG") + self.np(1)
        out.append((".", "."))
        return out


def wiki_line(g):
    out = []
    for _ in range(g.rng.choice([1, 2, 2, 3])):
        out += g.sentence()
    return out


def review_sentence(rng, g, label):
    # Sentiment words agree with the label most of the time.
    pos = label == 1
    if rng.random() < 0.2:
        pos = not pos
    adjs = JJ_POS if pos else JJ_NEG
    r = rng.random()
    if r < 0.3:
        return ([("the", "DT")] + g.w(NN_REVIEW + NN_SHARED, "NN") +
                [("was", "VBD")] + g.w(RB_REVIEW, "RB") + g.w(adjs, "JJ") +
                [(".", ".")])
    if r < 0.5:
        return ([("this", "DT")] + g.w(["movie", "film", "show", "series"], "NN") +
                g.w(["is", "has"], "VBZ") + [("a", "DT")] + g.w(adjs, "JJ") +
                g.w(NN_REVIEW, "NN") + [(".", ".")])
    if r < 0.65:
        verb = ["loved", "enjoyed", "liked"] if pos else ["hated", "missed", "expected"]
        return ([("i", "PRP")] + g.w(verb, "VBD") + [("the", "DT")] +
                g.w(NNS_REVIEW, "NNS") + g.w(["and", "but"], "CC") +
                [("the", "DT")] + g.w(NN_REVIEW, "NN") + [("was", "VBD")] +
                g.w(adjs, "JJ") + [(".", ".")])
    if r < 0.75:
        return ([("the", "DT")] + g.w(NN_REVIEW, "NN") + [("was", "VBD")] +
                g.w(VBN, "VBN") + g.w(IN, "IN") + g.w(NNP, "NNP") +
                [(".", ".")])
    # Neutral sentence from the shared grammar.
    return g.sentence()


def review(rng, g, label):
    out = []
    for _ in range(rng.choice([2, 2, 3, 3, 4])):
        out += review_sentence(rng, g, label)
    return out


def write_tags(path, lines):
    with open(path, "w", encoding="utf-8") as f:
        for i, line in enumerate(lines):
            if i:
                f.write("\n")
            for tok, tag in line:
                f.write(f"{tok}\t{tag}\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--seed", type=int, default=2020)
    ap.add_argument("--wiki-tokens", type=int, default=200000)
    ap.add_argument("--train-reviews", type=int, default=3000)
    ap.add_argument("--test-reviews", type=int, default=1000)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    rng = random.Random(args.seed)
    wiki_gen = Gen(rng, NN_WIKI + NN_SHARED, NNS_WIKI + NNS_REVIEW[:4],
                   JJ_WIKI + JJ_POS[:6] + JJ_NEG[:4], VBD_WIKI)
    lines = []
    count = 0
    while count < args.wiki_tokens:
        line = wiki_line(wiki_gen)
        lines.append(line)
        count += len(line)
    with open(os.path.join(args.out, "wiki.txt"), "w", encoding="utf-8") as f:
        for line in lines:
            f.write(" ".join(t for t, _ in line) + "\n")
    write_tags(os.path.join(args.out, "wiki.tags"), lines)

    review_gen = Gen(rng, NN_REVIEW + NN_SHARED, NNS_REVIEW,
                     JJ_WIKI[:20] + JJ_POS[:5] + JJ_NEG[:5], VBD_REVIEW + VBD_WIKI[:8])
    for split, n in (("train", args.train_reviews), ("test", args.test_reviews)):
        rows = []
        for _ in range(n):
            label = rng.randint(0, 1)
            rows.append((label, review(rng, review_gen, label)))
        with open(os.path.join(args.out, f"reviews_{split}.tsv"), "w", encoding="utf-8") as f:
            for label, line in rows:
                f.write(f"{label}\t" + " ".join(t for t, _ in line) + "\n")
        if split == "train":
            write_tags(os.path.join(args.out, "reviews_train.tags"), [l for _, l in rows])


if __name__ == "__main__":
    main()
