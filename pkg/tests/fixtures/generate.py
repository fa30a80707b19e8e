"""Regenerate the committed fixture files and the golden candidate list.

The fixture is a 12-concept / 20-triple toy knowledge base with 2-D unit
embeddings parameterized by angle, designed so every admission decision in
the search trace has a comfortable numeric margin. The golden list is
produced by the naive oracle in tests/oracles.py (not by the package) and
was hand-verified: see test_acceptance.py for the closed-form score checks.

Run from the repo root:  python tests/fixtures/generate.py
"""

import json
import math
from pathlib import Path

import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
from oracles import generate  # noqa: E402

HERE = Path(__file__).resolve().parent

# concept -> (angle in degrees, extraction confidence or None for KB-only)
CONCEPTS = {
    "binary_tree": (0.0, 0.95),
    "binary_search_tree": (12.0, 0.90),
    "sorting": (90.0, 0.85),
    "quicksort": (102.0, 0.80),
    "recursion": (50.0, 0.70),
    "avl_tree": (4.0, None),
    "red_black_tree": (12.8, None),
    "tango_tree": (15.5, None),
    "merge_sort": (94.4, None),
    "heap_sort": (102.6, None),
    "dynamic_programming": (48.0, None),
    "art_history": (150.0, None),
}

TRIPLES = [
    ("binary_tree", "related_to", "avl_tree"),
    ("binary_tree", "related_to", "art_history"),
    ("binary_search_tree", "related_to", "avl_tree"),
    ("binary_search_tree", "related_to", "red_black_tree"),
    ("red_black_tree", "related_to", "tango_tree"),
    ("merge_sort", "related_to", "sorting"),
    ("quicksort", "related_to", "heap_sort"),
    ("heap_sort", "related_to", "art_history"),
    ("recursion", "related_to", "dynamic_programming"),
    ("avl_tree", "related_to", "dynamic_programming"),
    ("merge_sort", "related_to", "tango_tree"),
    ("tango_tree", "related_to", "red_black_tree"),
    ("binary_tree", "prerequisite_of", "binary_search_tree"),
    ("sorting", "prerequisite_of", "quicksort"),
    ("dynamic_programming", "related_to", "art_history"),
    ("merge_sort", "related_to", "heap_sort"),
    ("avl_tree", "related_to", "red_black_tree"),
    ("binary_tree", "related_to", "sorting"),
    ("recursion", "related_to", "art_history"),
    ("binary_search_tree", "related_to", "merge_sort"),
]

VIDEOS = [
    {"id": "v1", "position": 0, "concepts": ["binary_tree", "binary_search_tree"]},
    {"id": "v2", "position": 1, "concepts": ["sorting", "quicksort"]},
    {"id": "v3", "position": 2, "concepts": ["recursion", "binary_search_tree"]},
]

LABELS = {
    "tango_tree": 0,
    "heap_sort": 1,
    "red_black_tree": 1,
    "merge_sort": 1,
    "avl_tree": 1,
}

TAU = 3


def vectors():
    return {
        cid: [math.cos(math.radians(a)), math.sin(math.radians(a))]
        for cid, (a, _) in CONCEPTS.items()
    }


def course_concepts():
    return {cid: conf for cid, (_, conf) in CONCEPTS.items() if conf is not None}


def main():
    vecs = vectors()

    with open(HERE / "kb.tsv", "w", encoding="utf-8") as fh:
        for h, r, t in TRIPLES:
            fh.write(f"{h}\t{r}\t{t}\n")

    with open(HERE / "embeddings.txt", "w", encoding="utf-8") as fh:
        for cid in sorted(vecs):
            coords = " ".join(repr(x) for x in vecs[cid])
            fh.write(f"{cid} {coords}\n")

    corpus = {
        "courses": [
            {
                "id": "dsa101",
                "title": "Data Structures and Algorithms",
                "videos": VIDEOS,
                "course_concepts": [
                    {"id": cid, "confidence": conf}
                    for cid, conf in sorted(course_concepts().items())
                ],
            }
        ]
    }
    with open(HERE / "corpus.json", "w", encoding="utf-8") as fh:
        json.dump(corpus, fh, indent=2)
        fh.write("\n")

    with open(HERE / "labels.tsv", "w", encoding="utf-8") as fh:
        for cid, label in sorted(LABELS.items()):
            fh.write(f"{cid}\t{label}\n")

    result = generate(course_concepts(), TRIPLES, vecs, tau=TAU)
    with open(HERE / "golden_candidates.jsonl", "w", encoding="utf-8") as fh:
        for cand in result["candidates"]:
            fh.write(json.dumps({
                "id": cand["id"],
                "score": cand["score"],
                "wave": cand["wave"],
                "cluster": cand["cluster"],
                "root": cand["root"],
                "path": cand["path"],
                "dirs": cand["dirs"],
            }) + "\n")

    print("partition:", result["partition"])
    print("truncated:", result["truncated"])
    for adm in result["admissions"]:
        print(f"wave {adm['wave']}: {adm['id']} <- {adm['from']} "
              f"(cluster {adm['cluster']}, d={adm['distance']:.6f} "
              f"< thr={adm['threshold']:.6f})")
    for cand in result["candidates"]:
        print(f"{cand['score']:.9f}  {cand['id']:<16} wave={cand['wave']} "
              f"cluster={cand['cluster']} path={cand['path']} dirs={cand['dirs']}")


if __name__ == "__main__":
    main()
