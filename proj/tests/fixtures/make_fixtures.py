#!/usr/bin/env python3
"""Regenerates the pipeline fixtures.

Phase 1 writes the corpus, references and generation responses. Phase 2
needs the filtered corpus produced by `evade generate` + `evade filter` and
scripts every validation request against it, plus embedding vectors.

    python3 make_fixtures.py phase1
    evade generate --config pipeline_config.json --mock mock.jsonl --no-cache
    evade filter --config pipeline_config.json
    python3 make_fixtures.py phase2 out/filtered.jsonl

Scores are a deterministic function of the text so regeneration is stable.
"""

import hashlib
import json
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
MODEL = "mock-llm"
LABELS = ["entailment", "neutral", "contradiction"]

INSTANCES = [
    ("p01", "A man in a red jacket is walking his dog through a snowy park.",
     "A man is outside with an animal.",
     {"entailment": [("a1", "The park is outside and a dog is an animal.", True),
                     ("a2", "Walking a dog through a park means being outdoors with it.", True)],
      "neutral": [("a3", "The man could be walking someone else's dog.", False)]},
     (88, 10, 2)),
    ("p02", "Two children are building a sandcastle on the beach.",
     "The kids are at school.",
     {"contradiction": [("a1", "They are on the beach, not at school.", True),
                        ("a2", "Building a sandcastle happens at the beach rather than a school.", True)]},
     (3, 9, 88)),
    ("p03", "A woman is reading a book on a crowded train.",
     "The woman is commuting to work.",
     {"neutral": [("a1", "We do not know where the train is going.", True),
                  ("a3", "She might be traveling for leisure.", True)],
      "entailment": [("a2", "People on crowded trains are usually commuters.", False)]},
     (30, 62, 8)),
    ("p04", "A chef is chopping onions in a busy restaurant kitchen.",
     "Someone is preparing food.",
     {"entailment": [("a1", "Chopping onions is part of preparing food.", True)]},
     (95, 5, 0)),
    ("p05", "An old man sits alone on a bench feeding pigeons.",
     "The man is with his grandchildren.",
     {"contradiction": [("a2", "He sits alone, so nobody is with him.", True)],
      "neutral": [("a4", "The grandchildren could be nearby but not on the bench.", True)]},
     (2, 35, 63)),
    ("p06", "A group of cyclists race down a mountain road.",
     "People are riding bikes.",
     {"entailment": [("a1", "Cyclists ride bikes.", True),
                     ("a3", "Racing down a road as cyclists means riding bicycles.", True)]},
     (97, 3, 0)),
    ("p07", "A musician plays a violin on a street corner.",
     "The musician is performing for money.",
     {"neutral": [("a1", "Street musicians often want tips, but it is not stated.", True)],
      "entailment": [("a4", "Playing on a street corner is busking for money.", True)]},
     (41, 57, 2)),
    ("p08", "A girl in a yellow dress is jumping into a swimming pool.",
     "The girl is dry.",
     {"contradiction": [("a2", "Jumping into a pool gets you wet.", True)],
      "neutral": [("a3", "She has not landed in the water yet.", False)]},
     (1, 18, 81)),
    ("p09", "Workers are repairing a road at night under bright lights.",
     "The road is being fixed.",
     {"entailment": [("a1", "Repairing a road is fixing it.", True)],
      "neutral": [("a2", "The workers might only be inspecting the damage.", False)]},
     (84, 14, 2)),
    ("p10", "A dog catches a frisbee in mid-air at the beach.",
     "A cat is sleeping on a sofa.",
     {"contradiction": [("a4", "The animal is a dog catching a frisbee, not a sleeping cat.", True)],
      "neutral": [("a1", "A cat could be sleeping somewhere else at the same time.", True)]},
     (0, 46, 54)),
]

# Generation outputs keyed by (instance, label); anything absent gets a
# two-item default built from the hypothesis.
SPECIAL = {
    ("p02", "neutral"): ("1. There are no explanations for this label.", "stop"),
    ("p04", "contradiction"): (
        "1. The chef is cooking so someone prepares food.\n"
        "2. Onions are food and the chef is handling them, which", "length"),
    ("p06", "neutral"): (
        "1. The cyclists may be racing in an official competition.\n"
        "2. 骑自行车的人在比赛。", "stop"),
    ("p07", "neutral"): (
        "Here are some explanations:\n"
        "1. The musician may simply enjoy playing in public.\n"
        "2. The musician may simply enjoy playing in public.\n"
        "3. Nothing in the context mentions money.", "stop"),
}


def unit(key: str) -> float:
    """Deterministic value in [0, 1) from a string."""
    h = hashlib.sha256(key.encode()).hexdigest()
    return int(h[:12], 16) / float(1 << 48)


def default_generation(inst_id, hypothesis, label):
    base = hypothesis.rstrip(".").lower()
    items = {
        "entailment": [f"The context directly describes that {base}.",
                       f"Every detail needed to conclude that {base} is given."],
        "neutral": [f"The context does not say whether {base}.",
                    f"It is possible but not certain that {base}."],
        "contradiction": [f"The context rules out that {base}.",
                          f"The described scene is incompatible with the claim that {base}."],
    }[label]
    return "\n".join(f"{i + 1}. {t}" for i, t in enumerate(items))


def phase1():
    with open(HERE / "corpus.jsonl", "w") as f:
        for inst_id, premise, hyp, expl, _ in INSTANCES:
            annotations = []
            for label in LABELS:
                for annotator, text, valid in expl.get(label, []):
                    annotations.append({"label": label, "text": text,
                                        "source": f"human:{annotator}",
                                        "human_valid": valid})
            f.write(json.dumps({"id": inst_id, "premise": premise,
                                "hypothesis": hyp, "annotations": annotations},
                               ensure_ascii=False) + "\n")
    with open(HERE / "reference.jsonl", "w") as f:
        for inst_id, *_, counts in INSTANCES:
            f.write(json.dumps({"id": inst_id, "counts": dict(zip("enc", counts))}) + "\n")
    with open(HERE / "mock.jsonl", "w") as f:
        for inst_id, _, hyp, _, _ in INSTANCES:
            for label in LABELS:
                text, finish = SPECIAL.get(
                    (inst_id, label),
                    (default_generation(inst_id, hyp, label), "stop"))
                f.write(json.dumps({"key": f"generate/{MODEL}/{inst_id}/{label}",
                                    "text": text, "finish_reason": finish},
                                   ensure_ascii=False) + "\n")


def score_for(inst_id, label, text, source):
    # Model explanations mostly pass; labels the reference finds implausible
    # score low. Human explanations marked invalid score low too.
    ref = {i[0]: i[4] for i in INSTANCES}[inst_id]
    share = ref[LABELS.index(label)] / sum(ref)
    if source.startswith("human:"):
        valid = next(v for a, t, v in
                     {i[0]: i[3] for i in INSTANCES}[inst_id].get(label, [])
                     if t == text)
        base = 0.75 if valid else 0.25
    else:
        base = 0.3 + 0.65 * min(1.0, share * 2.5)
    jitter = (unit(f"{inst_id}|{label}|{text}") - 0.5) * 0.2
    return round(min(0.99, max(0.01, base + jitter)), 2)


def refs(instance):
    counts = {}
    out = []
    for a in instance["annotations"]:
        key = (a["label"], a["source"])
        out.append((a["label"], a["source"], counts.get(key, 0), a["text"]))
        counts[key] = counts.get(key, 0) + 1
    return out


def phase2(filtered_path):
    corpus = [json.loads(l) for l in open(filtered_path) if l.strip()]
    lines = []
    texts = []
    for inst in corpus:
        iid = inst["id"]
        rs = refs(inst)
        for label, source, ordinal, text in rs:
            texts.append(text)
            if source == f"model:{MODEL}" or source.startswith("human:"):
                s = score_for(iid, label, text, source)
                tag = f"validate/one-expl/{MODEL}/{iid}/{label}/{source}/{ordinal}"
                if iid == "p01" and source.startswith("model:") and ordinal == 0 \
                        and label == "entailment":
                    # First reply is unusable; the retry answers.
                    lines.append({"key": tag, "text": "I think it is likely valid."})
                    lines.append({"key": tag + "#retry1", "text": f"{s}"})
                else:
                    lines.append({"key": tag, "text": f"Probability: {s}"})

        order = {"entailment": 0, "neutral": 1, "contradiction": 2}

        def ctx_sort(r):
            return (r[1].split(":")[0] != "human", r[1], order[r[0]], r[2])

        # Source::Kind orders human before model; within a kind by id.
        model_refs = sorted([r for r in rs if r[1].startswith("model:")], key=ctx_sort)
        if model_refs:
            scores = {str(i + 1): score_for(iid, r[0], r[3], r[1])
                      for i, r in enumerate(model_refs)}
            text = json.dumps(scores)
            if iid == "p03":
                text = "Sure! " + text[:-1] + ", oops"  # malformed, salvaged
            lines.append({"key": f"validate/one-llm/{MODEL}/{iid}/model:{MODEL}",
                          "text": text})
            all_text = json.dumps(scores)
            if iid == "p05":
                # Leaves the last explanation unscored.
                last = str(len(model_refs))
                all_text = json.dumps({k: v for k, v in scores.items() if k != last})
            lines.append({"key": f"validate/all-llm/{MODEL}/{iid}", "text": all_text})

    with open(HERE / "mock.jsonl", "a") as f:
        for line in lines:
            f.write(json.dumps(line, ensure_ascii=False) + "\n")
    with open(HERE / "vectors.jsonl", "w") as f:
        for text in sorted(set(texts)):
            vec = [round(unit(f"{text}#{d}") * 2 - 1, 6) for d in range(8)]
            if all(v == 0 for v in vec):
                vec[0] = 1.0
            f.write(json.dumps({"text": text, "vector": vec}, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    if sys.argv[1] == "phase1":
        phase1()
    else:
        phase2(sys.argv[2])
