"""Reader for the soft-label JSONL written by `evade export`.

Each line is {"id", "premise", "hypothesis", "dist": {"e", "n", "c"}}; this is
the training input for downstream fine-tuning.
"""

import json
import math

LABEL_ORDER = ("e", "n", "c")


def load_soft_labels(path, tolerance=1e-9):
    """Returns a list of dicts with "dist" as an [e, n, c] list.

    Raises ValueError naming the line when a record is malformed or its
    distribution does not sum to one.
    """
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                dist = [float(obj["dist"][k]) for k in LABEL_ORDER]
                record = {"id": str(obj["id"]), "premise": obj["premise"],
                          "hypothesis": obj["hypothesis"], "dist": dist}
            except (KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}:{lineno}: malformed record: {e}") from e
            if any(p < 0 for p in dist) or not math.isclose(sum(dist), 1.0, abs_tol=tolerance):
                raise ValueError(f"{path}:{lineno}: distribution {dist} is not normalized")
            records.append(record)
    return records
