"""Video-grouped dataset splitting, ROC-AUC, and evaluation reports.

The positive class is "fake" everywhere: AUC is the probability that a fake
sample scores above a real one (ties count half). Ranks are accumulated in
exact integer arithmetic and the final ratio is rounded once onto a fixed
2^-53 grid, which makes label-flip complementarity (AUC + flipped-AUC = 1)
and invariance under strictly increasing score transforms hold exactly.
"""

import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import CompatibilityError, DataError
from .forest import RandomForest, predict_proba

_GRID_BITS = 53


def _quantized_ratio(num: int, den: int) -> float:
    """num/den rounded half-even onto the 2^-53 grid; exact integer math."""
    q, r = divmod(num << _GRID_BITS, den)
    if 2 * r > den or (2 * r == den and q & 1):
        q += 1
    return q / float(1 << _GRID_BITS)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with midrank tie handling; fake is positive.

    Equivalent to (R_fake − n_fake(n_fake+1)/2) / (n_real·n_fake) where
    R_fake is the midrank sum of the fake-class scores, computed without
    intermediate rounding.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or len(scores) != len(labels):
        raise DataError("scores and labels must be equal-length sequences")
    if not np.isfinite(scores).all():
        raise DataError("scores must be finite")
    is_fake = np.empty(len(scores), dtype=bool)
    for i, label in enumerate(labels):
        if label not in ("real", "fake"):
            raise DataError(f"unknown label {label!r}")
        is_fake[i] = label == "fake"
    n_fake = int(is_fake.sum())
    n_real = len(scores) - n_fake
    if n_fake == 0 or n_real == 0:
        raise DataError("ROC-AUC needs both real and fake samples")
    order = np.argsort(scores, kind="mergesort")
    sv = scores[order]
    sf = is_fake[order]
    # twice the fake midrank sum, as an exact integer: a tie group occupying
    # ranks i+1..j+1 contributes (i+j+2) per fake member
    num2 = 0
    i = 0
    n = len(sv)
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        k = int(sf[i : j + 1].sum())
        num2 += k * (i + j + 2)
        i = j + 1
    num = num2 - n_fake * (n_fake + 1)
    den = 2 * n_real * n_fake
    return _quantized_ratio(num, den)


def split_manifest(rows, train_fraction: float = 0.8, seed: int = 42):
    """Assign train/test splits by video, preserving preassigned rows.

    Whole videos are shuffled and partitioned so no video spans both splits;
    videos with a preassigned split keep it (and lend it to any unassigned
    frames of the same video). The fraction applies to the unassigned
    videos: n_train = round(fraction × count).
    """
    rows = list(rows)
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError(f"train_fraction must be in [0, 1], got {train_fraction}")
    pre: dict[str, str] = {}
    for row in rows:
        if not row.video_id:
            raise DataError(f"sample {row.sample_id!r} has no video_id")
        if row.split == "unassigned":
            continue
        known = pre.setdefault(row.video_id, row.split)
        if known != row.split:
            raise DataError(
                f"video {row.video_id!r} has conflicting preassigned splits"
                f" ({known} vs {row.split})"
            )
    unassigned = sorted({r.video_id for r in rows} - set(pre))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(unassigned))
    n_train = int(round(train_fraction * len(unassigned)))
    train_videos = {unassigned[j] for j in perm[:n_train]}
    out = []
    for row in rows:
        if row.video_id in pre:
            split = pre[row.video_id]
        elif row.video_id in train_videos:
            split = "train"
        else:
            split = "test"
        out.append(replace(row, split=split))
    return out


@dataclass(frozen=True)
class EvalReport:
    auc: float
    n_real: int
    n_fake: int
    accuracy: float
    mean_score_real: float
    mean_score_fake: float


def check_model_compatibility(model: RandomForest, rows) -> None:
    """Reject feature rows whose detector/mode/width disagree with the model."""
    for row in rows:
        problems = []
        if row.detector != model.detector:
            problems.append(f"detector {row.detector!r} vs model {model.detector!r}")
        if row.mode != model.mode:
            problems.append(f"mode {row.mode!r} vs model {model.mode!r}")
        if 8 * row.d != model.n_features:
            problems.append(
                f"dimension 8x{row.d} vs model {model.n_features}"
            )
        if problems:
            raise CompatibilityError(
                f"feature row {row.sample_id!r} is incompatible with the"
                f" model: " + "; ".join(problems)
            )


def evaluate(model: RandomForest, rows) -> EvalReport:
    """Score feature rows with the model and summarize.

    Rows are processed in sample_id order so the report is independent of
    input ordering. Accuracy uses the 0.5 threshold (score ≥ 0.5 → fake)
    and is auxiliary; AUC is the primary metric.
    """
    rows = sorted(rows, key=lambda r: r.sample_id)
    if not rows:
        raise DataError("no feature rows to evaluate")
    check_model_compatibility(model, rows)
    scores = np.array([predict_proba(model, row.values) for row in rows])
    labels = [row.label for row in rows]
    auc = roc_auc(scores, labels)
    is_fake = np.array([label == "fake" for label in labels])
    predicted_fake = scores >= 0.5
    accuracy = float((predicted_fake == is_fake).mean())
    return EvalReport(
        auc=auc,
        n_real=int((~is_fake).sum()),
        n_fake=int(is_fake.sum()),
        accuracy=accuracy,
        mean_score_real=float(scores[~is_fake].mean()),
        mean_score_fake=float(scores[is_fake].mean()),
    )


def report_items(report: EvalReport) -> list[tuple[str, str]]:
    return [
        ("positive_class", "fake"),
        ("auc", repr(report.auc)),
        ("accuracy", repr(report.accuracy)),
        ("n_real", str(report.n_real)),
        ("n_fake", str(report.n_fake)),
        ("mean_score_real", repr(report.mean_score_real)),
        ("mean_score_fake", repr(report.mean_score_fake)),
    ]


def write_report_csv(path: str, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["key", "value"])
        writer.writerows(report_items(report))


def format_report(report: EvalReport) -> str:
    lines = [
        f"samples: {report.n_real} real, {report.n_fake} fake",
        f"roc_auc (fake positive): {report.auc:.6f}",
        f"accuracy @0.5: {report.accuracy:.6f}",
        f"mean score: real {report.mean_score_real:.4f},"
        f" fake {report.mean_score_fake:.4f}",
    ]
    return "\n".join(lines)


def split_counts(rows) -> dict[str, int]:
    """Row counts per split value (handy for CLI summaries)."""
    out: dict[str, int] = {}
    for row in rows:
        out[row.split] = out.get(row.split, 0) + 1
    return out
