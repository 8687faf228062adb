"""Metrics and the two-threshold evaluation protocol.

Attack is the positive class; normal and injected noise together form the
negative class.  For the probabilistic model, events whose noise score
s_sigma exceeds a threshold tau are forced into the non-attack class (final
score 0) and the remaining events are ranked by s_mu; the ROC-AUC is
averaged over a grid of tau values.  The baseline scores events directly
with its single SVDD output.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .ctdg import Event, Label, TemporalAdjacencyStore
from .encoder import HEAD_SVDD, apply_event_updates, embed_nodes, init_memory
from .heads import ModelBundle, score_mu, score_sigma, svdd_score

DEFAULT_TAU_GRID = tuple(np.linspace(5.0, 25.0, 21))


def roc_auc(scores, positives) -> float:
    """Mann-Whitney ROC-AUC with midrank tie handling.

    positives: boolean mask, True for the positive class.  Requires at
    least one positive and one negative.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length vectors")
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"roc_auc needs both classes, got {n_pos} positives / {n_neg} negatives")

    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    return float((ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def f1_grid(scores, positives, thresholds) -> Tuple[float, float, List[Tuple[float, float]]]:
    """F1 at every threshold (predict positive when score > tau).

    Returns (best threshold, best F1, full curve); F1 is 0 when the
    denominator vanishes.  Ties go to the smallest threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    thresholds = list(thresholds)
    if scores.size == 0 or len(thresholds) == 0:
        raise ValueError("f1_grid needs scores and thresholds")
    if any(thresholds[i] > thresholds[i + 1] for i in range(len(thresholds) - 1)):
        raise ValueError("thresholds must be sorted ascending")
    curve = []
    for tau in thresholds:
        pred = scores > tau
        tp = int(np.sum(pred & positives))
        fp = int(np.sum(pred & ~positives))
        fn = int(np.sum(~pred & positives))
        denom = 2 * tp + fp + fn
        curve.append((float(tau), 2.0 * tp / denom if denom else 0.0))
    best_tau, best_f1 = max(curve, key=lambda tf: (tf[1], -tf[0]))
    return best_tau, best_f1, curve


def twofold_scores(s_mu, s_sigma, tau_sigma: float) -> np.ndarray:
    """Events with s_sigma > tau are flagged as noise and forced to final
    score 0 (the non-attack end of the ranking); the rest keep s_mu."""
    s_mu = np.asarray(s_mu, dtype=np.float64)
    s_sigma = np.asarray(s_sigma, dtype=np.float64)
    if s_mu.shape != s_sigma.shape:
        raise ValueError(f"score lengths differ: {s_mu.shape} vs {s_sigma.shape}")
    return np.where(s_sigma > tau_sigma, 0.0, s_mu)


# ---------------------------------------------------------------------------
# streaming scorer

@dataclass
class ScoredEvents:
    t: np.ndarray
    s_mu: np.ndarray
    s_sigma: Optional[np.ndarray]  # None for the baseline head
    labels: np.ndarray             # Label integer codes


class StreamScorer:
    """Scores a time-ordered stream with a frozen model.

    Each event is scored from the state before it (memory and neighborhoods
    never see the event itself); afterwards, when ``update_state`` is on
    (the default, stream realism), the event updates both endpoint memories
    and enters the neighborhood store.  With it off the model state is
    completely frozen.
    """

    def __init__(self, bundle: ModelBundle, node_count: int, t_start: float,
                 update_state: bool = True):
        self.bundle = bundle
        self.params = bundle.params
        self.center = bundle.center.data
        self.gaussian = self.params.config.head != HEAD_SVDD
        self.update_state = update_state
        self.bank = init_memory(node_count, self.params.config.d_memory, t_start)
        self.store = TemporalAdjacencyStore()

    def warm(self, events: Sequence[Event]) -> None:
        """Replay a prefix of the stream (memory + store updates, no scores)."""
        apply_event_updates(events, self.bank, self.params, self.store)

    def snapshot(self):
        return self.bank.snapshot(), len(self.store.events)

    def restore(self, snap) -> None:
        bank_snap, n_events = snap
        self.bank.restore(bank_snap)
        self.store.truncate(n_events)

    def score(self, events: Sequence[Event]) -> ScoredEvents:
        n = len(events)
        ts = np.empty(n)
        s_mu = np.empty(n)
        s_sigma = np.empty(n) if self.gaussian else None
        labels = np.empty(n, dtype=np.int64)
        for i, ev in enumerate(events):
            a, s = embed_nodes([ev.src, ev.dst], [ev.t, ev.t], self.bank, self.store, self.params)
            if self.gaussian:
                s_mu[i] = score_mu(a.data[0], a.data[1], self.center)
                s_sigma[i] = score_sigma(s.data[0], s.data[1])
            else:
                s_mu[i] = svdd_score(a.data[0], a.data[1], self.center)
            ts[i] = ev.t
            labels[i] = int(ev.label)
            if self.update_state:
                apply_event_updates([ev], self.bank, self.params, self.store)
        return ScoredEvents(t=ts, s_mu=s_mu, s_sigma=s_sigma, labels=labels)


# ---------------------------------------------------------------------------
# trials and summaries

@dataclass
class TrialResult:
    noise_pct: float
    seed: int
    aucs: List[float]
    mean_auc: float


@dataclass
class SummaryRow:
    noise_pct: float
    model: str
    mean_auc: float  # multiplied by 100, Table-style
    std_auc: float


def trial_from_scores(scored: ScoredEvents, tau_grid: Sequence[float],
                      noise_pct: float = 0.0, seed: int = 0) -> TrialResult:
    """Grid of ROC-AUCs for one scored stream.

    Probabilistic head: one AUC per tau in the grid, using the two-fold
    rule.  Baseline head: a degenerate single-entry grid on the raw score.
    """
    positives = scored.labels == int(Label.ATTACK)
    if scored.s_sigma is None:
        aucs = [roc_auc(scored.s_mu, positives)]
    else:
        if len(tau_grid) == 0:
            raise ValueError("empty tau grid")
        aucs = [
            roc_auc(twofold_scores(scored.s_mu, scored.s_sigma, tau), positives)
            for tau in tau_grid
        ]
    return TrialResult(noise_pct=noise_pct, seed=seed, aucs=aucs,
                       mean_auc=float(np.mean(aucs)))


def evaluate_trial(bundle: ModelBundle, test_events: Sequence[Event],
                   tau_grid: Sequence[float], node_count: int,
                   warm_events: Sequence[Event] = (), update_state: bool = True,
                   noise_pct: float = 0.0, seed: int = 0) -> TrialResult:
    """Score a (possibly noise-injected) test stream and compute the
    tau-grid AUCs.  ``warm_events`` replays the train+val prefix first."""
    if warm_events:
        t_start = warm_events[0].t
    elif test_events:
        t_start = test_events[0].t
    else:
        raise ValueError("evaluate_trial: no events")
    scorer = StreamScorer(bundle, node_count, t_start, update_state)
    scorer.warm(warm_events)
    scored = scorer.score(test_events)
    return trial_from_scores(scored, tau_grid, noise_pct, seed)


def summarize(trials: Sequence[TrialResult], model: str) -> SummaryRow:
    """Mean and sample standard deviation (n−1) of the per-trial mean AUCs,
    reported multiplied by 100."""
    if len(trials) < 2:
        raise ValueError("summarize needs at least 2 trials for a standard deviation")
    pcts = {t.noise_pct for t in trials}
    if len(pcts) != 1:
        raise ValueError(f"trials mix noise levels {sorted(pcts)}")
    means = np.array([t.mean_auc for t in trials])
    return SummaryRow(
        noise_pct=trials[0].noise_pct, model=model,
        mean_auc=float(means.mean() * 100.0),
        std_auc=float(means.std(ddof=1) * 100.0),
    )


REPORT_CSV_HEADER = "noise_ratio,model,mean_auc,std_auc"


def render_report(rows: Sequence[SummaryRow]) -> Tuple[str, str]:
    """Noise-ratio × model table ("mean ± std", ×100) plus a CSV twin."""
    models: List[str] = []
    for row in rows:
        if row.model not in models:
            models.append(row.model)
    by_key = {(row.noise_pct, row.model): row for row in rows}
    pcts = sorted({row.noise_pct for row in rows})

    width = 16
    header = "noise_pct".ljust(10) + "".join(m.ljust(width) for m in models)
    lines = [header, "-" * len(header)]
    for pct in pcts:
        cells = []
        for model in models:
            row = by_key.get((pct, model))
            cells.append("-" if row is None else f"{row.mean_auc:.1f} ± {row.std_auc:.1f}")
        lines.append(f"{pct:g}".ljust(10) + "".join(c.ljust(width) for c in cells))
    table = "\n".join(lines)

    buf = io.StringIO()
    buf.write(REPORT_CSV_HEADER + "\n")
    for row in rows:
        buf.write(f"{row.noise_pct!r},{row.model},{row.mean_auc!r},{row.std_auc!r}\n")
    return table, buf.getvalue()


def parse_report_csv(text: str) -> List[SummaryRow]:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != REPORT_CSV_HEADER:
        raise ValueError("not a report CSV")
    rows = []
    for ln in lines[1:]:
        pct, model, mean, std = ln.split(",")
        rows.append(SummaryRow(float(pct), model, float(mean), float(std)))
    return rows


_TRACE_LABELS = {Label.NORMAL: "normal", Label.ATTACK: "attack", Label.NOISE: "noise"}


def export_traces(bundle: ModelBundle, events: Sequence[Event], node_count: int, path,
                  warm_events: Sequence[Event] = (), update_state: bool = True) -> ScoredEvents:
    """Per-event score trace CSV: t,s_mu,s_sigma,label in time order.

    The baseline head writes 0.0 in the s_sigma column.
    """
    t_start = warm_events[0].t if warm_events else events[0].t
    scorer = StreamScorer(bundle, node_count, t_start, update_state)
    scorer.warm(warm_events)
    scored = scorer.score(events)
    sig = scored.s_sigma if scored.s_sigma is not None else np.zeros_like(scored.s_mu)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,s_mu,s_sigma,label\n")
        for i in range(scored.t.size):
            fh.write(
                f"{float(scored.t[i])!r},{float(scored.s_mu[i])!r},{float(sig[i])!r},"
                f"{_TRACE_LABELS[Label(scored.labels[i])]}\n"
            )
    return scored
