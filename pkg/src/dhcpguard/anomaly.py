"""Unknown-threat detection: adaptive baselines over traffic metrics.

Traffic is summarized per tumbling window into three metrics (event
rate, mean payload size, distinct source count).  Each metric keeps an
exponentially weighted mean and variance; a window is anomalous when a
warmed-up metric exceeds ``mean + k * stddev``.  Windows judged
anomalous do not update the baseline, so a sustained attack cannot
drag the threshold up after itself.

Only generic (non-DHCP) traffic feeds these metrics: DHCP control
chatter is sparse and bursty by nature and is the business of the
verifier and the parameterized rules instead.

The module also carries the alarm-versus-truth outcome classification
and the sign-of-attack ratio used to summarize a run: with smoothing
constants d and b,

    ratio = (tn / (tn + d)) / (fn / (fn + b))

reads "benign mass over missed-attack mass"; above 1 means no sign of
attack, below 1 means attack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, NamedTuple, Optional

from .netsim import AttackClass, GenericPayload, SimEvent


class ColdStart(Exception):
    """Raised when no metric has seen enough samples to judge."""


class Verdict(str, Enum):
    RAISED = "raised"
    SILENT = "silent"


class Outcome(str, Enum):
    TP = "tp"
    FP = "fp"
    TN = "tn"
    FN = "fn"

    @property
    def is_real_attack(self) -> bool:
        """TP and FN are the outcomes that stand for an actual attack."""
        return self in (Outcome.TP, Outcome.FN)


class SignVerdict(str, Enum):
    ATTACK = "attack"
    NO_ATTACK = "no_attack"
    BOUNDARY = "boundary"


class SignOfAttack(NamedTuple):
    ratio: float
    verdict: SignVerdict


@dataclass(frozen=True)
class AnomalyConfig:
    alpha: float = 0.1
    k: float = 3.0
    warmup: int = 30
    window: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if self.k <= 0 or self.warmup <= 0 or self.window <= 0:
            raise ValueError("k, warmup and window must be > 0")


class MetricBaseline:
    """EWMA mean/variance for one metric; threshold = mean + k * stddev."""

    def __init__(self, alpha: float):
        self.alpha = alpha
        self.mean = 0.0
        self.variance = 0.0
        self.samples = 0

    def update(self, sample: float) -> None:
        if not math.isfinite(sample):
            raise ValueError("sample must be finite")
        if self.samples == 0:
            self.mean = sample
            self.variance = 0.0
        else:
            diff = sample - self.mean
            self.mean += self.alpha * diff
            self.variance = (1.0 - self.alpha) * self.variance + self.alpha * diff * diff
        self.samples += 1

    def threshold(self, k: float) -> float:
        return self.mean + k * math.sqrt(self.variance)


class Baseline:
    """Named per-metric baselines sharing one smoothing configuration."""

    def __init__(self, config: AnomalyConfig):
        self.config = config
        self._metrics: dict[str, MetricBaseline] = {}

    def metric(self, name: str) -> MetricBaseline:
        if name not in self._metrics:
            self._metrics[name] = MetricBaseline(self.config.alpha)
        return self._metrics[name]

    def update(self, samples: dict[str, float]) -> None:
        for name, value in samples.items():
            self.metric(name).update(value)

    def exceeded(self, samples: dict[str, float]) -> list[str]:
        """Names of warmed-up metrics strictly above their threshold.

        Raises :class:`ColdStart` when no observed metric is warmed up.
        """
        warmed = [
            name
            for name in samples
            if name in self._metrics and self._metrics[name].samples >= self.config.warmup
        ]
        if not warmed:
            raise ColdStart(f"no metric has {self.config.warmup} samples yet")
        return [
            name for name in warmed
            if samples[name] > self._metrics[name].threshold(self.config.k)
        ]


def detect_anomaly(baseline: Baseline, samples: dict[str, float]) -> Verdict:
    return Verdict.RAISED if baseline.exceeded(samples) else Verdict.SILENT


def classify(alarm_raised: bool, truth_is_attack: bool) -> Outcome:
    if alarm_raised:
        return Outcome.TP if truth_is_attack else Outcome.FP
    return Outcome.FN if truth_is_attack else Outcome.TN


@dataclass
class ConfusionCounters:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def add(self, outcome: Outcome, n: int = 1) -> None:
        setattr(self, outcome.value, getattr(self, outcome.value) + n)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def as_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def sign_of_attack(tn: int, fn: int, d: int = 1, b: int = 1) -> SignOfAttack:
    """Benign-silence mass over missed-attack mass.

    ``fn == 0`` yields +inf (nothing was missed, so no sign of attack).
    """
    if tn < 0 or fn < 0:
        raise ValueError("tn and fn must be >= 0")
    if d <= 0 or b <= 0:
        raise ValueError("smoothing constants must be > 0")
    if fn == 0:
        return SignOfAttack(math.inf, SignVerdict.NO_ATTACK)
    ratio = Fraction(tn, tn + d) / Fraction(fn, fn + b)
    if ratio > 1:
        verdict = SignVerdict.NO_ATTACK
    elif ratio < 1:
        verdict = SignVerdict.ATTACK
    else:
        verdict = SignVerdict.BOUNDARY
    return SignOfAttack(float(ratio), verdict)


# -- windowed evaluation over traces ---------------------------------------


RATE = "event_rate"
MEAN_SIZE = "mean_payload_size"
DISTINCT_SOURCES = "distinct_sources"


@dataclass
class WindowRecord:
    end_time: float
    metrics: dict[str, float]
    raised: Optional[bool]        # None while the baseline is still cold
    truth_is_attack: bool
    outcome: Optional[Outcome]


class WindowTracker:
    """Tumbling-window metric accounting over a stream of events.

    Feed every event through :meth:`add_event`; only generic payloads
    contribute samples, but any event's timestamp closes due windows.
    The trailing partial window at end of stream is never closed.
    """

    def __init__(self, config: AnomalyConfig):
        self.config = config
        self.baseline = Baseline(config)
        self.counters = ConfusionCounters()
        self.records: list[WindowRecord] = []
        self.st_series: list[tuple[float, float]] = []
        self._index: Optional[int] = None
        self._count = 0
        self._size_sum = 0
        self._sources: set[int] = set()
        self._attack = False

    def _close_through(self, index: int) -> None:
        while self._index is not None and self._index < index:
            self._emit()
            self._index += 1

    def _emit(self) -> None:
        cfg = self.config
        metrics = {
            RATE: self._count / cfg.window,
            DISTINCT_SOURCES: float(len(self._sources)),
        }
        if self._count:
            metrics[MEAN_SIZE] = self._size_sum / self._count
        try:
            raised: Optional[bool] = bool(self.baseline.exceeded(metrics))
        except ColdStart:
            raised = None
        outcome: Optional[Outcome] = None
        if raised is not None:
            outcome = classify(raised, self._attack)
            self.counters.add(outcome)
            end = (self._index + 1) * cfg.window
            self.st_series.append((end, sign_of_attack(self.counters.tn, self.counters.fn).ratio))
        if not raised:  # silent or cold: safe to learn from this window
            self.baseline.update(metrics)
        self.records.append(WindowRecord(
            end_time=(self._index + 1) * cfg.window,
            metrics=metrics,
            raised=raised,
            truth_is_attack=self._attack,
            outcome=outcome,
        ))
        self._count = 0
        self._size_sum = 0
        self._sources = set()
        self._attack = False

    def advance(self, time: float) -> None:
        if self._index is not None:
            self._close_through(int(time // self.config.window))

    def add_event(self, event: SimEvent) -> None:
        self.advance(event.time)
        if not isinstance(event.payload, GenericPayload):
            return
        index = int(event.time // self.config.window)
        if self._index is None:
            self._index = index
        self._count += 1
        self._size_sum += event.payload.size_bytes
        self._sources.add(event.src)
        if event.ground_truth is not AttackClass.NONE:
            self._attack = True

    def overall_sign(self) -> SignOfAttack:
        return sign_of_attack(self.counters.tn, self.counters.fn)


def window_classification(events: Iterable[SimEvent], config: AnomalyConfig) -> WindowTracker:
    """Run the tumbling-window classification over a finished trace."""
    tracker = WindowTracker(config)
    for event in events:
        tracker.add_event(event)
    return tracker
