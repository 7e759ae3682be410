"""Timers, per-iteration traces, and run reports (JSON/CSV).

Reports echo the configuration, per-epoch loss/accuracy/time/traffic, the
leakage audit, and an environment fingerprint. The CSV mirror has one row
per run: HE parameter set, batch size, accuracy %, training time s, and
communication in MiB.
"""

from __future__ import annotations

import json
import platform
import time
from dataclasses import asdict, dataclass, field

import numpy as np

SCHEMA_VERSION = 1

CSV_HEADER = "he_param_set,batch_size,accuracy_pct,training_time_s,communication_mib"


class Timers:
    """Named monotonic-clock accumulators."""

    def __init__(self):
        self.seconds: dict[str, float] = {}

    class _Span:
        def __init__(self, owner, name):
            self.owner, self.name = owner, name

        def __enter__(self):
            self.start = time.monotonic()
            return self

        def __exit__(self, *exc):
            self.owner.seconds[self.name] = self.owner.seconds.get(self.name, 0.0) + (
                time.monotonic() - self.start
            )
            return False

    def span(self, name: str) -> "_Span":
        return self._Span(self, name)

    def as_dict(self) -> dict[str, float]:
        return dict(sorted(self.seconds.items()))


@dataclass
class IterationTrace:
    """One training iteration as the protocol loop saw it."""

    epoch: int
    iteration: int
    loss: float
    accuracy_so_far: float
    max_ct_level: int = 0
    seconds: float = 0.0


@dataclass
class EpochRow:
    epoch: int
    mean_loss: float
    train_accuracy: float
    test_accuracy: float | None
    seconds: float
    phase_seconds: dict[str, float] = field(default_factory=dict)
    bytes_by_type: dict[str, int] = field(default_factory=dict)
    msgs_by_type: dict[str, int] = field(default_factory=dict)


def epoch_summary(
    epoch: int,
    traces: list[IterationTrace],
    test_accuracy: float | None,
    seconds: float,
    phase_seconds: dict[str, float],
    bytes_by_type: dict[str, int],
    msgs_by_type: dict[str, int],
) -> EpochRow:
    losses = [t.loss for t in traces]
    return EpochRow(
        epoch=epoch,
        mean_loss=float(np.mean(losses)) if losses else float("nan"),
        train_accuracy=traces[-1].accuracy_so_far if traces else float("nan"),
        test_accuracy=test_accuracy,
        seconds=seconds,
        phase_seconds=dict(sorted(phase_seconds.items())),
        bytes_by_type=dict(sorted(bytes_by_type.items())),
        msgs_by_type=dict(sorted(msgs_by_type.items())),
    )


def environment_fingerprint() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
        "machine": platform.machine(),
    }


@dataclass
class RunReport:
    mode: str  # local | split-plain | split-he
    role: str  # local | client | server
    he_set: str
    config: dict
    model: dict
    epochs: list[EpochRow]
    totals: dict
    audit: dict | None = None
    per_iteration: list[dict] | None = None
    environment: dict = field(default_factory=environment_fingerprint)
    schema_version: int = SCHEMA_VERSION

    def final_test_accuracy(self) -> float | None:
        for row in reversed(self.epochs):
            if row.test_accuracy is not None:
                return row.test_accuracy
        return None

    def to_dict(self) -> dict:
        out = asdict(self)
        # stable key order for byte-identical reports
        return {k: out[k] for k in sorted(out)}

    def csv_row(self) -> str:
        acc = self.final_test_accuracy()
        return ",".join(
            [
                self.he_set,
                str(self.config.get("batch_size", "")),
                f"{100.0 * acc:.2f}" if acc is not None else "",
                f"{self.totals.get('seconds', 0.0):.3f}",
                f"{self.totals.get('bytes', 0) / (1 << 20):.3f}",
            ]
        )


def emit_report(report: RunReport, path, fmt: str = "json") -> None:
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
    elif fmt == "csv":
        with open(path, "w") as fh:
            fh.write(CSV_HEADER + "\n" + report.csv_row() + "\n")
    else:
        from .errors import ParameterError

        raise ParameterError(f"unknown report format {fmt!r}")


def load_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
