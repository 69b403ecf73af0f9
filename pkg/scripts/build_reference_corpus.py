#!/usr/bin/env python3
"""Write the reference corpus: 25 stage logs with fixed per-stage aggregates.

Only aggregate figures exist for these runs, so per-run logs are rebuilt to
reproduce them:

    photo analysis      1 item per run, all ok, 17.4 s
    element generation  256 items (6 runs x 11, 19 runs x 10), 237 ok, 657.6 s
    placement/route     295 items (20 runs x 12, 5 runs x 11), 222 ok, 267.0 s
    end to end          942.0 s per run

Usage: python3 scripts/build_reference_corpus.py [--out fixtures/reference_corpus]
"""

from __future__ import annotations

import argparse
import json
import random
import shutil
from pathlib import Path

RUNS = 25
ANALYSIS_S = 17.4
GENERATION_S = 657.6
PLACEMENT_S = 267.0
END_TO_END_S = 942.0
GEN_COUNTS = [11] * 6 + [10] * 19
PLACE_COUNTS = [12] * 20 + [11] * 5
GEN_FAILURES = 256 - 237
PLACE_FAILURES = 295 - 222


def _failure_slots(counts, failures, rng) -> set[tuple[int, int]]:
    slots = [(r, i) for r, n in enumerate(counts) for i in range(n)]
    return set(rng.sample(slots, failures))


def _items(run: int, prefix: str, count: int, total_s: float, failed: set, reason: str) -> list[dict]:
    each = round(total_s / count, 6)
    return [
        {
            "item_id": f"{prefix}_{i:02d}",
            "wall_time_s": each,
            "outcome": "failed" if (run, i) in failed else "ok",
            "detail": reason if (run, i) in failed else "",
        }
        for i in range(count)
    ]


def build(out: Path) -> None:
    rng = random.Random(2025)
    gen_failed = _failure_slots(GEN_COUNTS, GEN_FAILURES, rng)
    place_failed = _failure_slots(PLACE_COUNTS, PLACE_FAILURES, rng)
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)
    for run in range(RUNS):
        event = f"event_{run + 1:02d}"
        log = {
            "event_id": event,
            "seed": 42,
            "mode": "transcribed",
            "end_to_end_s": END_TO_END_S,
            "stages": [
                {"stage": "photo_analysis", "elapsed_s": ANALYSIS_S,
                 "items": _items(run, event, 1, ANALYSIS_S, set(), "")},
                {"stage": "element_generation", "elapsed_s": GENERATION_S,
                 "items": _items(run, "element", GEN_COUNTS[run], GENERATION_S, gen_failed, "implausible")},
                {"stage": "placement_route", "elapsed_s": PLACEMENT_S,
                 "items": _items(run, "element", PLACE_COUNTS[run], PLACEMENT_S, place_failed, "implausible")},
            ],
        }
        (out / f"{event}.stage_log.json").write_text(json.dumps(log, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {RUNS} stage logs to {out}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "fixtures" / "reference_corpus")
    build(parser.parse_args().out)


if __name__ == "__main__":
    main()
