"""Published Group-II measurements (16 dataset x pipeline rows) as a fixture."""
from __future__ import annotations

import json
from importlib import resources

from ..evalbench.curves import TradeoffPoint
from .store import MeasurementStore

SEED = 0


def load_rows() -> list[dict]:
    """Rows with raw/+Q accuracy (%), raw time (ms) and savings in whole percent."""
    text = resources.files("effops.data").joinpath("table2.json").read_text()
    return json.loads(text)


def _pipe(base: str, suffix: str) -> str:
    return (base if base != "O" else "") + suffix or "O"


def build_store(rows: list[dict] | None = None) -> MeasurementStore:
    """Records R, R+Q, R+L, R+QL per row; times follow the published savings."""
    rows = load_rows() if rows is None else rows
    store = MeasurementStore()
    for r in rows:
        task, base = r["dataset"], r["pipeline"]
        t = r["time_raw_ms"]
        a, aq = r["acc_raw"] / 100, r["acc_q"] / 100
        q, l, ql = r["q_saving_pct"] / 100, r["l_saving_pct"] / 100, r["ql_saving_pct"] / 100
        store.put(task, SEED, _pipe(base, ""), TradeoffPoint(t, a))
        store.put(task, SEED, _pipe(base, "Q"), TradeoffPoint(t * (1 - q), aq))
        store.put(task, SEED, _pipe(base, "L"), TradeoffPoint(t * (1 - l), a))
        store.put(task, SEED, _pipe(base, "QL"), TradeoffPoint(t * (1 - ql), aq))
    return store
