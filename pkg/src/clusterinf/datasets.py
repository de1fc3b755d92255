"""A small synthetic state-by-year panel for demos and CLI examples."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

EXAMPLE = "panel.csv"


def make_panel(seed: int = 20, states: int = 24, years: int = 8, per_cell: int = 12) -> pd.DataFrame:
    """Individuals within state-year cells with state and state-year shocks.

    Columns: ``state``, ``year``, ``region``, ``y``, ``educ``, ``age``,
    ``treat`` (a staggered policy switching on in a third of the states),
    plus ``cell`` (the state-year identifier). The true policy effect is 0.
    """
    rng = np.random.default_rng(seed)
    # uneven state sizes: a few large states
    weights = np.exp(0.8 * rng.standard_normal(states))
    cells = np.maximum(2, np.round(per_cell * weights / weights.mean())).astype(int)
    rows = []
    state_fx = 0.3 * rng.standard_normal(states)
    policy_states = rng.choice(states, states // 3, replace=False)
    start = {int(s): int(rng.integers(2, years)) for s in policy_states}
    for s in range(states):
        for t in range(years):
            shock = 0.15 * rng.standard_normal()
            n = cells[s]
            educ = 12 + 2 * rng.standard_normal(n) + 0.5 * state_fx[s]
            age = rng.integers(20, 65, n)
            treat = float(s in start and t >= start[s])
            y = (1.0 + 0.08 * educ + 0.01 * age + state_fx[s] + shock
                 + 0.02 * t + 0.5 * rng.standard_normal(n))
            for i in range(n):
                rows.append((f"S{s:02d}", 2000 + t, f"R{s % 4}", y[i], educ[i], int(age[i]),
                             treat, f"S{s:02d}-{2000 + t}"))
    return pd.DataFrame(rows, columns=["state", "year", "region", "y", "educ", "age", "treat",
                                       "cell"])


def example_path() -> Path:
    """Path of the bundled copy of ``make_panel()``."""
    return Path(__file__).resolve().parent / "data" / EXAMPLE


def load_example() -> pd.DataFrame:
    return pd.read_csv(example_path())
