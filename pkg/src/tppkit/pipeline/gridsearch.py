"""Exhaustive grid search ranked by dev log-likelihood."""

import csv
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

from ..errors import TPPError
from .config import config_with
from .train import train


def _sort_key(v):
    # numbers before strings, each in natural order
    return (0, v, "") if isinstance(v, (int, float)) and not isinstance(v, bool) else (1, 0, str(v))


def grid_cells(grid):
    """Cells in lexicographic order: keys sorted by path, values ascending."""
    keys = sorted(grid.params)
    values = [sorted(grid.params[k], key=_sort_key) for k in keys]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


@dataclass
class GridResult:
    best: dict
    best_config: object
    leaderboard: list


def grid_search(base, grid=None, train_set=None, dev_set=None, out_dir=None, verbose=False):
    """Train every cell with the shared seed and rank by best dev LL.

    Ties keep the lexicographic cell order. A failing cell is recorded with
    dev LL of -inf and its error message; it does not stop the search.
    """
    grid = grid or base.grid
    grid.validate()
    rows = []
    for idx, cell in enumerate(grid_cells(grid)):
        cfg = config_with(base, cell)
        cell_dir = Path(out_dir) / f"cell_{idx:03d}" if out_dir else None
        try:
            res = train(cfg, train_set, dev_set, out_dir=cell_dir)
            dev_ll, epochs, error = res.best_dev_ll, len(res.log), ""
        except TPPError as exc:
            dev_ll, epochs, error = -math.inf, 0, f"{type(exc).__name__}: {exc}"
        rows.append({"cell": idx, "params": cell, "dev_ll": dev_ll, "epochs": epochs, "error": error})
        if verbose:
            print(f"cell {idx} {cell}: dev_ll={dev_ll:.5f} {error}", flush=True)
    ranked = sorted(rows, key=lambda r: (-r["dev_ll"], r["cell"]))
    for rank, r in enumerate(ranked, 1):
        r["rank"] = rank
    best = ranked[0]
    best_cfg = config_with(base, best["params"])
    if out_dir:
        write_leaderboard(Path(out_dir) / "leaderboard.csv", ranked, sorted(grid.params))
        (Path(out_dir) / "best_config.json").write_text(json.dumps(best_cfg.to_dict(), indent=2), encoding="utf-8")
    return GridResult(best, best_cfg, ranked)


def write_leaderboard(path, ranked, keys):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "cell", *keys, "dev_ll", "epochs", "error"])
        for r in ranked:
            w.writerow([r["rank"], r["cell"], *[r["params"][k] for k in keys], r["dev_ll"], r["epochs"], r["error"]])
