"""BIC computation and grid scans over group counts and scale families."""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .em import FitOptions, FitReport, MixtureModel, fit
from .mda import as_batch
from .parsimony import ScaleModel, free_params

_TIE_TOL = 1e-9
_FAMILY_ORDINAL = {m: i for i, m in enumerate(ScaleModel)}


def bic(loglik: float, rho: int, n_obs: int) -> float:
    """Bayesian information criterion, 2*loglik - rho*log(N); larger is better."""
    if not np.isfinite(loglik):
        raise ValueError("loglik must be finite")
    if n_obs < 1:
        raise ValueError("n_obs must be >= 1")
    return 2.0 * float(loglik) - float(rho) * float(np.log(n_obs))


@dataclass(frozen=True)
class ScanGrid:
    """Candidate group counts, per-dimension family lists, and fit options."""

    groups: tuple[int, ...]
    spec_candidates: tuple[tuple[ScaleModel, ...], ...]
    options: FitOptions = FitOptions()

    def __post_init__(self):
        groups = tuple(int(g) for g in self.groups)
        if not groups or any(g < 1 for g in groups):
            raise ValueError("groups must be a nonempty sequence of positive ints")
        cands = tuple(
            tuple(ScaleModel(s) for s in dim_list) for dim_list in self.spec_candidates
        )
        if not cands or any(not c for c in cands):
            raise ValueError("every dimension needs a nonempty candidate list")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "spec_candidates", cands)

    def cells(self):
        """(G, specs) combinations in canonical order."""
        for g in self.groups:
            for combo in itertools.product(*self.spec_candidates):
                yield g, combo


@dataclass
class ScanRow:
    """Outcome of one (G, specs) cell."""

    g: int
    specs: tuple[ScaleModel, ...]
    loglik: float | None
    rho: int
    bic: float | None
    converged: bool
    n_singular_events: int
    error: str | None = None
    model: MixtureModel | None = None
    report: FitReport | None = None

    @property
    def selectable(self) -> bool:
        return self.error is None and self.converged and self.bic is not None


@dataclass
class ScanResult:
    rows: list[ScanRow]
    best: ScanRow | None


def _cell_seed(base_seed, g: int, specs: Sequence[ScaleModel]) -> tuple[int, ...]:
    base = (base_seed,) if isinstance(base_seed, int) else tuple(base_seed)
    return base + (104729, g) + tuple(_FAMILY_ORDINAL[s] for s in specs)


def _run_cell(args) -> ScanRow:
    batch, g, specs, options, keep_models = args
    dims = batch.shape[1:]
    rho = free_params(specs, g, dims).total
    try:
        model, report = fit(batch, g, specs=specs, options=options)
    except Exception as exc:  # failed cells are recorded, never selected
        return ScanRow(
            g=g, specs=specs, loglik=None, rho=rho, bic=None,
            converged=False, n_singular_events=0, error=f"{type(exc).__name__}: {exc}",
        )
    return ScanRow(
        g=g,
        specs=specs,
        loglik=report.loglik,
        rho=report.rho,
        bic=report.bic,
        converged=report.converged,
        n_singular_events=len(report.singular_events),
        model=model if keep_models else None,
        report=report if keep_models else None,
    )


def _prefer(candidate: ScanRow, incumbent: ScanRow | None) -> bool:
    """Larger BIC wins; near-ties go to smaller rho, then smaller G."""
    if incumbent is None:
        return True
    gap = candidate.bic - incumbent.bic
    if gap > _TIE_TOL:
        return True
    if gap < -_TIE_TOL:
        return False
    if candidate.rho != incumbent.rho:
        return candidate.rho < incumbent.rho
    return candidate.g < incumbent.g


def scan(data, grid: ScanGrid, threads: int = 1, keep_models: bool = False) -> ScanResult:
    """Fit every (G, specs) cell of the grid and pick the BIC winner.

    Each cell runs with a seed derived deterministically from the grid
    options' base seed, G, and the family encoding, so the outcome is a pure
    function of (data, grid) regardless of ``threads``.  Cells that raise
    (degenerate G, collapsed components, ...) are recorded as failed rows.
    """
    batch = as_batch(data)
    tasks = [
        (batch, g, specs, replace(grid.options, seed=_cell_seed(grid.options.seed, g, specs)), keep_models)
        for g, specs in grid.cells()
    ]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_cell, tasks))
    else:
        rows = [_run_cell(t) for t in tasks]
    best = None
    for row in rows:
        if row.selectable and _prefer(row, best):
            best = row
    return ScanResult(rows=rows, best=best)


def write_bic_table(result: ScanResult, path) -> None:
    """Emit the scan rows as CSV: G, spec_d1.., loglik, rho, bic, converged, singular_events."""
    if not result.rows:
        raise ValueError("empty scan result")
    d = len(result.rows[0].specs)
    header = ["G"] + [f"spec_d{i + 1}" for i in range(d)] + [
        "loglik", "rho", "bic", "converged", "singular_events",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in result.rows:
            writer.writerow(
                [row.g]
                + [s.value for s in row.specs]
                + [
                    "" if row.loglik is None else repr(row.loglik),
                    row.rho,
                    "" if row.bic is None else repr(row.bic),
                    str(row.converged).lower(),
                    row.n_singular_events,
                ]
            )


__all__ = ["ScanGrid", "ScanResult", "ScanRow", "bic", "scan", "write_bic_table"]
