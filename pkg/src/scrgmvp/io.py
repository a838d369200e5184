"""CSV formats, configuration files, prices to returns, and run manifests.

Returns/prices CSV: header ``date,TICKER1,...,TICKERM``, one row per period.
Floats are written with 17 significant digits so a write/read round trip
is exact and repeated runs produce byte-identical files.
"""

from __future__ import annotations

import configparser
import csv
import datetime as _dt
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .experiments import RiskRecord, SummaryRow
from .sampling import ReturnsMatrix
from .spiked_model import SpikedCovariance, canonical_model

RECORD_HEADER = ("estimator", "M", "n", "rep", "seed", "risk", "phi1", "phi2", "gamma1", "gamma2")
SUMMARY_HEADER = ("estimator", "n", "mean_risk", "stderr", "reps")


def fmt(x: float | None) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


# -- price and return panels ---------------------------------------------------


@dataclass(frozen=True)
class PricePanel:
    dates: tuple[str, ...]
    prices: np.ndarray
    tickers: tuple[str, ...]

    def __post_init__(self) -> None:
        p = np.array(self.prices, dtype=float)
        if p.ndim != 2 or p.shape != (len(self.dates), len(self.tickers)):
            raise DataError("price matrix shape does not match dates x tickers")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise DataError("prices must be finite and strictly positive")
        parsed = [_parse_date(d) for d in self.dates]
        if any(b <= a for a, b in zip(parsed, parsed[1:])):
            raise DataError("dates must be strictly increasing")
        p.setflags(write=False)
        object.__setattr__(self, "prices", p)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))


def _parse_date(text: str) -> _dt.date:
    try:
        return _dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise DataError(f"bad date {text!r}; expected YYYY-MM-DD") from exc


def _read_panel_csv(path: str | Path) -> tuple[tuple[str, ...], np.ndarray, tuple[str, ...]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0].strip().lower() != "date":
        raise DataError(f"{path}: header must start with 'date'")
    tickers = tuple(t.strip() for t in rows[0][1:])
    if not tickers:
        raise DataError(f"{path}: no asset columns")
    dates, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(tickers) + 1:
            raise DataError(f"{path}:{lineno}: expected {len(tickers) + 1} fields, got {len(row)}")
        dates.append(row[0].strip())
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return tuple(dates), np.array(values, dtype=float).reshape(len(dates), len(tickers)), tickers


def _write_panel_csv(handle: IO[str], dates, data: np.ndarray, tickers) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(["date", *tickers])
    for d, row in zip(dates, data):
        writer.writerow([d, *(fmt(v) for v in row)])


def read_prices(path: str | Path) -> PricePanel:
    dates, prices, tickers = _read_panel_csv(path)
    return PricePanel(dates, prices, tickers)


def read_returns(path: str | Path) -> ReturnsMatrix:
    dates, data, tickers = _read_panel_csv(path)
    return ReturnsMatrix(data, tickers, dates)


def write_returns(returns: ReturnsMatrix, path_or_handle) -> None:
    labels = returns.labels or tuple(f"A{i + 1:04d}" for i in range(returns.dim))
    dates = returns.dates or synthetic_dates(returns.n)
    _with_handle(path_or_handle, lambda fh: _write_panel_csv(fh, dates, returns.data, labels))


def write_prices(panel: PricePanel, path_or_handle) -> None:
    _with_handle(path_or_handle, lambda fh: _write_panel_csv(fh, panel.dates, panel.prices, panel.tickers))


def synthetic_dates(n: int, start: str = "2006-10-06") -> tuple[str, ...]:
    """Weekly ISO dates, used when a panel has no calendar of its own."""
    d0 = _dt.date.fromisoformat(start)
    return tuple((d0 + _dt.timedelta(weeks=k)).isoformat() for k in range(n))


def log_returns(panel: PricePanel) -> ReturnsMatrix:
    """Per-asset log returns ln(p_t / p_{t-1}); one row fewer than the prices."""
    if len(panel.dates) < 2:
        raise DataError("need at least two price rows")
    p = panel.prices
    r = np.log(p[1:] / p[:-1])
    if r.shape[0] < 2:
        raise DataError("need at least three price rows to form a returns panel")
    return ReturnsMatrix(r, panel.tickers, panel.dates[1:])


def subset_columns(returns: ReturnsMatrix, k: int, seed) -> ReturnsMatrix:
    """k assets sampled uniformly without replacement, kept in original order."""
    if not 1 <= k <= returns.dim:
        raise ConfigError(f"cannot select {k} of {returns.dim} assets")
    if k == returns.dim:
        return returns
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(returns.dim, size=k, replace=False))
    return returns.columns(idx.tolist())


# -- experiment outputs --------------------------------------------------------


def _with_handle(path_or_handle, fn) -> None:
    if hasattr(path_or_handle, "write"):
        fn(path_or_handle)
        return
    path = Path(path_or_handle)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fn(fh)


def write_records(records: Iterable[RiskRecord], path_or_handle) -> None:
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        for r in records:
            w.writerow(
                [r.estimator, r.M, r.n, r.rep, r.seed, fmt(r.risk),
                 fmt(r.phi1), fmt(r.phi2), fmt(r.gamma1), fmt(r.gamma2)]
            )

    _with_handle(path_or_handle, write)


def read_records(path: str | Path) -> list[RiskRecord]:
    def opt(v: str) -> float | None:
        return float(v) if v != "" else None

    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [
            RiskRecord(
                row["estimator"], int(row["M"]), int(row["n"]), int(row["rep"]), int(row["seed"]),
                float(row["risk"]), opt(row["phi1"]), opt(row["phi2"]), opt(row["gamma1"]), opt(row["gamma2"]),
            )
            for row in reader
        ]


def write_summary(rows: Iterable[SummaryRow], path_or_handle) -> None:
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in rows:
            w.writerow([s.estimator, s.n, fmt(s.mean_risk), fmt(s.stderr), s.reps])

    _with_handle(path_or_handle, write)


# -- configuration -------------------------------------------------------------


def parse_n_grid(text: str) -> tuple[int, ...]:
    """``lo:hi:step`` (inclusive of hi when on the lattice) or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            lo, hi, step = parts
            if step <= 0 or hi < lo:
                raise ValueError
            return tuple(range(lo, hi + 1, step))
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"bad n-grid {text!r}; expected lo:hi:step or a comma list") from None


def parse_spike_list(text: str) -> tuple[tuple[int, float], ...]:
    """``1:20, 2:10, -1:-0.99`` -> ((1, 20.0), (2, 10.0), (-1, -0.99))."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            idx, lam = item.split(":")
            out.append((int(idx), float(lam)))
        except ValueError:
            raise ConfigError(f"bad spike entry {item!r}; expected index:lambda") from None
    return tuple(out)


def parse_spike_counts(text: str) -> tuple[int, int] | None:
    text = text.strip().lower()
    if text in ("auto", "detect"):
        return None
    try:
        r1, r2 = (int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"bad spike counts {text!r}; expected r1,r2 or auto") from None
    if r1 < 0 or r2 < 0:
        raise ConfigError("spike counts must be >= 0")
    return r1, r2


def model_from_settings(settings: dict[str, str], dim: int) -> SpikedCovariance:
    vectors = settings.get("vectors", "canonical-basis").strip()
    if vectors != "canonical-basis":
        raise ConfigError(f"unsupported vector preset {vectors!r}")
    spikes = parse_spike_list(settings.get("spikes", "1:20, 2:10, 3:5, -1:-0.99"))
    try:
        sigma2 = float(settings.get("sigma2", "1.0"))
    except ValueError:
        raise ConfigError("sigma2 must be a number") from None
    return canonical_model(dim, spikes, sigma2)


def read_config(path: str | Path) -> dict[str, dict[str, str]]:
    """Flat ``key = value`` file with ``[model]``, ``[experiment]`` and ``[io]`` sections."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = lambda s: s.strip().lower().replace("-", "_")
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    unknown = set(parser.sections()) - {"model", "experiment", "io"}
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return {s: dict(parser.items(s)) for s in parser.sections()}


def write_manifest(sections: dict[str, dict[str, object]], path_or_handle) -> None:
    """Echo a resolved configuration as an INI-style text file.

    Values are stored as their ``str``; keys are written in sorted order.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name in sorted(sections):
        parser[name] = {k: _manifest_value(v) for k, v in sorted(sections[name].items())}
    _with_handle(path_or_handle, parser.write)


def _manifest_value(v: object) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return fmt(v)
    if isinstance(v, (tuple, list)):
        return ",".join(_manifest_value(x) for x in v)
    return str(v)


def read_manifest(path: str | Path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read(Path(path), encoding="utf-8")
    return {s: dict(parser.items(s)) for s in parser.sections()}


def estimator_list(text: str | Sequence[str]) -> tuple[str, ...]:
    if isinstance(text, str):
        return tuple(t.strip().lower() for t in text.split(",") if t.strip())
    return tuple(text)
