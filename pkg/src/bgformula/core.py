"""Data model for discrete-time longitudinal survival data.

Rows are person-periods in long format.  A record at period ``t`` carries the
confounders ``L_t``, the treatment ``A_t``, and the two transition indicators
observed next: censoring ``C_{t+1}`` and then, if uncensored, the event
``Y_{t+1}``.
"""
from __future__ import annotations

import configparser
import csv
import io
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import MalformedRow, OrderingViolation, SchemaMismatch

BINARY = "binary"
CONTINUOUS = "continuous"
FIXED_COLUMNS = ("id", "t", "a", "c_next", "y_next")


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Covariate:
    name: str
    kind: str = CONTINUOUS
    tailoring: bool = False
    baseline_only: bool = False

    def __post_init__(self):
        if self.kind not in (BINARY, CONTINUOUS):
            raise SchemaMismatch(f"covariate {self.name!r}: unknown type {self.kind!r}")
        if self.tailoring and self.baseline_only:
            raise SchemaMismatch(f"covariate {self.name!r}: tailoring variables must be time-varying")


@dataclass(frozen=True)
class Schema:
    """Ordered covariate declarations.

    Time-varying covariates are populated on every record; baseline-only
    covariates only on the ``t = 0`` record (the baseline schema is the
    superset).
    """

    covariates: tuple[Covariate, ...]

    def __post_init__(self):
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise SchemaMismatch("duplicate covariate names")
        clash = set(names) & set(FIXED_COLUMNS)
        if clash:
            raise SchemaMismatch(f"covariate names clash with reserved columns: {sorted(clash)}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.covariates)

    @property
    def time_varying(self) -> tuple[Covariate, ...]:
        return tuple(c for c in self.covariates if not c.baseline_only)

    @property
    def baseline_only(self) -> tuple[Covariate, ...]:
        return tuple(c for c in self.covariates if c.baseline_only)

    @property
    def tailoring(self) -> tuple[Covariate, ...]:
        return tuple(c for c in self.covariates if c.tailoring)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @classmethod
    def from_ini(cls, source: str | os.PathLike) -> "Schema":
        """Parse a covariate schema from INI text or a path to an INI file.

        One section per covariate, in column order::

            [L2]
            type = continuous
            tailoring = true
            baseline_only = false
        """
        parser = configparser.ConfigParser()
        text = str(source)
        if "\n" not in text and os.path.exists(text):
            with open(text, encoding="utf-8") as fh:
                text = fh.read()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise SchemaMismatch(f"unreadable schema: {exc}") from exc
        covs = []
        for name in parser.sections():
            sec = parser[name]
            try:
                covs.append(Covariate(
                    name=name,
                    kind=sec.get("type", CONTINUOUS).strip().lower(),
                    tailoring=sec.getboolean("tailoring", False),
                    baseline_only=sec.getboolean("baseline_only", False),
                ))
            except ValueError as exc:
                raise SchemaMismatch(f"covariate {name!r}: {exc}") from exc
        return cls(tuple(covs))

    def to_ini(self) -> str:
        out = []
        for c in self.covariates:
            out.append(f"[{c.name}]\ntype = {c.kind}\ntailoring = {str(c.tailoring).lower()}\n"
                       f"baseline_only = {str(c.baseline_only).lower()}\n")
        return "\n".join(out)


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

class PersonPeriodRecord(NamedTuple):
    subject_id: str
    t: int
    covariates: tuple[float, ...]
    treatment: int
    censored_next: int
    event_next: int | None


class Panel(NamedTuple):
    """Wide view of a dataset: one slab per subject, NaN after follow-up ends."""

    row_subject: np.ndarray   # (n_rows,) subject index of each record
    row_t: np.ndarray         # (n_rows,) period of each record
    L: np.ndarray             # (n_subjects, T, p_time_varying)
    A: np.ndarray             # (n_subjects, T)
    static: np.ndarray        # (n_subjects, p_baseline_only)


@dataclass(frozen=True, eq=False)
class LongitudinalDataset:
    """Validated long-format person-period data.

    Construct with :meth:`from_arrays` or :func:`load_dataset`; the
    constructor itself does not validate.
    """

    ids: np.ndarray
    t: np.ndarray
    a: np.ndarray
    c_next: np.ndarray
    y_next: np.ndarray
    covariates: np.ndarray
    schema: Schema
    horizon: int
    _panel: list = field(default_factory=list, repr=False, compare=False)

    @classmethod
    def from_arrays(cls, ids, t, a, c_next, y_next, covariates, schema: Schema,
                    horizon: int | None = None) -> "LongitudinalDataset":
        ids = np.asarray([str(i) for i in ids], dtype=object)
        t = np.asarray(t)
        n = len(ids)
        covariates = np.asarray(covariates, dtype=float).reshape(n, len(schema.covariates))
        a = np.asarray(a, dtype=float)
        c_next = np.asarray(c_next, dtype=float)
        y_next = np.asarray(y_next, dtype=float)
        for name, arr in (("t", t), ("a", a), ("c_next", c_next), ("y_next", y_next)):
            if len(arr) != n:
                raise MalformedRow(f"column {name} has {len(arr)} entries, expected {n}")
        if n == 0:
            raise MalformedRow("dataset has no records")
        if not np.all(np.isfinite(np.asarray(t, dtype=float))) or np.any(np.asarray(t, float) % 1 != 0):
            raise MalformedRow("period index t must be integer")
        t = t.astype(np.int64)
        if np.any(t < 0):
            raise MalformedRow("period index t must be non-negative")
        for name, arr in (("a", a), ("c_next", c_next)):
            if not np.all(np.isin(arr, (0.0, 1.0))):
                raise MalformedRow(f"column {name} must be binary")
        ok_y = np.isnan(y_next) | np.isin(y_next, (0.0, 1.0))
        if not np.all(ok_y):
            raise MalformedRow("column y_next must be binary or missing")
        bad = np.flatnonzero((c_next == 1) != np.isnan(y_next))
        if len(bad):
            i = bad[0]
            raise MalformedRow(
                f"record {ids[i]}@t={t[i]}: y_next must be missing exactly when c_next = 1")

        # stable sort by subject (first appearance) then period
        _, first = np.unique(ids, return_index=True)
        order_of = {ids[i]: k for k, i in enumerate(sorted(first))}
        subj = np.array([order_of[i] for i in ids])
        perm = np.lexsort((t, subj))
        ids, t, a, c_next, y_next = ids[perm], t[perm], a[perm], c_next[perm], y_next[perm]
        covariates = covariates[perm]
        subj = subj[perm]

        T = int(t.max()) + 1 if horizon is None else int(horizon)
        if T < 1 or t.max() >= T:
            raise OrderingViolation(f"records extend beyond horizon {T}")
        _validate_trajectories(ids, subj, t, c_next, y_next, T)
        _validate_covariates(ids, t, covariates, schema)
        return cls(ids, t, a.astype(np.int8), c_next.astype(np.int8), y_next, covariates, schema, T)

    # -- basic views -------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return len(self.ids)

    @property
    def subjects(self) -> np.ndarray:
        return self.ids[self.t == 0]

    @property
    def n_subjects(self) -> int:
        return int(np.sum(self.t == 0))

    def records(self) -> Iterator[PersonPeriodRecord]:
        for i in range(self.n_rows):
            y = self.y_next[i]
            yield PersonPeriodRecord(
                str(self.ids[i]), int(self.t[i]), tuple(float(v) for v in self.covariates[i]),
                int(self.a[i]), int(self.c_next[i]), None if np.isnan(y) else int(y))

    def time_varying(self) -> np.ndarray:
        idx = [i for i, c in enumerate(self.schema.covariates) if not c.baseline_only]
        return self.covariates[:, idx]

    def panel(self) -> Panel:
        """Wide cubes used by every design-matrix builder (cached)."""
        if self._panel:
            return self._panel[0]
        row_subject = np.cumsum(self.t == 0) - 1
        n_s, T = self.n_subjects, self.horizon
        tv = self.time_varying()
        L = np.full((n_s, T, tv.shape[1]), np.nan)
        L[row_subject, self.t] = tv
        A = np.full((n_s, T), np.nan)
        A[row_subject, self.t] = self.a
        b_idx = [i for i, c in enumerate(self.schema.covariates) if c.baseline_only]
        static = self.covariates[self.t == 0][:, b_idx]
        p = Panel(row_subject, self.t.copy(), L, A, static)
        self._panel.append(p)
        return p

    def subset_subjects(self, subject_rows: np.ndarray, relabel: bool = True) -> "LongitudinalDataset":
        """Dataset made of the given subjects (by subject index, repeats allowed)."""
        panel = self.panel()
        starts = np.flatnonzero(self.t == 0)
        ends = np.append(starts[1:], self.n_rows)
        parts = [np.arange(starts[s], ends[s]) for s in subject_rows]
        rows = np.concatenate(parts)
        if relabel:
            ids = np.concatenate([np.full(len(p), f"b{k}", dtype=object) for k, p in enumerate(parts)])
        else:
            ids = self.ids[rows]
        del panel
        return LongitudinalDataset.from_arrays(
            ids, self.t[rows], self.a[rows], self.c_next[rows], self.y_next[rows],
            self.covariates[rows], self.schema, self.horizon)

    def summary(self) -> dict:
        last = np.append(np.flatnonzero(self.t == 0)[1:] - 1, self.n_rows - 1)
        ever_treated = np.maximum.reduceat(self.a, np.flatnonzero(self.t == 0))
        return {
            "subjects": self.n_subjects,
            "records": self.n_rows,
            "horizon": self.horizon,
            "censored": float(np.mean(self.c_next[last] == 1)),
            "events": float(np.mean(self.y_next[last] == 1)),
            "ever_treated": float(np.mean(ever_treated)),
        }


def _validate_trajectories(ids, subj, t, c_next, y_next, T):
    starts = np.flatnonzero(np.diff(subj, prepend=-1) != 0)
    ends = np.append(starts[1:], len(subj))
    for s, e in zip(starts, ends):
        tt = t[s:e]
        if not np.array_equal(tt, np.arange(e - s)):
            raise OrderingViolation(f"subject {ids[s]}: periods must run 0..k without gaps or repeats")
        terminal = (c_next[s:e] == 1) | (y_next[s:e] == 1)
        if np.any(terminal[:-1]):
            k = int(np.argmax(terminal))
            raise OrderingViolation(
                f"subject {ids[s]}: record at t={tt[k] + 1} follows a terminal event or censoring")
        if not terminal[-1] and tt[-1] != T - 1:
            raise OrderingViolation(
                f"subject {ids[s]}: follow-up ends at t={tt[-1]} without event or censoring")


def _validate_covariates(ids, t, cov, schema: Schema):
    base = t == 0
    for j, c in enumerate(schema.covariates):
        col = cov[:, j]
        if c.baseline_only:
            if np.any(np.isnan(col[base])):
                raise SchemaMismatch(f"baseline covariate {c.name} missing at t=0")
            if np.any(~np.isnan(col[~base])):
                raise SchemaMismatch(f"baseline-only covariate {c.name} populated after t=0")
            vals = col[base]
        else:
            if np.any(np.isnan(col)):
                i = int(np.flatnonzero(np.isnan(col))[0])
                raise MalformedRow(f"record {ids[i]}@t={t[i]}: covariate {c.name} missing")
            vals = col
        if c.kind == BINARY and not np.all(np.isin(vals, (0.0, 1.0))):
            raise MalformedRow(f"binary covariate {c.name} has non-binary values")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _parse_float(text: str, what: str, line: int) -> float:
    text = text.strip()
    if text == "":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise MalformedRow(f"line {line}: non-numeric {what} {text!r}") from None


def load_dataset(source, schema: Schema, horizon: int | None = None) -> LongitudinalDataset:
    """Read long-format CSV (bytes, text, path or file object) into a dataset."""
    if isinstance(source, bytes):
        fh = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, encoding="utf-8", newline="") as f:
            fh = io.StringIO(f.read())
    elif isinstance(source, str):
        fh = io.StringIO(source)
    else:
        fh = source
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MalformedRow("empty CSV") from None
    if tuple(header[:5]) != FIXED_COLUMNS:
        raise SchemaMismatch(f"CSV must start with columns {','.join(FIXED_COLUMNS)}")
    cov_cols = header[5:]
    if sorted(cov_cols) != sorted(schema.names):
        raise SchemaMismatch(f"CSV covariates {cov_cols} do not match schema {list(schema.names)}")
    pos = [cov_cols.index(n) + 5 for n in schema.names]

    ids, ts, a, c, y, cov = [], [], [], [], [], []
    for line, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(header):
            raise MalformedRow(f"line {line}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0].strip())
        tv = _parse_float(row[1], "t", line)
        if np.isnan(tv):
            raise MalformedRow(f"line {line}: missing t")
        ts.append(tv)
        for dest, k, name in ((a, 2, "a"), (c, 3, "c_next")):
            v = _parse_float(row[k], name, line)
            if np.isnan(v):
                raise MalformedRow(f"line {line}: missing {name}")
            dest.append(v)
        y.append(_parse_float(row[4], "y_next", line))
        cov.append([_parse_float(row[k], header[k], line) for k in pos])
    return LongitudinalDataset.from_arrays(
        ids, np.asarray(ts), a, c, y, np.asarray(cov, dtype=float).reshape(len(ids), len(pos)),
        schema, horizon)


def _fmt(v: float, kind: str) -> str:
    if np.isnan(v):
        return ""
    if kind == BINARY:
        return str(int(v))
    return repr(float(v))


def write_dataset(data: LongitudinalDataset, dest=None) -> str:
    """Write ``data`` in the long CSV format; returns the text (and writes ``dest`` if given)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(FIXED_COLUMNS) + list(data.schema.names))
    kinds = [c.kind for c in data.schema.covariates]
    for i in range(data.n_rows):
        y = data.y_next[i]
        w.writerow([data.ids[i], int(data.t[i]), int(data.a[i]), int(data.c_next[i]),
                    "" if np.isnan(y) else int(y)]
                   + [_fmt(v, k) for v, k in zip(data.covariates[i], kinds)])
    text = buf.getvalue()
    if dest is not None:
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    return text


# ---------------------------------------------------------------------------
# treatment regimes
# ---------------------------------------------------------------------------
# Batched signatures: h_hist has shape (K, t+1, n_tailoring), a_hist (K, t),
# u (K,).  The current period is t = a_hist.shape[1].

@dataclass(frozen=True)
class DeterministicStatic:
    sequence: tuple[int, ...]
    name: str = "static"

    deterministic = True
    static = True

    def __post_init__(self):
        object.__setattr__(self, "sequence", tuple(int(a) for a in self.sequence))
        if any(a not in (0, 1) for a in self.sequence):
            raise ValueError("static regime entries must be 0 or 1")

    def assign_batch(self, h_hist, a_hist, u):
        t = a_hist.shape[1]
        if t >= len(self.sequence):
            raise ValueError(f"static regime {self.name} has no entry for period {t}")
        return np.full(len(u), self.sequence[t], dtype=np.int8)


@dataclass(frozen=True)
class DeterministicDynamic:
    rule: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "dynamic"

    deterministic = True
    static = False

    def assign_batch(self, h_hist, a_hist, u):
        return np.asarray(self.rule(h_hist, a_hist), dtype=bool).astype(np.int8)


@dataclass(frozen=True)
class RandomRegime:
    probability: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "random"
    static: bool = False

    deterministic = False

    def treat_probability(self, h_hist, a_hist):
        p = np.broadcast_to(np.asarray(self.probability(h_hist, a_hist), dtype=float),
                            (h_hist.shape[0],))
        if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
            raise ValueError(f"regime {self.name} produced probabilities outside [0, 1]")
        return p

    def assign_batch(self, h_hist, a_hist, u):
        return (u < self.treat_probability(h_hist, a_hist)).astype(np.int8)


TreatmentRegime = DeterministicStatic | DeterministicDynamic | RandomRegime


def regime_assign(regime, h_hist, a_hist, u: float = 0.0) -> int:
    """Treatment for one subject at period ``t = len(a_hist)``.

    ``h_hist`` holds the tailoring values for periods ``0..t`` (shape
    ``(t+1,)`` for one tailoring variable or ``(t+1, n_h)``).
    """
    a_hist = np.asarray(a_hist, dtype=float).reshape(1, -1)
    h = np.asarray(h_hist, dtype=float)
    t = a_hist.shape[1]
    if h.ndim <= 1:
        h = h.reshape(t + 1, -1) if h.size else np.zeros((t + 1, 0))
    if h.shape[0] != t + 1:
        raise ValueError(f"tailoring history has {h.shape[0]} periods, expected {t + 1}")
    return int(regime.assign_batch(h[None], a_hist, np.array([u]))[0])


def always_treat(T: int) -> DeterministicStatic:
    return DeterministicStatic((1,) * T, name="always")


def never_treat(T: int) -> DeterministicStatic:
    return DeterministicStatic((0,) * T, name="never")


def threshold_rule(tailoring_index: int, cut: float, absorbing: bool = True,
                   name: str | None = None) -> DeterministicDynamic:
    """Treat when the tailoring variable exceeds ``cut`` (and stay treated if absorbing)."""

    def rule(h, a):
        now = h[:, -1, tailoring_index] > cut
        if absorbing and a.shape[1]:
            now = now | (a[:, -1] == 1)
        return now

    return DeterministicDynamic(rule, name=name or f"threshold[{tailoring_index}]>{cut}")


def point_mass(regime: DeterministicStatic | DeterministicDynamic) -> RandomRegime:
    """The random-regime form of a deterministic rule (probabilities in {0, 1})."""

    def prob(h, a):
        u = np.zeros(h.shape[0])
        return regime.assign_batch(h, a, u).astype(float)

    return RandomRegime(prob, name=f"pm-{regime.name}", static=regime.static)


def parse_regime(text: str, schema: Schema, horizon: int, name: str | None = None):
    """Build a regime from a short textual form.

    ``always`` | ``never`` | ``static:0,1,1`` | ``threshold:L2:0.2`` |
    ``random:0.5``.
    """
    text = text.strip()
    kind, _, arg = text.partition(":")
    kind = kind.lower()
    if kind == "always":
        return replace(always_treat(horizon), name=name or "always")
    if kind == "never":
        return replace(never_treat(horizon), name=name or "never")
    if kind == "static":
        seq = tuple(int(x) for x in arg.split(","))
        if len(seq) != horizon:
            raise ValueError(f"static regime {text!r} needs {horizon} entries")
        return DeterministicStatic(seq, name=name or "static-" + "".join(map(str, seq)))
    if kind == "threshold":
        var, _, cut = arg.partition(":")
        tail = [c.name for c in schema.tailoring]
        if var not in tail:
            raise ValueError(f"threshold regime needs a tailoring variable, got {var!r}")
        return threshold_rule(tail.index(var), float(cut), name=name or f"{var}>{cut}")
    if kind == "random":
        p = float(arg)
        if not 0 <= p <= 1:
            raise ValueError("random regime probability must lie in [0, 1]")
        return RandomRegime(lambda h, a: np.full(h.shape[0], p), name=name or f"random-{p}",
                            static=True)
    raise ValueError(f"unknown regime {text!r}")


# ---------------------------------------------------------------------------
# history featurizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HistoryFeaturizer:
    """Parsimonious fixed-width summary of a per-period series.

    Output for a series ending at period ``t``: the cumulative sum over
    periods ``<= t - order`` (when ``cumulate``), then the last ``order``
    values, most recent first, then a one-hot period block.  Periods before
    0 are padded with zeros.
    """

    order: int = 1
    cumulate: bool = False
    include_period_indicator: bool = True
    n_periods: int | None = None

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("dependence order must be >= 1")

    def bind(self, n_periods: int) -> "HistoryFeaturizer":
        return self if self.n_periods == n_periods else replace(self, n_periods=n_periods)

    def history_width(self, m: int) -> int:
        return m * (self.order + int(self.cumulate))

    def period_width(self) -> int:
        if not self.include_period_indicator:
            return 0
        if self.n_periods is None:
            raise ValueError("featurizer needs n_periods for the period indicator block")
        return self.n_periods

    def history(self, cube: np.ndarray, unit: np.ndarray, t: np.ndarray | int) -> np.ndarray:
        """History block for ``cube[unit]`` evaluated at current period ``t`` (``-1`` = empty)."""
        cube = np.asarray(cube, dtype=float)
        if cube.ndim == 2:
            cube = cube[:, :, None]
        unit = np.asarray(unit)
        t = np.broadcast_to(np.asarray(t), unit.shape)
        m = cube.shape[2]
        blocks = []
        if self.cumulate:
            old = t - self.order
            cs = np.cumsum(np.nan_to_num(cube[unit]), axis=1)
            take = np.clip(old, 0, cube.shape[1] - 1)
            val = cs[np.arange(len(unit)), take]
            blocks.append(np.where((old >= 0)[:, None], val, 0.0))
        for lag in range(self.order):
            s = t - lag
            val = cube[unit, np.clip(s, 0, cube.shape[1] - 1)]
            blocks.append(np.where((s >= 0)[:, None], val, 0.0))
        if not blocks:
            return np.zeros((len(unit), 0))
        return np.concatenate(blocks, axis=1).reshape(len(unit), -1) if m else np.zeros((len(unit), 0))

    def period_block(self, t: np.ndarray | int, n: int | None = None) -> np.ndarray:
        t = np.asarray(t)
        if n is not None:
            t = np.broadcast_to(t, (n,))
        width = self.period_width()
        out = np.zeros((t.size, width))
        if width:
            out[np.arange(t.size), t.ravel()] = 1.0
        return out


def featurize_history(f: HistoryFeaturizer, series: Sequence) -> np.ndarray:
    """Feature vector for a single series ``v_0..v_t`` (scalars or vectors)."""
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    t = arr.shape[0] - 1
    if t < 0:
        raise ValueError("series must be non-empty")
    out = f.history(arr[None], np.array([0]), t)[0]
    if f.include_period_indicator:
        out = np.concatenate([out, f.period_block(t, 1)[0]])
    return out
