"""File formats: CSV for distributions and reports, TSV corpora, JSON summaries.

All CSV files are UTF-8 with a header row and '.' decimal separators; floats
are written with shortest round-trip precision so byte-identical reruns imply
identical numbers.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .dists import BinnedJoint, Grid, Marginal, SelectionFunction
from .errors import FormatError
from .sentiment import CorpusRecord, Lexicon

MARGINAL_HEADER = ["bin_lo", "bin_hi", "mass"]
SELECTION_HEADER = ["bin_lo", "bin_hi", "category", "prob"]
JOINT_HEADER = ["bin_lo", "bin_hi", "category", "mass"]
REPLICAS_HEADER = ["replica", "estimator", "error", "converged"]
LEXICON_HEADER = ["word", "score"]

_EDGE_RTOL = 1e-9


def _fmt(x: float) -> str:
    return repr(float(x))


def _open_read(path):
    return open(path, "r", encoding="utf-8", newline="")


def _open_write(path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _check_header(row, expected, path) -> None:
    if row is None or [c.strip() for c in row] != expected:
        raise FormatError(f"{path}: expected header {','.join(expected)!r}")


def _edges_from_rows(lows: list[float], highs: list[float], path) -> np.ndarray:
    for i in range(len(lows) - 1):
        gap = abs(lows[i + 1] - highs[i])
        if gap > _EDGE_RTOL * max(1.0, abs(highs[i])):
            raise FormatError(f"{path}: bins must be contiguous (row {i + 2})")
    return np.array(lows + [highs[-1]])


def write_marginal_csv(marginal: Marginal, path) -> None:
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(MARGINAL_HEADER)
        for lo, hi, mass in zip(marginal.edges[:-1], marginal.edges[1:], marginal.mass):
            w.writerow([_fmt(lo), _fmt(hi), _fmt(mass)])


def read_marginal_csv(path) -> Marginal:
    with _open_read(path) as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    _check_header(rows[0], MARGINAL_HEADER, path)
    try:
        lows = [float(r[0]) for r in rows[1:]]
        highs = [float(r[1]) for r in rows[1:]]
        mass = [float(r[2]) for r in rows[1:]]
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed row ({exc})") from exc
    if not lows:
        raise FormatError(f"{path}: no data rows")
    return Marginal(_edges_from_rows(lows, highs, path), mass)


def _write_grid_table(path, header, grid_edges, table) -> None:
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(header)
        for i, (lo, hi) in enumerate(zip(grid_edges[:-1], grid_edges[1:])):
            for s in range(table.shape[1]):
                w.writerow([_fmt(lo), _fmt(hi), str(s), _fmt(table[i, s])])


def _read_grid_table(path, header) -> tuple[np.ndarray, np.ndarray]:
    with _open_read(path) as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    _check_header(rows[0], header, path)
    try:
        parsed = [(float(r[0]), float(r[1]), int(r[2]), float(r[3])) for r in rows[1:]]
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed row ({exc})") from exc
    if not parsed:
        raise FormatError(f"{path}: no data rows")
    categories = sorted({p[2] for p in parsed})
    if categories != list(range(len(categories))):
        raise FormatError(f"{path}: categories must be 0..n-1")
    cells: dict[tuple[float, float, int], float] = {}
    row_keys: list[tuple[float, float]] = []
    for lo, hi, s, value in parsed:
        if (lo, hi) not in row_keys:
            row_keys.append((lo, hi))
        if (lo, hi, s) in cells:
            raise FormatError(f"{path}: duplicate cell ({lo}, {hi}, {s})")
        cells[(lo, hi, s)] = value
    row_keys.sort()
    lows = [k[0] for k in row_keys]
    highs = [k[1] for k in row_keys]
    edges = _edges_from_rows(lows, highs, path)
    table = np.empty((len(row_keys), len(categories)))
    for i, key in enumerate(row_keys):
        for s in range(len(categories)):
            if (key[0], key[1], s) not in cells:
                raise FormatError(f"{path}: missing cell for bin {key}, category {s}")
            table[i, s] = cells[(key[0], key[1], s)]
    return edges, table


def write_selection_csv(sel: SelectionFunction, path) -> None:
    _write_grid_table(path, SELECTION_HEADER, sel.grid.edges, sel.prob)


def read_selection_csv(path) -> SelectionFunction:
    edges, table = _read_grid_table(path, SELECTION_HEADER)
    return SelectionFunction(Grid(edges, table.shape[1]), table)


def write_joint_csv(joint: BinnedJoint, path) -> None:
    _write_grid_table(path, JOINT_HEADER, joint.grid.edges, joint.mass)


def read_joint_csv(path) -> BinnedJoint:
    edges, table = _read_grid_table(path, JOINT_HEADER)
    return BinnedJoint(Grid(edges, table.shape[1]), table)


def write_lexicon_csv(lexicon: Lexicon, path) -> None:
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(LEXICON_HEADER)
        for word in sorted(lexicon.scores):
            w.writerow([word, _fmt(lexicon.scores[word])])


def read_lexicon_csv(path) -> Lexicon:
    """Lexicon CSV ``word,score``; the header row is optional."""
    scores: dict[str, float] = {}
    with _open_read(path) as fh:
        for n, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if n == 1 and [c.strip().lower() for c in row] == LEXICON_HEADER:
                continue
            if len(row) < 2:
                raise FormatError(f"{path}: line {n}: expected word,score")
            try:
                scores[row[0]] = float(row[1])
            except ValueError as exc:
                raise FormatError(f"{path}: line {n}: bad score {row[1]!r}") from exc
    if not scores:
        raise FormatError(f"{path}: no lexicon entries")
    try:
        return Lexicon(scores)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_corpus_tsv(records, path) -> None:
    with _open_write(path) as fh:
        for record in records:
            fh.write(f"{record.doc_id}\t{record.user_id}\t{record.text}\n")


def read_corpus_tsv(path) -> list[CorpusRecord]:
    """One record per line: ``doc_id<TAB>user_id<TAB>text``."""
    records: list[CorpusRecord] = []
    with _open_read(path) as fh:
        for n, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t", 2)
            if len(parts) != 3:
                raise FormatError(f"{path}: line {n}: expected doc_id<TAB>user_id<TAB>text")
            records.append(CorpusRecord(*parts))
    if not records:
        raise FormatError(f"{path}: no corpus records")
    return records


def write_replicas_csv(report, path) -> None:
    """Per-replica error table: ``replica,estimator,error,converged``."""
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(REPLICAS_HEADER)
        for index in range(report.n_replicas):
            for name in report.estimators:
                err = report.errors[name][index]
                w.writerow(
                    [
                        str(index),
                        name,
                        _fmt(err) if np.isfinite(err) else "nan",
                        "true" if report.converged[name][index] else "false",
                    ]
                )


def write_scored_csv(scored, path) -> None:
    """Scored corpus: ``doc_id,user_id,matched_words,score``."""
    with _open_write(path) as fh:
        w = _writer(fh)
        w.writerow(["doc_id", "user_id", "matched_words", "score"])
        for doc in scored:
            w.writerow([doc.doc_id, doc.user_id, str(doc.matched_word_count), _fmt(doc.score)])


def write_json(obj, path) -> None:
    with _open_write(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
