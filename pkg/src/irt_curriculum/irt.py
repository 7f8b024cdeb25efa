"""One-parameter-logistic (Rasch) model core.

Pure math for the 1PL model -- correct-response probability, joint binary
log-likelihood over a response matrix, and grading of predictions -- plus
the response-matrix container and its file formats (dense CSV, long JSONL,
difficulty CSV).
"""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

# Default ability bounds; difficulties on these scales rarely leave [-3, 3].
THETA_MIN = -4.0
THETA_MAX = 4.0

_ONE_BELOW_1 = math.nextafter(1.0, 0.0)


def response_probability(theta: float, b: float) -> float:
    """P(correct | theta, b) = 1 / (1 + exp(-(theta - b))), overflow-safe.

    Strictly inside (0, 1) even for very large |theta - b|.
    """
    if not (math.isfinite(theta) and math.isfinite(b)):
        raise ValueError(f"theta and b must be finite, got theta={theta}, b={b}")
    x = theta - b
    if x >= 0:
        p = 1.0 / (1.0 + math.exp(-x))
    else:
        e = math.exp(x)
        p = e / (1.0 + e)
    # keep strictly inside (0, 1) even where exp() saturates
    return min(max(p, 5e-324), _ONE_BELOW_1)


def sigmoid(x):
    """Vectorized stable logistic function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def grade_responses(predicted, gold) -> np.ndarray:
    """1 where predicted label equals gold, else 0. Labels are opaque tokens."""
    pred = np.asarray(predicted)
    truth = np.asarray(gold)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(
            f"predicted and gold must be equal-length vectors, "
            f"got shapes {pred.shape} and {truth.shape}"
        )
    return (pred == truth).astype(np.int8)


@dataclass(frozen=True)
class ItemParams:
    """Per-item difficulty on the logit scale, aligned with item_ids."""

    item_ids: tuple
    difficulty: np.ndarray

    def __post_init__(self):
        diff = np.asarray(self.difficulty, dtype=float)
        object.__setattr__(self, "difficulty", diff)
        if len(self.item_ids) != diff.shape[0]:
            raise ValueError("one difficulty per item_id required")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise ValueError("item_ids must be unique")
        if not np.all(np.isfinite(diff)):
            raise ValueError("difficulties must be finite")


@dataclass(frozen=True)
class AbilityEstimate:
    """MLE ability with a flag marking estimates clamped at a bound."""

    theta: float
    clamped: bool


class ResponseMatrix:
    """Binary graded responses of n_models x n_items, stored long-form.

    Cells are 0/1; missing cells are simply absent (sparse crowds are legal,
    every stored value must still be 0 or 1).
    """

    def __init__(self, model_ids, item_ids, model_idx, item_idx, values):
        self.model_ids = tuple(model_ids)
        self.item_ids = tuple(item_ids)
        self.model_idx = np.asarray(model_idx, dtype=np.int64)
        self.item_idx = np.asarray(item_idx, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.int8)
        self._validate()

    def _validate(self):
        if len(self.model_ids) < 1 or len(self.item_ids) < 1:
            raise ValueError("response matrix needs at least one model and one item")
        if len(set(self.model_ids)) != len(self.model_ids):
            raise ValueError("model_ids must be unique")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise ValueError("item_ids must be unique")
        n = self.values.shape[0]
        if self.model_idx.shape != (n,) or self.item_idx.shape != (n,):
            raise ValueError("model_idx, item_idx, values must be aligned vectors")
        if n == 0:
            raise ValueError("response matrix has no observed cells")
        if self.model_idx.min() < 0 or self.model_idx.max() >= len(self.model_ids):
            raise ValueError("model_idx out of range")
        if self.item_idx.min() < 0 or self.item_idx.max() >= len(self.item_ids):
            raise ValueError("item_idx out of range")
        bad = ~np.isin(self.values, (0, 1))
        if bad.any():
            raise ValueError(f"responses must be 0 or 1, got {self.values[bad][:5]}")
        flat = self.model_idx * len(self.item_ids) + self.item_idx
        if np.unique(flat).shape[0] != n:
            raise ValueError("duplicate (model_id, item_id) response")

    @property
    def n_models(self) -> int:
        return len(self.model_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_observed(self) -> int:
        return self.values.shape[0]

    @property
    def is_complete(self) -> bool:
        return self.n_observed == self.n_models * self.n_items

    @classmethod
    def from_dense(cls, cells, model_ids=None, item_ids=None):
        """Build from a J x I array of 0/1 (NaN marks a missing cell)."""
        cells = np.asarray(cells, dtype=float)
        if cells.ndim != 2:
            raise ValueError(f"dense cells must be 2-D, got shape {cells.shape}")
        n_models, n_items = cells.shape
        if model_ids is None:
            model_ids = [f"model-{j}" for j in range(n_models)]
        if item_ids is None:
            item_ids = [f"item-{i}" for i in range(n_items)]
        observed = ~np.isnan(cells)
        mi, ii = np.nonzero(observed)
        return cls(model_ids, item_ids, mi, ii, cells[mi, ii])

    @classmethod
    def from_responses(cls, records):
        """Build from long-form (model_id, item_id, correct) triples."""
        records = list(records)
        if not records:
            raise ValueError("no responses given")
        model_ids, item_ids = [], []
        model_pos, item_pos = {}, {}
        mi, ii, vals = [], [], []
        for model_id, item_id, correct in records:
            if model_id not in model_pos:
                model_pos[model_id] = len(model_ids)
                model_ids.append(model_id)
            if item_id not in item_pos:
                item_pos[item_id] = len(item_ids)
                item_ids.append(item_id)
            mi.append(model_pos[model_id])
            ii.append(item_pos[item_id])
            vals.append(int(correct))
        return cls(model_ids, item_ids, mi, ii, vals)

    def to_dense(self) -> np.ndarray:
        """J x I float array, NaN where unobserved."""
        dense = np.full((self.n_models, self.n_items), np.nan)
        dense[self.model_idx, self.item_idx] = self.values
        return dense

    def __eq__(self, other):
        if not isinstance(other, ResponseMatrix):
            return NotImplemented
        if self.model_ids != other.model_ids or self.item_ids != other.item_ids:
            return False
        a = np.lexsort((self.item_idx, self.model_idx))
        b = np.lexsort((other.item_idx, other.model_idx))
        return (
            np.array_equal(self.model_idx[a], other.model_idx[b])
            and np.array_equal(self.item_idx[a], other.item_idx[b])
            and np.array_equal(self.values[a], other.values[b])
        )


def response_log_likelihood(Z: ResponseMatrix, thetas, bs) -> float:
    """Joint Bernoulli log-likelihood of all observed cells.

    sum_ij [ z_ij log p_ij + (1 - z_ij) log(1 - p_ij) ], p from the 1PL model.
    """
    thetas = np.asarray(thetas, dtype=float)
    bs = np.asarray(bs, dtype=float)
    if thetas.shape != (Z.n_models,):
        raise ValueError(f"expected {Z.n_models} abilities, got shape {thetas.shape}")
    if bs.shape != (Z.n_items,):
        raise ValueError(f"expected {Z.n_items} difficulties, got shape {bs.shape}")
    if not (np.all(np.isfinite(thetas)) and np.all(np.isfinite(bs))):
        raise ValueError("parameters must be finite")
    eta = thetas[Z.model_idx] - bs[Z.item_idx]
    sign = 1.0 - 2.0 * Z.values
    # z=1 contributes log sigma(eta) = -softplus(-eta); z=0 gives -softplus(eta)
    return float(-np.logaddexp(0.0, sign * eta).sum())


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def _open_rows(path):
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row and row[0].startswith("#"):
                continue
            yield row


def write_matrix_csv(Z: ResponseMatrix, path, comment=None):
    """Dense CSV: header of item_ids, one row per model; blank = missing."""
    dense = Z.to_dense()
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["model_id"] + list(Z.item_ids))
        for j, model_id in enumerate(Z.model_ids):
            cells = ["" if np.isnan(v) else str(int(v)) for v in dense[j]]
            writer.writerow([model_id] + cells)


def read_matrix_csv(path) -> ResponseMatrix:
    rows = list(_open_rows(path))
    if not rows:
        raise ValueError(f"{path}: empty response matrix file")
    header = rows[0]
    if len(header) < 2 or header[0] != "model_id":
        raise ValueError(f"{path}: expected header 'model_id,<item ids...>'")
    item_ids = header[1:]
    model_ids, cells = [], []
    for row in rows[1:]:
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}: row for {row[0]!r} has {len(row)} columns")
        model_ids.append(row[0])
        cells.append([float("nan") if c == "" else float(c) for c in row[1:]])
    return ResponseMatrix.from_dense(np.array(cells), model_ids, item_ids)


def write_matrix_jsonl(Z: ResponseMatrix, path):
    """Long JSONL: one {model_id, item_id, correct} object per response."""
    with open(path, "w") as fh:
        for mi, ii, v in zip(Z.model_idx, Z.item_idx, Z.values):
            rec = {
                "model_id": Z.model_ids[mi],
                "item_id": Z.item_ids[ii],
                "correct": int(v),
            }
            fh.write(json.dumps(rec) + "\n")


def read_matrix_jsonl(path) -> ResponseMatrix:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append((obj["model_id"], obj["item_id"], int(obj["correct"])))
    return ResponseMatrix.from_responses(records)


def _write_two_col_csv(path, header, ids, values, comment=None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for key, val in zip(ids, values):
            writer.writerow([key, repr(float(val))])


def _read_two_col_csv(path, header):
    rows = list(_open_rows(path))
    if not rows or rows[0] != list(header):
        raise ValueError(f"{path}: expected header {','.join(header)}")
    ids, values = [], []
    for row in rows[1:]:
        if not row:
            continue
        ids.append(row[0])
        values.append(float(row[1]))
    return ids, np.array(values, dtype=float)


def write_difficulty_csv(params: ItemParams, path, comment=None):
    _write_two_col_csv(path, ("item_id", "difficulty"), params.item_ids, params.difficulty, comment)


def read_difficulty_csv(path) -> ItemParams:
    ids, values = _read_two_col_csv(path, ("item_id", "difficulty"))
    return ItemParams(tuple(ids), values)
