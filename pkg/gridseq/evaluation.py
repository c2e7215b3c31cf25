"""
Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""

import csv
import hashlib
import json
import logging

import numpy as np

from .errors import ConfigError, ShapeError, UndefinedRatioError
from .simulator import STABLE


logger = logging.getLogger(__name__)

CATEGORIES = ("S", "U", "H")
CO_DIRECTION_THRESHOLD = 0.8


def config_fingerprint(doc):
    """Short hash of a JSON-serializable configuration."""
    raw = json.dumps(doc, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(raw).hexdigest()[:16]


class MetricsReport(object):
    """Categorized rollout errors in physical units.

    Constructor args:
        categories: Dict tag -> {"count", "MAE", "MSE"}; a category without
            trajectories maps to None.
        per_channel: List of {"channel", "MAE", "MSE"} over all trajectories
            (empty when channel counts differ).
        by_kind: {"delta": {...}, "omega": {...}} aggregates.
        fingerprint: Configuration hash.
        seconds_per_trajectory: Mean rollout wall time.
    """

    def __init__(self, categories, per_channel=None, by_kind=None,
        fingerprint="", seconds_per_trajectory=None):

        self.categories = categories
        self.per_channel = per_channel or []
        self.by_kind = by_kind or {}
        self.fingerprint = fingerprint
        self.seconds_per_trajectory = seconds_per_trajectory

    def __getitem__(self, tag):
        return self.categories[tag]

    def to_dict(self, timing=True):
        doc = {"categories": self.categories, "per_channel": self.per_channel,
            "by_kind": self.by_kind, "fingerprint": self.fingerprint}
        if timing:
            doc["seconds_per_trajectory"] = self.seconds_per_trajectory
        return doc

    def write_json(self, path):
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)

    def csv_rows(self):
        rows = []
        for tag in CATEGORIES:
            entry = self.categories.get(tag)
            if entry is None:
                rows.append([tag, 0, "", ""])
            else:
                rows.append([tag, entry["count"], repr(entry["MAE"]),
                    repr(entry["MSE"])])
        return rows

    def write_csv(self, path):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(["category", "count", "MAE", "MSE"])
            writer.writerows(self.csv_rows())


def _prediction_array(pred):
    return np.asarray(getattr(pred, "predictions", pred), dtype=np.float64)


def _errors(preds, truths, L_seq):
    out = []
    for (pred, truth) in zip(preds, truths):
        p = _prediction_array(pred)
        target = truth.data[:,L_seq:]
        if p.shape != target.shape:
            raise ShapeError("trajectory %s: prediction %s vs truth %s" % (
                truth.ident, p.shape, target.shape))
        out.append(p - target)
    return out


def category_map(truths):
    """S or U per trajectory from its stability label."""
    return ["S" if t.label == STABLE else "U" for t in truths]


def compute_metrics(preds, truths, L_seq, split=None, fingerprint="",
    seconds=None):
    """MAE and MSE per stability category.

    Each category's sums are divided by the total number of predicted
    samples in it, i.e. |D_C| * n_x * (T - L_seq) for a uniform set. H
    pools S and U.

    Args:
        preds: RolloutResults (or (n_x, T - L_seq) arrays) per trajectory.
        truths: The true Trajectories.
        L_seq: Observation window length.
        split: Optional list of "S"/"U" tags (default from the labels).
        fingerprint: Configuration hash to record.
        seconds: Optional total rollout wall time.

    Returns:
        MetricsReport.
    """
    if len(preds) != len(truths):
        raise ShapeError("%d predictions for %d trajectories" % (len(preds),
            len(truths)))
    errs = _errors(preds, truths, L_seq)
    tags = category_map(truths) if split is None else list(split)
    categories = {}
    for tag in CATEGORIES:
        members = [e for (e, t) in zip(errs, tags) if tag == "H" or t == tag]
        if not members:
            categories[tag] = None
            continue
        n = float(sum(e.size for e in members))
        categories[tag] = {"count": len(members),
            "MAE": float(sum(np.abs(e).sum() for e in members) / n),
            "MSE": float(sum((e*e).sum() for e in members) / n)}

    per_channel = []
    by_kind = {}
    if errs and len(set(e.shape[0] for e in errs)) == 1:
        stacked = np.stack(errs)
        n_g = stacked.shape[1] // 2
        for c in range(stacked.shape[1]):
            e = stacked[:,c]
            per_channel.append({"channel": c, "MAE": float(np.abs(e).mean()),
                "MSE": float((e*e).mean())})
        for (kind, sl) in (("delta", slice(0, n_g)),
            ("omega", slice(n_g, None))):
            e = stacked[:,sl]
            by_kind[kind] = {"MAE": float(np.abs(e).mean()),
                "MSE": float((e*e).mean())}
    per_traj = None if seconds is None or not truths else \
        seconds / len(truths)
    return MetricsReport(categories, per_channel, by_kind, fingerprint,
        per_traj)


def trajectory_errors(preds, truths, L_seq):
    """Per-trajectory rows (id, category, MAE, MSE)."""
    rows = []
    for (e, truth, tag) in zip(_errors(preds, truths, L_seq), truths,
        category_map(truths)):
        rows.append((truth.ident, tag, float(np.abs(e).mean()),
            float((e*e).mean())))
    return rows


def _row_cosines(a, b):
    na = np.sqrt((a*a).sum(axis=-1))
    nb = np.sqrt((b*b).sum(axis=-1))
    valid = (na > 0) & (nb > 0)
    cos = np.zeros(len(a))
    cos[valid] = (a[valid]*b[valid]).sum(axis=-1) / (na[valid]*nb[valid])
    return (np.clip(cos, -1.0, 1.0), valid)


def feature_stability(trace):
    """Mean cosine similarity of the last two hidden states per patch.

    Args:
        trace: ForwardTrace of a single sample (hidden states (P, d)).

    Returns:
        Tuple (mean, skipped): positions where either row has zero norm are
        skipped and counted; mean is nan if all are skipped.
    """
    if len(trace.hidden) < 2:
        raise ShapeError("feature stability needs at least two hidden states")
    (cos, valid) = _row_cosines(trace.hidden[-2], trace.hidden[-1])
    skipped = int((~valid).sum())
    mean = float(cos[valid].mean()) if valid.any() else float("nan")
    return (mean, skipped)


def co_direction_ratio(trace, threshold=CO_DIRECTION_THRESHOLD):
    """Fraction of distinct row pairs of the final hidden state with cosine
    similarity above threshold."""
    z = np.asarray(trace.hidden[-1])
    P = z.shape[0]
    if P < 2:
        raise UndefinedRatioError("co-direction ratio needs at least two "
            "patches, got %d" % P)
    (i, j) = np.triu_indices(P, 1)
    (cos, valid) = _row_cosines(z[i], z[j])
    return float((valid & (cos > threshold)).sum()) / len(i)


def spectral_norm(A, n_iter=100, tol=1e-10):
    """Largest singular value by power iteration on A^T A."""
    A = np.asarray(A, dtype=np.float64)
    v = np.ones(A.shape[1]) / np.sqrt(A.shape[1])
    sigma = 0.0
    for it in range(n_iter):
        w = A.T.dot(A.dot(v))
        norm = np.sqrt(w.dot(w))
        if norm == 0:
            return 0.0
        v = w / norm
        new = np.sqrt(norm)
        if abs(new - sigma) <= tol*max(new, 1.0):
            sigma = new
            break
        sigma = new
    return float(sigma)


class AlignmentTerms(object):
    """Self and cross alignment terms of one attention matrix.

    Attributes:
        self_terms: (P,) array.
        cross_terms: (P, P) array with a zero diagonal.
        bound: Scalar upper bound.
        norm: Spectral norm of A.
    """

    def __init__(self, self_terms, cross_terms, bound, norm):
        self.self_terms = self_terms
        self.cross_terms = cross_terms
        self.bound = bound
        self.norm = norm


def alignment_terms(A, X, tol=1e-9):
    """Alignment terms of attention weights A over token rows X.

    self_i = (a_ii + 1/2) |x_i - c_i|^2 and cross_ij = a_ij |x_j - c_i|^2
    (i != j) with c_i = sum_j a_ij x_j; the bound is
    |A|_2 (sum self + sum cross + 1/2 sum_i |x_i|^2).

    Residuals are formed as sum_k a_ik (x_j - x_k), which equals x_j - c_i
    for a row-stochastic A.

    Raises:
        ConfigError: If A is not square row-stochastic or X has the wrong
            number of rows.
    """
    A = np.asarray(A, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError("attention matrix must be square, got %s" % (
            A.shape,))
    if X.ndim != 2 or X.shape[0] != A.shape[0]:
        raise ConfigError("token rows %s do not match attention %s" % (
            X.shape, A.shape))
    if (A < -tol).any() or (abs(A.sum(axis=1) - 1.0) > tol).any():
        raise ConfigError("attention matrix is not row-stochastic")
    D = X[:,None,:] - X[None,:,:]
    # R[i,j] = x_j - c_i
    R = np.einsum('ik,jkd->ijd', A, D)
    sq = (R*R).sum(axis=-1)
    diag = np.diag(A)
    self_terms = (diag + 0.5) * np.diag(sq)
    cross_terms = A * sq
    np.fill_diagonal(cross_terms, 0.0)
    norm = spectral_norm(A)
    bound = norm * (self_terms.sum() + cross_terms.sum() +
        0.5*(X*X).sum())
    return AlignmentTerms(self_terms, cross_terms, float(bound), norm)
