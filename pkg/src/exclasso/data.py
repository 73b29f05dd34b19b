"""Synthetic data, lambda grids and on-disk formats.

File formats (all text):

* features: dense CSV, one sample per row, or sparse triplets with a
  header line ``m n nnz`` followed by ``row col value`` lines using 0-based
  indices;
* responses: one value per line;
* groups: one 1-based integer group id per feature line.

Random numbers come from numpy's PCG64 bit generator seeded with
``SyntheticSpec.seed``. Draw order: the ``m x n`` standard normal matrix of
the design, then per group the support positions and values of ``x*``,
then the noise vector.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .model import GroupPartition, Problem

DENSE_SIGMA_MAX_N = 4000
# 0.9**k falls below this at lag ~330; entries further out are dropped
BAND_CUTOFF = 1e-15


class DataFormatError(ValueError):
    pass


@dataclass
class SyntheticSpec:
    m: int = 200
    l: int = 20
    p: int = 50
    nnz_per_group: int = 10
    corr_in: float = 0.9
    corr_out: float = 0.3
    noise: float = 1.0
    signal_low: float = 0.0
    signal_high: float = 10.0
    seed: int = 0
    task: str = "regression"
    # rescale columns of A to unit norm after drawing b (x_true is rescaled to match)
    normalize: bool = False

    def __post_init__(self):
        if min(self.m, self.l, self.p) <= 0:
            raise ValueError("m, l and p must be positive")
        if not 0 < self.nnz_per_group <= self.p:
            raise ValueError("nnz_per_group must lie in [1, p]")
        if not (0 <= self.corr_in < 1 and 0 <= self.corr_out < 1):
            raise ValueError("correlation bases must lie in [0, 1)")
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")

    @property
    def n(self) -> int:
        return self.l * self.p

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def toeplitz_covariance(l: int, p: int, corr_in: float, corr_out: float) -> np.ndarray:
    """``Sigma_ij = corr^|i-j|`` with the base chosen by group membership.

    Distances ``|i - j|`` are measured in the global feature index.
    """
    n = l * p
    idx = np.arange(n)
    lag = np.abs(idx[:, None] - idx[None, :])
    same = (idx[:, None] // p) == (idx[None, :] // p)
    with np.errstate(under="ignore"):
        return np.where(same, corr_in ** lag, corr_out ** lag)


def _banded_lower(l, p, corr_in, corr_out):
    """Lower banded storage of Sigma, truncated where entries vanish."""
    n = l * p
    base = max(corr_in, corr_out)
    if base == 0:
        bw = 0
    else:
        bw = int(np.ceil(np.log(BAND_CUTOFF) / np.log(base)))
    bw = min(bw, n - 1)
    idx = np.arange(n)
    band = np.zeros((bw + 1, n))
    for k in range(bw + 1):
        i = idx[: n - k]
        j = i + k
        same = (i // p) == (j // p)
        band[k, : n - k] = np.where(same, corr_in ** k, corr_out ** k)
    return band


class ToeplitzSampler:
    """Draw rows from ``N(0, Sigma)`` through a cached Cholesky factor.

    Up to ``DENSE_SIGMA_MAX_N`` features the full covariance is factored.
    Beyond that the covariance is truncated to the band where its entries
    exceed ``BAND_CUTOFF`` and factored in banded form, which changes each
    row of Sigma by less than ``1e-13`` in l1 norm.
    """

    def __init__(self, l: int, p: int, corr_in: float, corr_out: float):
        self.n = l * p
        self.banded = self.n > DENSE_SIGMA_MAX_N
        if self.banded:
            band = _banded_lower(l, p, corr_in, corr_out)
            self.factor = self._cholesky(lambda b: sla.cholesky_banded(b, lower=True), band, banded=True)
        else:
            sigma = toeplitz_covariance(l, p, corr_in, corr_out)
            self.factor = self._cholesky(lambda s: np.linalg.cholesky(s), sigma, banded=False)

    @staticmethod
    def _cholesky(fn, mat, banded):
        try:
            return fn(mat)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            mat = mat.copy()
            if banded:
                mat[0] += 1e-10
            else:
                mat[np.diag_indices_from(mat)] += 1e-10
            try:
                return fn(mat)
            except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
                raise np.linalg.LinAlgError("covariance is not positive definite") from exc

    def transform(self, Z: np.ndarray) -> np.ndarray:
        """Map standard normal rows ``Z`` (``k x n``) to rows with covariance Sigma."""
        if not self.banded:
            return Z @ self.factor.T
        band = self.factor
        n = self.n
        # lower banded row k holds L[j + k, j] at column j, which is exactly
        # the dia layout for offset -k
        L = sp.dia_matrix((band, -np.arange(band.shape[0])), shape=(n, n)).tocsr()
        return (L @ Z.T).T

    def sample(self, rng: np.random.Generator, k: int) -> np.ndarray:
        return self.transform(rng.standard_normal((k, self.n)))


def sample_toeplitz_row(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    return ToeplitzSampler(spec.l, spec.p, spec.corr_in, spec.corr_out).sample(rng, 1)[0]


@dataclass
class SyntheticData:
    A: np.ndarray
    b: np.ndarray
    partition: GroupPartition
    x_true: np.ndarray
    spec: SyntheticSpec

    def problem(self, lam: float = 1.0) -> Problem:
        loss = "squared" if self.spec.task == "regression" else "logistic"
        return Problem(self.A, self.b, self.partition, lam=lam, loss=loss)


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Correlated Gaussian design with a planted support of ``nnz_per_group`` per group."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    sampler = ToeplitzSampler(spec.l, spec.p, spec.corr_in, spec.corr_out)
    A = sampler.sample(rng, spec.m)
    x_true = np.zeros(spec.n)
    for j in range(spec.l):
        pos = rng.choice(spec.p, size=spec.nnz_per_group, replace=False)
        vals = rng.uniform(spec.signal_low, spec.signal_high, size=spec.nnz_per_group)
        # a zero draw would break the nnz count
        vals[vals == 0] = spec.signal_high
        x_true[j * spec.p + pos] = vals
    y = A @ x_true + spec.noise * rng.standard_normal(spec.m)
    if spec.task == "classification":
        b = np.where(y >= 0, 1.0, -1.0)
    else:
        b = y
    if spec.normalize:
        norms = np.linalg.norm(A, axis=0)
        norms[norms == 0] = 1.0
        A = A / norms
        x_true = x_true * norms
    part = GroupPartition.contiguous([spec.p] * spec.l)
    return SyntheticData(A, b, part, x_true, spec)


def lambda_grid(hi: float, lo: float, count: int) -> np.ndarray:
    """``count`` values from ``hi`` down to ``lo``, equally spaced in log10."""
    if not (hi > lo > 0):
        raise ValueError("need hi > lo > 0")
    if count < 2:
        raise ValueError("count must be at least 2")
    grid = np.logspace(np.log10(hi), np.log10(lo), count)
    grid[0], grid[-1] = hi, lo
    return grid


# --- file IO -----------------------------------------------------------------

def _read_lines(path):
    with open(path) as fh:
        return fh.read().splitlines()


def load_matrix(path):
    path = Path(path)
    lines = [ln for ln in _read_lines(path)]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) == 3 and "," not in lines[0] and all(t.lstrip("-").isdigit() for t in head):
        return _load_triplets(path, lines)
    rows = []
    width = None
    for ln_no, ln in enumerate(lines, 1):
        if not ln.strip():
            continue
        parts = ln.split(",")
        try:
            row = [float(t) for t in parts]
        except ValueError as exc:
            col = next(i for i, t in enumerate(parts, 1) if not _is_float(t))
            raise DataFormatError(f"{path}:{ln_no}:{col}: not a number: {parts[col - 1]!r}") from exc
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataFormatError(f"{path}:{ln_no}: expected {width} columns, got {len(row)}")
        rows.append(row)
    return np.array(rows, dtype=float)


def _is_float(t):
    try:
        float(t)
        return True
    except ValueError:
        return False


def _load_triplets(path, lines):
    m, n, nnz = (int(t) for t in lines[0].split())
    body = [(i, ln) for i, ln in enumerate(lines[1:], 2) if ln.strip()]
    if len(body) != nnz:
        raise DataFormatError(f"{path}: header announces {nnz} entries, found {len(body)}")
    rows = np.empty(nnz, dtype=np.intp)
    cols = np.empty(nnz, dtype=np.intp)
    vals = np.empty(nnz)
    for k, (ln_no, ln) in enumerate(body):
        parts = ln.split()
        if len(parts) != 3:
            raise DataFormatError(f"{path}:{ln_no}: expected 'row col value'")
        try:
            rows[k], cols[k], vals[k] = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise DataFormatError(f"{path}:{ln_no}: malformed entry {ln!r}") from exc
        if not (0 <= rows[k] < m and 0 <= cols[k] < n):
            raise DataFormatError(f"{path}:{ln_no}: index out of range for {m}x{n}")
    keys = rows * n + cols
    uniq, first, counts = np.unique(keys, return_index=True, return_counts=True)
    if np.any(counts > 1):
        k = int(np.flatnonzero(counts > 1)[0])
        i, j = divmod(int(uniq[k]), n)
        raise DataFormatError(f"{path}: duplicate entry ({i}, {j})")
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))


def save_matrix(A, path):
    path = Path(path)
    if sp.issparse(A):
        coo = sp.coo_matrix(A)
        with open(path, "w") as fh:
            fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {float(v)!r}\n")
    else:
        np.savetxt(path, np.asarray(A), delimiter=",", fmt="%.17g")


def load_vector(path) -> np.ndarray:
    vals = []
    for ln_no, ln in enumerate(_read_lines(path), 1):
        if not ln.strip():
            continue
        try:
            vals.append(float(ln))
        except ValueError as exc:
            raise DataFormatError(f"{path}:{ln_no}:1: not a number: {ln!r}") from exc
    return np.array(vals)


def save_vector(v, path):
    np.savetxt(path, np.asarray(v, dtype=float), fmt="%.17g")


def load_groups(path, n: int | None = None) -> GroupPartition:
    from .model import validate_partition

    labels = []
    for ln_no, ln in enumerate(_read_lines(path), 1):
        if not ln.strip():
            continue
        try:
            labels.append(int(ln))
        except ValueError as exc:
            raise DataFormatError(f"{path}:{ln_no}:1: group id must be an integer") from exc
    labels = np.array(labels)
    if n is not None and labels.size != n:
        raise DataFormatError(f"{path}: {labels.size} group ids for {n} features")
    if labels.size == 0 or labels.min() < 1:
        raise DataFormatError(f"{path}: group ids must be >= 1")
    l = int(labels.max())
    # ids must run over 1..l without gaps
    return validate_partition([np.flatnonzero(labels == g) for g in range(1, l + 1)], labels.size)


def save_groups(partition: GroupPartition, path):
    np.savetxt(path, partition.labels(), fmt="%d")


def problem_paths(directory) -> dict:
    d = Path(directory)
    found = {}
    for key, names in {"A": ("A.csv", "A.txt"), "b": ("b.txt",), "groups": ("groups.txt",)}.items():
        for name in names:
            if (d / name).exists():
                found[key] = d / name
                break
    missing = {"A", "b", "groups"} - set(found)
    if missing:
        raise DataFormatError(f"{d}: missing {sorted(missing)}")
    if (d / "w.txt").exists():
        found["w"] = d / "w.txt"
    if (d / "c.txt").exists():
        found["c"] = d / "c.txt"
    return found


def load_problem(A_path, b_path, groups_path, lam: float = 1.0, loss: str | None = None,
                 w_path=None, c_path=None) -> Problem:
    A = load_matrix(A_path)
    b = load_vector(b_path)
    if A.shape[0] != b.size:
        raise DataFormatError(f"{b_path}: {b.size} responses for {A.shape[0]} samples")
    part = load_groups(groups_path, A.shape[1])
    if loss is None:
        loss = "logistic" if np.all(np.abs(b) == 1) and np.unique(b).size == 2 else "squared"
    w = load_vector(w_path) if w_path else None
    c = load_vector(c_path) if c_path else None
    return Problem(A, b, part, lam=lam, loss=loss, w=w, c=c)


def load_problem_dir(directory, lam: float = 1.0, loss: str | None = None) -> Problem:
    p = problem_paths(directory)
    return load_problem(p["A"], p["b"], p["groups"], lam=lam, loss=loss,
                        w_path=p.get("w"), c_path=p.get("c"))


def save_problem(problem: Problem, directory, write_weights: bool = True):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_matrix(problem.A, d / ("A.txt" if problem.is_sparse else "A.csv"))
    save_vector(problem.b, d / "b.txt")
    save_groups(problem.partition, d / "groups.txt")
    if write_weights and not np.all(problem.w == 1):
        save_vector(problem.w, d / "w.txt")
    if write_weights and np.any(problem.c != 0):
        save_vector(problem.c, d / "c.txt")


def write_synthetic(data: SyntheticData, directory) -> dict:
    """Write A, b, groups, x_true and a manifest; returns the manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_matrix(data.A, d / "A.csv")
    save_vector(data.b, d / "b.txt")
    save_groups(data.partition, d / "groups.txt")
    save_vector(data.x_true, d / "x_true.txt")
    manifest = {
        "spec": asdict(data.spec),
        "m": int(data.A.shape[0]),
        "n": int(data.A.shape[1]),
        "rng": "numpy PCG64",
        "files": ["A.csv", "b.txt", "groups.txt", "x_true.txt", "manifest.json"],
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


RESULT_FIELDS = ("lambda", "objective", "eta_kkt", "nnz", "time_s", "outer_iters",
                 "inner_iters", "sieve_rounds", "reduced_sizes")


def save_path_result(result, path, csv_path=None):
    """Write per-lambda JSON records, and optionally a flat CSV."""
    import csv

    records = result.records()
    Path(path).write_text(json.dumps(records, indent=2) + "\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RESULT_FIELDS)
            for r in records:
                writer.writerow([";".join(map(str, r[k])) if k == "reduced_sizes" else r[k]
                                 for k in RESULT_FIELDS])
    return records
