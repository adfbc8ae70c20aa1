"""Low-rank adapter math and activation-pathway probes on toy weight sets.

Includes the merge rule for rank-r adapters, relative-weight-change ranking
between a base and a fine-tuned weight set, and two probes for how a spatial
(pose) pathway interacts with a content (trajectory) pathway in a small
deterministic network: a counterfactual pose-effect cosine and a principal-
angle subspace overlap between update directions.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import dataclass

import numpy as np


class AdapterError(ValueError):
    pass


CATEGORIES = ("action", "prope", "attention", "mlp", "other")


def categorize(name: str) -> str:
    """Derive a parameter's category from its hierarchical path."""
    low = name.lower()
    if "action_in" in low:
        return "action"
    if "prope" in low:
        return "prope"
    tokens = set(low.replace("-", ".").replace("_", ".").split("."))
    if "attn" in low or "qkv" in low or tokens & {"q", "k", "v"}:
        return "attention"
    if "mlp" in low or "ffn" in low:
        return "mlp"
    return "other"


@dataclass(frozen=True)
class NamedWeight:
    name: str
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim == 1:
            m = m.reshape(1, -1)
        if not np.all(np.isfinite(m)):
            raise AdapterError(f"{self.name}: non-finite entries")
        object.__setattr__(self, "matrix", m)

    @property
    def category(self) -> str:
        return categorize(self.name)

    @property
    def params(self) -> int:
        return int(self.matrix.size)


@dataclass(frozen=True)
class LoraAdapter:
    """Rank-r update W + B @ A * (alpha / r)."""

    a: np.ndarray  # r x n
    b: np.ndarray  # m x r
    alpha: float
    rank: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if self.rank < 1:
            raise AdapterError(f"rank must be >= 1, got {self.rank}")
        if a.shape[0] != self.rank or b.shape[1] != self.rank:
            raise AdapterError(
                f"adapter shapes {b.shape} @ {a.shape} inconsistent with rank {self.rank}"
            )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank


def lora_apply(w: NamedWeight, ad: LoraAdapter) -> np.ndarray:
    """Merged matrix W + B A * alpha/r; equals the two-step runtime path."""
    m, n = w.matrix.shape
    if ad.b.shape[0] != m or ad.a.shape[1] != n:
        raise AdapterError(
            f"{w.name}: adapter ({ad.b.shape[0]}x{ad.a.shape[1]}) does not fit target ({m}x{n})"
        )
    return w.matrix + ad.b @ ad.a * ad.scaling


@dataclass
class DeltaRow:
    name: str
    delta_rel: float
    delta_norm: float
    base_norm: float
    params: int
    category: str
    flagged: bool = False  # zero-norm base or unmatched name


def delta_rel(base: list[NamedWeight], ft: list[NamedWeight]) -> list[DeltaRow]:
    """Per-parameter relative weight change, ranked descending.

    Rows with a zero-norm base or without a partner in the other set are
    flagged and sorted to the end, excluded from the ranking proper.
    """
    base_by_name = {w.name: w for w in base}
    ft_by_name = {w.name: w for w in ft}
    rows = []
    for name in sorted(set(base_by_name) | set(ft_by_name)):
        if name not in base_by_name or name not in ft_by_name:
            present = base_by_name.get(name) or ft_by_name[name]
            rows.append(
                DeltaRow(name, np.nan, np.nan, np.nan, present.params, present.category, flagged=True)
            )
            continue
        wb, wf = base_by_name[name], ft_by_name[name]
        if wb.matrix.shape != wf.matrix.shape:
            raise AdapterError(f"{name}: shape mismatch {wb.matrix.shape} vs {wf.matrix.shape}")
        base_norm = float(np.linalg.norm(wb.matrix))
        delta_norm = float(np.linalg.norm(wf.matrix - wb.matrix))
        if base_norm == 0.0:
            rows.append(DeltaRow(name, np.nan, delta_norm, 0.0, wb.params, wb.category, flagged=True))
            continue
        rows.append(
            DeltaRow(name, delta_norm / base_norm, delta_norm, base_norm, wb.params, wb.category)
        )
    ranked = [r for r in rows if not r.flagged]
    ranked.sort(key=lambda r: (-r.delta_rel, r.name))
    flagged = [r for r in rows if r.flagged]
    return ranked + flagged


def category_means(rows: list[DeltaRow]) -> dict:
    """Mean relative change per category over unflagged rows."""
    sums: dict[str, list] = {}
    for r in rows:
        if r.flagged:
            continue
        sums.setdefault(r.category, []).append(r.delta_rel)
    return {c: float(np.mean(v)) for c, v in sorted(sums.items())}


# ---------------------------------------------------------------------------
# Toy two-pathway network probes
# ---------------------------------------------------------------------------


class ToyPathwayNet:
    """L independent blocks, each mixing a pose input and a trajectory input.

    Per block: h = tanh(Wp @ pose) + tanh(Wt @ traj) + coupling * (Wp @ pose) * (Wt @ traj).
    With coupling 0 the pose effect h(B, traj) - h(A, traj) is algebraically
    independent of the trajectory; a nonzero coupling breaks that. Pathway
    outputs are quantized to a 2^-20 dyadic grid so their float64 sums are
    exact and the separable case cancels bit-for-bit, not just to an ulp.
    """

    _GRID = 2.0**20

    def __init__(self, blocks: int = 4, dim: int = 16, in_dim: int = 12,
                 coupling: float = 0.0, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.blocks = blocks
        self.dim = dim
        self.in_dim = in_dim
        self.coupling = float(coupling)
        self.w_pose = [rng.standard_normal((dim, in_dim)) / np.sqrt(in_dim) for _ in range(blocks)]
        self.w_traj = [rng.standard_normal((dim, in_dim)) / np.sqrt(in_dim) for _ in range(blocks)]

    def _quantize(self, v: np.ndarray) -> np.ndarray:
        return np.round(v * self._GRID) / self._GRID

    def forward(self, pose: np.ndarray, traj: np.ndarray) -> list[np.ndarray]:
        pose = np.asarray(pose, dtype=float).reshape(self.in_dim)
        traj = np.asarray(traj, dtype=float).reshape(self.in_dim)
        acts = []
        for wp, wt in zip(self.w_pose, self.w_traj):
            p = wp @ pose
            t = wt @ traj
            h = self._quantize(np.tanh(p)) + self._quantize(np.tanh(t))
            if self.coupling:
                h = h + self._quantize(self.coupling * p * t)
            acts.append(h)
        return acts


def camera_invariance_cosine(
    net: ToyPathwayNet,
    pose_a: np.ndarray,
    pose_b: np.ndarray,
    traj_alpha: np.ndarray,
    traj_beta: np.ndarray,
) -> list[float | None]:
    """Per-block cosine between the pose-effect vectors under two trajectories.

    The pose effect under trajectory x is h(B, x) - h(A, x); a cosine of 1
    means trajectory input does not rotate the pose-control direction. Blocks
    with a zero-norm effect vector return None (undefined cosine).
    """
    eff_alpha = [
        hb - ha
        for ha, hb in zip(net.forward(pose_a, traj_alpha), net.forward(pose_b, traj_alpha))
    ]
    eff_beta = [
        hb - ha
        for ha, hb in zip(net.forward(pose_a, traj_beta), net.forward(pose_b, traj_beta))
    ]
    out: list[float | None] = []
    for ca, cb in zip(eff_alpha, eff_beta):
        saa, sbb = float(np.dot(ca, ca)), float(np.dot(cb, cb))
        if saa == 0.0 or sbb == 0.0:
            out.append(None)
        elif np.array_equal(ca, cb):
            # Identical effect vectors have cosine exactly 1; skip the
            # numeric formula so separable networks report 1.0, not 1 - eps.
            out.append(1.0)
        else:
            c = float(np.dot(ca, cb) / np.sqrt(saa * sbb))
            out.append(max(-1.0, min(1.0, c)))
    return out


def subspace_overlap(u: np.ndarray, v: np.ndarray, dims: int) -> float:
    """Mean cosine of principal angles between the two update subspaces.

    Each set of update vectors (rows) is reduced to its top principal
    directions by SVD; the overlap is the mean singular value of the product
    of the two orthonormal bases. Rank-deficient sets reduce dims with a
    warning rather than failing.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.ndim != 2 or v.ndim != 2 or u.shape[1] != v.shape[1]:
        raise AdapterError("update sets must be 2-D with a common feature dimension")
    if dims < 1:
        raise AdapterError("dims must be >= 1")
    if u.shape[0] < dims or v.shape[0] < dims:
        raise AdapterError(f"need at least dims={dims} vectors in each set")

    def principal(x: np.ndarray, d: int) -> np.ndarray:
        _, s, vt = np.linalg.svd(x, full_matrices=False)
        rank = int(np.sum(s > 1e-10 * max(s[0], 1.0)))
        if rank < d:
            warnings.warn(f"update set has rank {rank} < dims {d}; reducing")
            d = rank
        return vt[:d]

    bu = principal(u, dims)
    bv = principal(v, dims)
    d = min(bu.shape[0], bv.shape[0])
    bu, bv = bu[:d], bv[:d]
    if d == 0:
        raise AdapterError("update sets are all-zero")
    sv = np.linalg.svd(bu @ bv.T, compute_uv=False)
    return float(np.mean(sv))


# ---------------------------------------------------------------------------
# Weight-set directory format: manifest.json [{name, shape, file, category?}]
# with little-endian float64 matrices in flat .bin files
# ---------------------------------------------------------------------------


def save_weights(dirpath, weights: list[NamedWeight]) -> None:
    os.makedirs(dirpath, exist_ok=True)
    manifest = []
    for i, w in enumerate(weights):
        fname = f"w{i:04d}.bin"
        w.matrix.astype("<f8").tofile(os.path.join(dirpath, fname))
        manifest.append(
            {"name": w.name, "shape": list(w.matrix.shape), "file": fname, "category": w.category}
        )
    with open(os.path.join(dirpath, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1)


def load_weights(dirpath) -> list[NamedWeight]:
    with open(os.path.join(dirpath, "manifest.json")) as f:
        manifest = json.load(f)
    out = []
    for entry in manifest:
        data = np.fromfile(os.path.join(dirpath, entry["file"]), dtype="<f8")
        out.append(NamedWeight(entry["name"], data.reshape(entry["shape"])))
    return out


DELTA_CSV_COLUMNS = ["rank", "delta_rel", "delta_norm", "base_norm", "params", "category", "parameter"]


def write_delta_csv(path, rows: list[DeltaRow]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(DELTA_CSV_COLUMNS)
        for rank, r in enumerate(rows, start=1):
            writer.writerow(
                [
                    rank if not r.flagged else "",
                    "" if np.isnan(r.delta_rel) else f"{r.delta_rel:.6f}",
                    "" if np.isnan(r.delta_norm) else f"{r.delta_norm:.6f}",
                    "" if np.isnan(r.base_norm) else f"{r.base_norm:.6f}",
                    r.params,
                    r.category,
                    r.name,
                ]
            )
