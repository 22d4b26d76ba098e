"""Dense interior-point solver for linear objectives over PSD blocks and boxes.

The problem language is

    minimize    c' x
    subject to  B_j + sum_i x_i A_{j,i}  PSD           for each block j
                lower <= x <= upper                     (entries may be infinite)
                a_k' x = b_k                            (optional equalities)

solved by a primal-dual path-following method on the homogeneous self-dual
embedding: Nesterov-Todd scaling of the PSD blocks, Mehrotra
predictor-corrector steps, and a dense symmetric-indefinite factorization of
the reduced KKT system. Intended for the dense regime (thousands of variables,
total PSD dimension up to about a thousand).

Infeasible problems are detected through the embedding's certificates rather
than by iteration exhaustion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Callable

import numpy as np
from scipy.linalg import lapack as _lapack

__all__ = [
    "PsdBlock",
    "ConeProgram",
    "SolveStatus",
    "SolveOutcome",
    "SolverSettings",
    "SolutionCheck",
    "solve",
    "check_solution",
    "dump_program",
]


# --- svec helpers -----------------------------------------------------------
# Symmetric k x k matrices are stored as vectors over the lower triangle with
# off-diagonal entries scaled by sqrt(2), which preserves inner products:
# <svec(A), svec(B)> = tr(A B).


@lru_cache(maxsize=None)
def _svec_index(k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows, cols = np.tril_indices(k)
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, scale


def svec_dim(k: int) -> int:
    return k * (k + 1) // 2


def _svec(mats: np.ndarray, k: int) -> np.ndarray:
    rows, cols, scale = _svec_index(k)
    return mats[..., rows, cols] * scale


def _smat(vecs: np.ndarray, k: int) -> np.ndarray:
    rows, cols, scale = _svec_index(k)
    vals = vecs / scale
    out = np.zeros(vecs.shape[:-1] + (k, k))
    out[..., rows, cols] = vals
    out[..., cols, rows] = vals
    return out


# --- problem description ----------------------------------------------------


def _symmetrize(mat: np.ndarray, what: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{what}: must be a square matrix")
    if not np.isfinite(mat).all():
        raise ValueError(f"{what}: entries must be finite")
    asym = np.abs(mat - mat.T).max(initial=0.0)
    if asym > 1e-10 * (1.0 + np.abs(mat).max(initial=0.0)):
        raise ValueError(f"{what}: must be symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (mat + mat.T)


@dataclass
class PsdBlock:
    """One affine PSD constraint B + sum_i x_i A_i PSD of size k x k.

    Coefficients come in one of two forms:

    dense   -- ``coeffs`` holds a (nv, k, k) stack of symmetric matrices, one
               per entry of ``var_indices``.
    sparse  -- ``entry_rows``/``entry_cols``/``entry_vals`` give one symmetric
               coordinate per variable: A_i = v * (E_rc + E_cr) for r != c,
               or v * E_rr on the diagonal. This form lets the solver use a
               much cheaper Schur-complement update for large blocks whose
               coefficients are elementary (at most one coordinate each).
    """

    size: int
    offset: np.ndarray
    var_indices: np.ndarray
    coeffs: np.ndarray | None = None
    entry_rows: np.ndarray | None = None
    entry_cols: np.ndarray | None = None
    entry_vals: np.ndarray | None = None

    def __post_init__(self) -> None:
        k = int(self.size)
        if k < 1:
            raise ValueError("block size must be >= 1")
        self.size = k
        self.offset = _symmetrize(self.offset, "block offset")
        if self.offset.shape != (k, k):
            raise ValueError(f"block offset must be {k}x{k}")
        self.var_indices = np.asarray(self.var_indices, dtype=np.intp)
        if self.var_indices.ndim != 1:
            raise ValueError("var_indices must be a 1-D index array")
        nv = self.var_indices.shape[0]
        dense = self.coeffs is not None
        sparse = self.entry_rows is not None or self.entry_cols is not None or self.entry_vals is not None
        if dense == sparse:
            raise ValueError("give exactly one of coeffs or entry_rows/entry_cols/entry_vals")
        if dense:
            self.coeffs = np.asarray(self.coeffs, dtype=float)
            if self.coeffs.shape != (nv, k, k):
                raise ValueError(f"coeffs must have shape ({nv}, {k}, {k})")
            if not np.isfinite(self.coeffs).all():
                raise ValueError("coeffs must be finite")
            asym = np.abs(self.coeffs - self.coeffs.transpose(0, 2, 1)).max(initial=0.0)
            if asym > 1e-10 * (1.0 + np.abs(self.coeffs).max(initial=0.0)):
                raise ValueError("all coefficient matrices must be symmetric")
            self.coeffs = 0.5 * (self.coeffs + self.coeffs.transpose(0, 2, 1))
        else:
            self.entry_rows = np.asarray(self.entry_rows, dtype=np.intp)
            self.entry_cols = np.asarray(self.entry_cols, dtype=np.intp)
            self.entry_vals = np.asarray(self.entry_vals, dtype=float)
            if not (self.entry_rows.shape == self.entry_cols.shape == self.entry_vals.shape == (nv,)):
                raise ValueError("entry arrays must match var_indices in length")
            if (self.entry_rows >= k).any() or (self.entry_cols >= k).any() or (
                self.entry_rows < 0
            ).any() or (self.entry_cols < 0).any():
                raise ValueError("entry coordinates out of range")
            if not np.isfinite(self.entry_vals).all():
                raise ValueError("entry values must be finite")
            if np.unique(self.var_indices).shape[0] != nv:
                raise ValueError("sparse blocks need distinct var_indices (one coordinate per variable)")

    def is_sparse(self) -> bool:
        return self.coeffs is None

    def dense_coeffs(self) -> np.ndarray:
        """Coefficient stack (nv, k, k), materialized for sparse blocks."""
        if self.coeffs is not None:
            return self.coeffs
        nv = self.var_indices.shape[0]
        out = np.zeros((nv, self.size, self.size))
        i = np.arange(nv)
        out[i, self.entry_rows, self.entry_cols] = self.entry_vals
        out[i, self.entry_cols, self.entry_rows] = self.entry_vals
        return out

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Block value B + sum_i x_i A_i at a full-length decision vector."""
        vals = x[self.var_indices]
        if self.coeffs is not None:
            return self.offset + np.einsum("v,vij->ij", vals, self.coeffs)
        out = self.offset.copy()
        np.add.at(out, (self.entry_rows, self.entry_cols), self.entry_vals * vals)
        mask = self.entry_rows != self.entry_cols
        np.add.at(out, (self.entry_cols[mask], self.entry_rows[mask]), self.entry_vals[mask] * vals[mask])
        return out


@dataclass
class ConeProgram:
    """Linear objective with box bounds, PSD blocks, optional equalities."""

    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    psd_blocks: list[PsdBlock]
    linear_eq: list[tuple[np.ndarray, float]] | None = None

    def __post_init__(self) -> None:
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.ndim != 1:
            raise ValueError("objective must be a vector")
        n = self.objective.shape[0]
        if n < 1 or not np.isfinite(self.objective).all():
            raise ValueError("objective must be a nonempty finite vector")
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError(f"lower and upper must have shape ({n},)")
        if np.isnan(self.lower).any() or np.isnan(self.upper).any():
            raise ValueError("bounds must not be NaN")
        if (self.lower > self.upper).any():
            bad = int(np.argmax(self.lower > self.upper))
            raise ValueError(f"lower[{bad}] exceeds upper[{bad}]")
        for blk in self.psd_blocks:
            if not isinstance(blk, PsdBlock):
                raise ValueError("psd_blocks must contain PsdBlock values")
            if blk.var_indices.size and (blk.var_indices.min() < 0 or blk.var_indices.max() >= n):
                raise ValueError("block var_indices out of range")
        if self.linear_eq is not None:
            checked = []
            for row, rhs in self.linear_eq:
                row = np.asarray(row, dtype=float)
                if row.shape != (n,) or not np.isfinite(row).all() or not np.isfinite(rhs):
                    raise ValueError("equality rows must be finite vectors of length n")
                checked.append((row, float(rhs)))
            self.linear_eq = checked

    @property
    def num_vars(self) -> int:
        return int(self.objective.shape[0])


class SolveStatus(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolveOutcome:
    """Solver result. Residuals and gap are the scaled measures the
    convergence test used; status OPTIMAL implies they met the tolerances.

    certificate carries a human-readable infeasibility or failure description
    when status is not OPTIMAL and one is available. A problem whose objective
    is unbounded below reports NUMERICAL_FAILURE with an explanatory
    certificate (bounded formulations cannot produce it legitimately).
    """

    x: np.ndarray
    status: SolveStatus
    duality_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    certificate: str | None = None


@dataclass
class SolverSettings:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    max_iterations: int = 100
    verbose: bool = False


class _NumericalBreakdown(Exception):
    pass


# --- internal model ---------------------------------------------------------


class _SizeGroup:
    """All PSD blocks of one size, contiguous in the cone vector."""

    def __init__(self, k: int, blocks: list[PsdBlock], start: int) -> None:
        self.k = k
        self.sd = svec_dim(k)
        self.nblk = len(blocks)
        self.start = start
        self.offsets = np.stack([_svec(b.offset, k) for b in blocks])
        # H-assembly subgroups: dense blocks sharing a variable signature are
        # batched; sparse blocks get the elementary Schur update.
        self.dense_subs: list[dict[str, Any]] = []
        self.sparse_subs: list[dict[str, Any]] = []
        by_sig: dict[tuple, list[int]] = {}
        for pos, blk in enumerate(blocks):
            if blk.is_sparse():
                off = blk.entry_rows != blk.entry_cols
                self.sparse_subs.append(
                    {
                        "pos": pos,
                        "vi": blk.var_indices,
                        "rows": blk.entry_rows,
                        "cols": blk.entry_cols,
                        # u scales the symmetric-Kronecker gather; sval is the
                        # svec entry for G applications.
                        "u": blk.entry_vals * np.where(off, np.sqrt(2.0), np.sqrt(0.5)),
                        "coord": self._coord_index(blk.entry_rows, blk.entry_cols),
                        "sval": blk.entry_vals * np.where(off, np.sqrt(2.0), 1.0),
                    }
                )
            else:
                by_sig.setdefault(tuple(blk.var_indices.tolist()), []).append(pos)
        for sig, poss in by_sig.items():
            vi = np.asarray(sig, dtype=np.intp)
            coeffs = np.stack([blocks[p].coeffs for p in poss])
            self.dense_subs.append(
                {
                    "pos": np.asarray(poss, dtype=np.intp),
                    "vi": vi,
                    "coeffs": coeffs,
                    "svecA": _svec(coeffs, k),
                }
            )

    def _coord_index(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        r = np.maximum(rows, cols)
        c = np.minimum(rows, cols)
        # position of (r, c) in np.tril_indices(k) order
        return r * (r + 1) // 2 + c

    def view(self, vec: np.ndarray) -> np.ndarray:
        return vec[self.start : self.start + self.nblk * self.sd].reshape(self.nblk, self.sd)


class _Model:
    """Preprocessed program: fixed variables eliminated, cone layout frozen."""

    def __init__(self, program: ConeProgram) -> None:
        n_all = program.num_vars
        lower = program.lower
        upper = program.upper
        fixed_mask = np.isfinite(lower) & (lower == upper)
        self.fixed_mask = fixed_mask
        self.fixed_vals = np.where(fixed_mask, lower, 0.0)
        self.free_idx = np.flatnonzero(~fixed_mask)
        self.n = self.free_idx.shape[0]
        self.n_all = n_all
        remap = -np.ones(n_all, dtype=np.intp)
        remap[self.free_idx] = np.arange(self.n)

        c = program.objective[self.free_idx].copy()
        self.cscale = max(1.0, float(np.abs(c).max(initial=0.0)))
        self.c = c / self.cscale

        lo = lower[self.free_idx]
        up = upper[self.free_idx]
        lo_rows = np.flatnonzero(np.isfinite(lo))
        up_rows = np.flatnonzero(np.isfinite(up))
        self.box_var = np.concatenate([lo_rows, up_rows])
        self.box_sign = np.concatenate([-np.ones(lo_rows.size), np.ones(up_rows.size)])
        self.box_rhs = np.concatenate([-lo[lo_rows], up[up_rows]])
        self.nbox = self.box_var.shape[0]
        self.lo = lo
        self.up = up

        rows = []
        rhs = []
        for row, b in program.linear_eq or []:
            rows.append(row[self.free_idx])
            rhs.append(b - float(row[fixed_mask] @ self.fixed_vals[fixed_mask]))
        self.A = np.asarray(rows, dtype=float).reshape(len(rows), self.n)
        self.b = np.asarray(rhs, dtype=float)
        self.p = self.A.shape[0]

        # blocks: fold fixed variables into offsets, remap the remaining ones,
        # then group by size in cone-vector order
        folded: list[PsdBlock] = []
        for blk in program.psd_blocks:
            vals = self.fixed_vals[blk.var_indices]
            keep = ~fixed_mask[blk.var_indices]
            if blk.is_sparse():
                offset = blk.offset.copy()
                drop = ~keep
                if drop.any():
                    r, cidx, v = blk.entry_rows[drop], blk.entry_cols[drop], blk.entry_vals[drop] * vals[drop]
                    np.add.at(offset, (r, cidx), v)
                    m = r != cidx
                    np.add.at(offset, (cidx[m], r[m]), v[m])
                folded.append(
                    PsdBlock(
                        size=blk.size,
                        offset=offset,
                        var_indices=remap[blk.var_indices[keep]],
                        entry_rows=blk.entry_rows[keep],
                        entry_cols=blk.entry_cols[keep],
                        entry_vals=blk.entry_vals[keep],
                    )
                )
            else:
                offset = blk.offset + np.einsum("v,vij->ij", vals[~keep], blk.coeffs[~keep])
                folded.append(
                    PsdBlock(
                        size=blk.size,
                        offset=offset,
                        var_indices=remap[blk.var_indices[keep]],
                        coeffs=blk.coeffs[keep],
                    )
                )
        order = sorted(range(len(folded)), key=lambda i: folded[i].size)
        self.groups: list[_SizeGroup] = []
        pos = self.nbox
        i = 0
        while i < len(order):
            k = folded[order[i]].size
            batch = []
            while i < len(order) and folded[order[i]].size == k:
                batch.append(folded[order[i]])
                i += 1
            grp = _SizeGroup(k, batch, pos)
            pos += grp.nblk * grp.sd
            self.groups.append(grp)
        self.cone_len = pos
        self.degree = self.nbox + sum(g.nblk * g.k for g in self.groups)

        # static cone data
        h = np.empty(self.cone_len)
        h[: self.nbox] = self.box_rhs
        for g in self.groups:
            g.view(h)[:] = g.offsets
        self.h = h
        e = np.zeros(self.cone_len)
        e[: self.nbox] = 1.0
        for g in self.groups:
            g.view(e)[:] = _svec(np.eye(g.k), g.k)[None, :]
        self.e = e

    # --- constraint-matrix applications --------------------------------

    def gx(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.cone_len)
        out[: self.nbox] = self.box_sign * x[self.box_var]
        for g in self.groups:
            region = g.view(out)
            for sub in g.dense_subs:
                region[sub["pos"]] = -np.einsum("bvs,v->bs", sub["svecA"], x[sub["vi"]])
            for sub in g.sparse_subs:
                vec = np.zeros(g.sd)
                np.add.at(vec, sub["coord"], -sub["sval"] * x[sub["vi"]])
                region[sub["pos"]] = vec
        return out

    def gt(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n)
        np.add.at(out, self.box_var, self.box_sign * v[: self.nbox])
        for g in self.groups:
            region = g.view(v)
            for sub in g.dense_subs:
                out[sub["vi"]] -= np.einsum("bvs,bs->v", sub["svecA"], region[sub["pos"]])
            for sub in g.sparse_subs:
                out[sub["vi"]] -= sub["sval"] * region[sub["pos"]][sub["coord"]]
        return out

    def assemble_x(self, x_free: np.ndarray) -> np.ndarray:
        out = self.fixed_vals.copy()
        out[self.free_idx] = x_free
        return out


# --- Nesterov-Todd scaling --------------------------------------------------


class _Scaling:
    """Per-iteration scaling: W z and W^{-T} s coincide at lambda."""

    def __init__(self, model: _Model, s: np.ndarray, z: np.ndarray) -> None:
        self.model = model
        sb = s[: model.nbox]
        zb = z[: model.nbox]
        self.w_box = np.sqrt(sb / zb)
        self.lam_box = np.sqrt(sb * zb)
        self.R: list[np.ndarray] = []
        self.Rinv: list[np.ndarray] = []
        self.Tinv: list[np.ndarray] = []
        self.lam: list[np.ndarray] = []
        self.L_s: list[np.ndarray] = []
        self.L_z: list[np.ndarray] = []
        for g in model.groups:
            S = _smat(g.view(s), g.k)
            Z = _smat(g.view(z), g.k)
            try:
                L1 = np.linalg.cholesky(S)
                L2 = np.linalg.cholesky(Z)
            except np.linalg.LinAlgError as exc:
                raise _NumericalBreakdown(f"cone iterate lost definiteness ({exc})") from exc
            M = L2.transpose(0, 2, 1) @ L1
            U, sig, Vt = np.linalg.svd(M)
            if (sig <= 0).any():
                raise _NumericalBreakdown("scaling point is singular")
            isqrt = 1.0 / np.sqrt(sig)
            R = L1 @ Vt.transpose(0, 2, 1) * isqrt[:, None, :]
            Rinv = (isqrt[:, :, None] * U.transpose(0, 2, 1)) @ L2.transpose(0, 2, 1)
            self.R.append(R)
            self.Rinv.append(Rinv)
            self.Tinv.append(np.einsum("bji,bjk->bik", Rinv, Rinv))
            self.lam.append(sig)
            self.L_s.append(L1)
            self.L_z.append(L2)
        lam_full = np.zeros(model.cone_len)
        lam_full[: model.nbox] = self.lam_box
        for g, lam in zip(model.groups, self.lam):
            diag = np.zeros((g.nblk, g.k, g.k))
            ii = np.arange(g.k)
            diag[:, ii, ii] = lam
            g.view(lam_full)[:] = _svec(diag, g.k)
        self.lam_svec = lam_full

    def _congr(self, v: np.ndarray, mats: list[np.ndarray], transpose: bool) -> np.ndarray:
        out = np.empty_like(v)
        out[: self.model.nbox] = 0.0
        for g, M in zip(self.model.groups, mats):
            V = _smat(g.view(v), g.k)
            if transpose:
                res = np.einsum("bji,bjk,bkl->bil", M, V, M)
            else:
                res = np.einsum("bij,bjk,blk->bil", M, V, M)
            g.view(out)[:] = _svec(res, g.k)
        return out

    def apply_w(self, v: np.ndarray) -> np.ndarray:
        out = self._congr(v, self.R, transpose=True)
        out[: self.model.nbox] = self.w_box * v[: self.model.nbox]
        return out

    def apply_wt(self, v: np.ndarray) -> np.ndarray:
        out = self._congr(v, self.R, transpose=False)
        out[: self.model.nbox] = self.w_box * v[: self.model.nbox]
        return out

    def apply_winv_t(self, v: np.ndarray) -> np.ndarray:
        out = self._congr(v, self.Rinv, transpose=False)
        out[: self.model.nbox] = v[: self.model.nbox] / self.w_box
        return out

    def apply_wtw_inv(self, v: np.ndarray) -> np.ndarray:
        out = self._congr(v, self.Tinv, transpose=False)
        out[: self.model.nbox] = v[: self.model.nbox] / (self.w_box * self.w_box)
        return out

    def mehrotra_rhs(self, sigma_mu: float, ds_aff: np.ndarray, dz_aff: np.ndarray) -> np.ndarray:
        """Solve lambda o d = sigma*mu*e - lambda o lambda - (ds_aff o dz_aff)."""
        m = self.model
        out = np.empty(m.cone_len)
        lb = self.lam_box
        out[: m.nbox] = (sigma_mu - lb * lb - ds_aff[: m.nbox] * dz_aff[: m.nbox]) / lb
        for g, lam in zip(m.groups, self.lam):
            Cs = _smat(g.view(ds_aff), g.k)
            Cz = _smat(g.view(dz_aff), g.k)
            M = Cs @ Cz
            corr = 0.5 * (M + M.transpose(0, 2, 1))
            D = -corr
            ii = np.arange(g.k)
            D[:, ii, ii] += sigma_mu - lam * lam
            denom = 0.5 * (lam[:, :, None] + lam[:, None, :])
            g.view(out)[:] = _svec(D / denom, g.k)
        return out

    def max_step(self, ds: np.ndarray, dz: np.ndarray, s: np.ndarray, z: np.ndarray) -> float:
        """Largest alpha with s + alpha*ds and z + alpha*dz still in the cone.

        Computed on the unscaled iterates with the Cholesky factors taken at
        scaling time, which stays accurate when the scaled quantities would
        cancel near the central-path boundary.
        """
        m = self.model
        bound = np.inf
        if m.nbox:
            for d, v in ((ds, s), (dz, z)):
                ratio = d[: m.nbox] / v[: m.nbox]
                worst = float(ratio.min(initial=np.inf))
                if worst < 0:
                    bound = min(bound, -1.0 / worst)
        for g, L1, L2 in zip(m.groups, self.L_s, self.L_z):
            for d, L in ((ds, L1), (dz, L2)):
                D = _smat(g.view(d), g.k)
                Y = np.linalg.solve(L, D)
                M = np.linalg.solve(L, Y.transpose(0, 2, 1))
                M = 0.5 * (M + M.transpose(0, 2, 1))
                eigs = np.linalg.eigvalsh(M)
                worst = float(eigs[:, 0].min(initial=np.inf))
                if worst < 0:
                    bound = min(bound, -1.0 / worst)
        return bound


# --- KKT assembly and factorization ----------------------------------------


class _Kkt:
    def __init__(self, model: _Model, scaling: _Scaling) -> None:
        n, p = model.n, model.p
        N = n + p
        K = np.zeros((N, N))
        H = K[:n, :n]
        if model.nbox:
            d = 1.0 / (scaling.w_box * scaling.w_box)
            np.add.at(K, (model.box_var, model.box_var), d)
        for g, Rinv, Tinv in zip(model.groups, scaling.Rinv, scaling.Tinv):
            for sub in g.dense_subs:
                Ri = Rinv[sub["pos"]]
                At = np.einsum("bxy,bvyz,bwz->bvxw", Ri, sub["coeffs"], Ri, optimize=True)
                Gt = _svec(At, g.k)
                nv = sub["vi"].shape[0]
                Mz = Gt.transpose(1, 0, 2).reshape(nv, -1)
                H[np.ix_(sub["vi"], sub["vi"])] += Mz @ Mz.T
            for sub in g.sparse_subs:
                P = Tinv[sub["pos"]]
                r, cidx, u = sub["rows"], sub["cols"], sub["u"]
                gathered = P[np.ix_(r, r)] * P[np.ix_(cidx, cidx)] + P[np.ix_(r, cidx)] * P[np.ix_(cidx, r)]
                gathered *= np.outer(u, u)
                H[np.ix_(sub["vi"], sub["vi"])] += gathered
        if p:
            K[:n, n:] = model.A.T
            K[n:, :n] = model.A
        self.K = K
        self.n, self.p, self.N = n, p, N
        # extended-precision residuals push iterative refinement a few digits
        # further; numpy computes them without BLAS, so only for small systems
        self.K_wide = K.astype(np.longdouble) if N <= 600 else None
        self._factor(max(1.0, float(np.abs(np.diagonal(H)).max(initial=0.0))))

    def _factor(self, scale: float) -> None:
        # Bunch-Kaufman handles the indefinite block structure; regularize
        # only when the matrix is reported singular outright
        info = -1
        for delta in (0.0, scale * 1e-14, scale * 1e-10):
            if delta == 0.0:
                Kreg = self.K
            else:
                Kreg = self.K.copy()
                idx = np.arange(self.N)
                Kreg[idx[: self.n], idx[: self.n]] += delta
                Kreg[idx[self.n :], idx[self.n :]] -= delta
            ldu, ipiv, info = _lapack.dsytrf(Kreg, lower=1)
            if info == 0:
                self._ldu, self._ipiv = ldu, ipiv
                return
        raise _NumericalBreakdown(f"KKT factorization failed (info={info})")

    def _residual(self, rhs: np.ndarray, x: np.ndarray) -> np.ndarray:
        if self.K_wide is not None:
            wide = rhs.astype(np.longdouble) - self.K_wide @ x.astype(np.longdouble)
            return wide.astype(float)
        return rhs - self.K @ x

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Factored solve, refined against the exact matrix while it helps."""
        x, info = _lapack.dsytrs(self._ldu, self._ipiv, rhs, lower=1)
        if info != 0:
            raise _NumericalBreakdown(f"KKT solve failed (info={info})")
        resid = self._residual(rhs, x)
        rnorm = float(np.linalg.norm(resid))
        for _ in range(3):
            if rnorm == 0.0:
                break
            corr, info = _lapack.dsytrs(self._ldu, self._ipiv, resid, lower=1)
            if info != 0:
                raise _NumericalBreakdown(f"KKT refinement failed (info={info})")
            cand = x + corr
            cresid = self._residual(rhs, cand)
            cnorm = float(np.linalg.norm(cresid))
            if not np.isfinite(cnorm) or cnorm >= rnorm:
                break
            x, resid, rnorm = cand, cresid, cnorm
        if not np.isfinite(x).all():
            raise _NumericalBreakdown("KKT solve produced non-finite values")
        return x


# --- main loop --------------------------------------------------------------


def solve(program: ConeProgram, settings: SolverSettings | None = None) -> SolveOutcome:
    """Solve the cone program; see the module docstring for the algorithm."""
    settings = settings or SolverSettings()
    model = _Model(program)
    if model.n == 0:
        return _solve_fully_fixed(program, model, settings)
    if model.cone_len == 0:
        raise ValueError("program needs at least one finite bound or PSD block")
    return _ipm(model, settings)


def _solve_fully_fixed(program: ConeProgram, model: _Model, settings: SolverSettings) -> SolveOutcome:
    x = model.assemble_x(np.zeros(0))
    report = check_solution(program, x, settings.feas_tol)
    status = SolveStatus.OPTIMAL if report.feasible else SolveStatus.INFEASIBLE
    cert = None if report.feasible else "all variables fixed by bounds; the fixed point violates the constraints"
    return SolveOutcome(
        x=x,
        status=status,
        duality_gap=0.0,
        primal_residual=0.0 if report.feasible else float(report.worst_violation),
        dual_residual=0.0,
        iterations=0,
        certificate=cert,
    )


def _cone_interior(model: _Model, s: np.ndarray, z: np.ndarray) -> bool:
    """Whether both cone vectors are strictly admissible (factorizable)."""
    if (s[: model.nbox] <= 0.0).any() or (z[: model.nbox] <= 0.0).any():
        return False
    for g in model.groups:
        for vec in (s, z):
            try:
                np.linalg.cholesky(_smat(g.view(vec), g.k))
            except np.linalg.LinAlgError:
                return False
    return True


def _ipm(model: _Model, settings: SolverSettings) -> SolveOutcome:
    n, p = model.n, model.p
    c, b, h = model.c, model.b, model.h
    norm_b = max(1.0, float(np.linalg.norm(b))) if p else 1.0
    norm_h = max(1.0, float(np.linalg.norm(h)))
    norm_c = max(1.0, float(np.linalg.norm(c)))

    x = np.ones(n)
    fin_lo = np.isfinite(model.lo)
    fin_up = np.isfinite(model.up)
    both = fin_lo & fin_up
    x[both] = 0.5 * (model.lo[both] + model.up[both])
    x[fin_lo & ~fin_up] = model.lo[fin_lo & ~fin_up] + 1.0
    x[fin_up & ~fin_lo] = model.up[fin_up & ~fin_lo] - 1.0
    y = np.zeros(p)
    s = model.e.copy()
    z = model.e.copy()
    tau = 1.0
    kappa = 1.0
    nu = model.degree

    best: dict[str, Any] = {"score": np.inf}
    status = SolveStatus.MAX_ITERATIONS
    certificate: str | None = None
    iterations = 0
    stalls = 0
    centerings = 25
    plateau_score = np.inf
    plateau_it = 0
    frozen = False

    def iterate_measures(xc, yc, zc, sc, tauc) -> tuple[float, float, float]:
        """(pres, dres, relgap) of a candidate iterate, as the loop measures them."""
        r1c = (model.A.T @ yc if p else np.zeros(n)) + model.gt(zc) + c * tauc
        r3c = model.gx(xc) + sc - h * tauc
        pcostc = float(c @ xc) / tauc
        dcostc = -((float(b @ yc) if p else 0.0) + float(h @ zc)) / tauc
        relgapc = (float(sc @ zc) / (tauc * tauc)) / max(1e-10, abs(pcostc), abs(dcostc))
        presc = float(np.linalg.norm(r3c)) / (tauc * norm_h)
        if p:
            presc = max(presc, float(np.linalg.norm(model.A @ xc - b * tauc)) / (tauc * norm_b))
        dresc = float(np.linalg.norm(r1c)) / (tauc * norm_c)
        return presc, dresc, relgapc

    for it in range(settings.max_iterations + 1):
        iterations = it
        Gx = model.gx(x)
        GTz = model.gt(z)
        Ax = model.A @ x if p else np.zeros(0)
        ATy = model.A.T @ y if p else np.zeros(n)
        cx = float(c @ x)
        by = float(b @ y) if p else 0.0
        hz = float(h @ z)

        r1 = ATy + GTz + c * tau
        r2 = Ax - b * tau
        r3 = Gx + s - h * tau
        r4 = cx + by + hz + kappa

        pcost = cx / tau
        dcost = -(by + hz) / tau
        gap = float(s @ z) / (tau * tau)
        relgap = gap / max(1e-10, abs(pcost), abs(dcost))
        pres_eq = float(np.linalg.norm(r2)) / (tau * norm_b) if p else 0.0
        pres_cone = float(np.linalg.norm(r3)) / (tau * norm_h)
        pres = max(pres_eq, pres_cone)
        dres = float(np.linalg.norm(r1)) / (tau * norm_c)
        if settings.verbose:
            print(
                f"iter {it:3d}  pcost {pcost:+.6e}  dcost {dcost:+.6e}  "
                f"gap {relgap:.2e}  pres {pres:.2e}  dres {dres:.2e}  tau {tau:.2e}"
            )

        score = max(pres, dres, relgap)
        if score < best["score"]:
            best.update(score=score, x=x / tau, gap=relgap, pres=pres, dres=dres, it=it)
        if score < 0.9 * plateau_score:
            plateau_score, plateau_it = score, it
        elif it - plateau_it >= 20:
            # the iterate sequence has hit its floating-point accuracy floor;
            # further iterations only burn time without improving the score
            status = SolveStatus.NUMERICAL_FAILURE
            certificate = f"accuracy plateau: best score {best['score']:.3e} unchanged since iteration {plateau_it}"
            break

        if pres <= settings.feas_tol and dres <= settings.feas_tol and relgap <= settings.gap_tol:
            status = SolveStatus.OPTIMAL
            best.update(score=score, x=x / tau, gap=relgap, pres=pres, dres=dres, it=it)
            break

        den_p = -(hz + by)
        if den_p > 0:
            pinfres = float(np.linalg.norm(ATy + GTz)) / den_p
            if pinfres <= settings.feas_tol:
                status = SolveStatus.INFEASIBLE
                certificate = (
                    "primal infeasibility certificate: dual ray with "
                    f"h'z + b'y = {-den_p:.3e} and residual {pinfres:.3e}"
                )
                break
        den_d = -cx
        if den_d > 0:
            dinfres = float(np.hypot(np.linalg.norm(Ax), np.linalg.norm(Gx + s))) / den_d
            if dinfres <= settings.feas_tol:
                status = SolveStatus.NUMERICAL_FAILURE
                certificate = (
                    "objective unbounded below: primal ray with "
                    f"c'x = {-den_d:.3e} and residual {dinfres:.3e}"
                )
                break
        if it == settings.max_iterations:
            break

        mu = (float(s @ z) + tau * kappa) / (nu + 1)
        # once the iterate has essentially converged and kappa is negligible,
        # the tau direction num/dot_v is a ratio of two noise-dominated
        # near-zeros (the numerator cancels to the gap scale through an
        # ill-conditioned solve, the denominator vanishes as the v-solve
        # approaches the primal ray); freezing tau reduces the step to the
        # classical non-embedded predictor-corrector, which has no such ratio.
        # The freeze is permanent: a noisy endgame step can push the score
        # back over the threshold, and rearming the tau direction at that
        # point crashes tau by decades and raises the residual floor
        if not frozen and score <= 1e-6 and kappa <= 1e-6 * tau:
            frozen = True
        freeze_tau = frozen
        try:
            scaling = _Scaling(model, s, z)
            kkt = _Kkt(model, scaling)

            if freeze_tau:
                vx = vy = zeta_v = None
                dot_v = 0.0
            else:
                rhs_v = np.concatenate([model.gt(scaling.apply_wtw_inv(h)) - c, b])
                v_sol = kkt.solve(rhs_v)
                vx, vy = v_sol[:n], v_sol[n:]
                gvh = model.gx(vx) - h
                zeta_v = scaling.apply_wtw_inv(gvh)
                # c'vx + b'vy + h'zeta_v - kappa/tau collapses to the negative
                # quadratic form below, which avoids the cancellation that
                # makes the naive expression pure noise near convergence
                qv = scaling.apply_winv_t(gvh)
                dot_v = -float(qv @ qv) - kappa / tau

            def newton(rho1, rho2, rho3, rho4, ds_vec, dkap):
                # A'dy + G'dz + c dtau = rho1;  A dx - b dtau = rho2
                # G dx + ds - h dtau = rho3;    c'dx + b'dy + h'dz + dkappa = rho4
                # Winv' ds + W dz = ds_vec;     kappa dtau + tau dkappa = dkap
                tmp = scaling.apply_wt(ds_vec) - rho3
                rhs_u = np.concatenate([rho1 - model.gt(scaling.apply_wtw_inv(tmp)), rho2])
                u_sol = kkt.solve(rhs_u)
                ux, uy = u_sol[:n], u_sol[n:]
                zeta_u = scaling.apply_wtw_inv(model.gx(ux) + tmp)
                if freeze_tau:
                    dtau = 0.0
                    dx, dy, dz = ux, uy, zeta_u
                else:
                    num = rho4 - dkap / tau - float(c @ ux) - (float(b @ uy) if p else 0.0) - float(h @ zeta_u)
                    dtau = num / dot_v
                    if not np.isfinite(dtau):
                        raise _NumericalBreakdown("step computation produced a non-finite tau direction")
                    dx = ux + dtau * vx
                    dy = uy + dtau * vy
                    dz = zeta_u + dtau * zeta_v
                # recover ds from the linearized cone equation directly; the
                # scaled-space route cancels catastrophically near convergence
                ds = rho3 - model.gx(dx) + dtau * h
                dkappa = (dkap - kappa * dtau) / tau
                return [dx, dy, dz, ds, dtau, dkappa]

            def equation_error(d, rho, ds_vec):
                e1 = (model.A.T @ d[1] if p else 0.0) + model.gt(d[2]) + c * d[4] - rho[0]
                e2 = (model.A @ d[0] - b * d[4] - rho[1]) if p else np.zeros(0)
                # with tau frozen the rho4 row is dropped from the reduced
                # system, so its residual is not an error to chase
                e4 = 0.0 if freeze_tau else (
                    float(c @ d[0]) + (float(b @ d[1]) if p else 0.0) + float(h @ d[2]) + d[5] - rho[3]
                )
                e5 = scaling.apply_winv_t(d[3]) + scaling.apply_w(d[2]) - ds_vec
                err = max(
                    float(np.linalg.norm(e1)),
                    float(np.linalg.norm(e2)) if p else 0.0,
                    abs(e4),
                    float(np.linalg.norm(e5)),
                )
                return (e1, e2, e4, e5), err

            def direction(eta: float, ds_vec: np.ndarray, dkap: float):
                rho = (-eta * r1, -eta * r2, -eta * r3, -eta * r4)
                d = newton(*rho, ds_vec, dkap)
                # refine against the full linearized system while it improves;
                # the elimination sequence loses digits as the scaling
                # degenerates, and over-refining past the floor diverges
                errs, err = equation_error(d, rho, ds_vec)
                for _ in range(2):
                    if err == 0.0 or not np.isfinite(err):
                        break
                    corr = newton(-errs[0], -errs[1], np.zeros_like(r3), -errs[2], -errs[3], 0.0)
                    cand = [a + bb for a, bb in zip(d, corr)]
                    cerrs, cerr = equation_error(cand, rho, ds_vec)
                    if not np.isfinite(cerr) or cerr >= err:
                        break
                    d, errs, err = cand, cerrs, cerr
                return d

            def boundary(d) -> float:
                bnd = scaling.max_step(d[3], d[2], s, z)
                # tau converges to a positive constant on solvable problems;
                # keep single steps from moving it more than one decade, which
                # blocks the noise-driven crashes seen at extreme conditioning
                if d[4] < 0:
                    bnd = min(bnd, -0.9 * tau / d[4])
                elif d[4] > 0:
                    bnd = min(bnd, 9.0 * tau / d[4])
                if d[5] < 0:
                    bnd = min(bnd, -kappa / d[5])
                return bnd

            # predictor
            aff = direction(1.0, -scaling.lam_svec, -tau * kappa)
            alpha_aff = min(1.0, boundary(aff))
            mu_aff = (
                float((s + alpha_aff * aff[3]) @ (z + alpha_aff * aff[2]))
                + (tau + alpha_aff * aff[4]) * (kappa + alpha_aff * aff[5])
            ) / (nu + 1)
            sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))

            # corrector
            ds_aff_scaled = scaling.apply_winv_t(aff[3])
            dz_aff_scaled = scaling.apply_w(aff[2])
            ds_vec = scaling.mehrotra_rhs(sigma * mu, ds_aff_scaled, dz_aff_scaled)
            dkap = sigma * mu - tau * kappa - aff[4] * aff[5]
            comb = direction(1.0 - sigma, ds_vec, dkap)
            alpha = min(1.0, 0.99 * boundary(comb))
            if alpha < 0.1 and centerings > 0:
                # combined direction too poor to advance, which happens when
                # the iterate drifts off-center at extreme conditioning; a
                # pure centering step restores direction quality
                centerings -= 1
                zero_cone = np.zeros(model.cone_len)
                ds_cent = scaling.mehrotra_rhs(mu, zero_cone, zero_cone)
                cent = direction(0.0, ds_cent, mu - tau * kappa)
                alpha_cent = min(1.0, 0.99 * boundary(cent))
                if alpha_cent > alpha:
                    comb = cent
                    alpha = alpha_cent

            dx, dy, dz, ds, dtau, dkappa = comb
        except _NumericalBreakdown as exc:
            status = SolveStatus.NUMERICAL_FAILURE
            certificate = f"{exc} at iteration {it}"
            break

        if frozen and alpha > 1e-9:
            # at extreme conditioning an occasional direction is corrupt and
            # blows the converged residuals up by decades, and the recovery
            # burns the remaining plateau window; damp only those
            # catastrophes, leaving the productive endgame oscillation alone
            for _ in range(4):
                candidate = max(iterate_measures(
                    x + alpha * dx,
                    y + alpha * dy,
                    z + alpha * dz,
                    s + alpha * ds,
                    tau + alpha * dtau,
                ))
                if candidate <= 10.0 * score:
                    break
                alpha *= 0.25

        # the boundary estimate comes from factors at extreme conditioning
        # and can overestimate the distance to the cone; back off until the
        # new iterate is strictly admissible so the next scaling cannot fail.
        # This check runs last: near-singular slacks can fail to factorize
        # even after alpha shrinks, so whatever alpha gets committed must be
        # the alpha that was probed
        for _ in range(8):
            if alpha <= 1e-12:
                alpha = 0.0
                break
            if (
                tau + alpha * dtau > 0.0
                and kappa + alpha * dkappa >= 0.0
                and _cone_interior(model, s + alpha * ds, z + alpha * dz)
            ):
                break
            alpha *= 0.5
        else:
            alpha = 0.0

        if alpha <= 1e-9:
            stalls += 1
            if stalls >= 3:
                status = SolveStatus.NUMERICAL_FAILURE
                certificate = f"step length collapsed at iteration {it}"
                break
        else:
            stalls = 0

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    x_best = best.get("x")
    if x_best is None:
        x_best = x / tau
    return SolveOutcome(
        x=model.assemble_x(x_best),
        status=status,
        duality_gap=float(best.get("gap", np.inf)),
        primal_residual=float(best.get("pres", np.inf)),
        dual_residual=float(best.get("dres", np.inf)),
        iterations=iterations,
        certificate=certificate,
    )


# --- independent verification ------------------------------------------------


@dataclass
class SolutionCheck:
    """Constraint recomputation at a candidate point, no solver internals.

    block_min_eigs and block_norms are per PSD block (eigendecomposition of
    the evaluated block). box_violations and eq_violations list (index,
    magnitude) pairs for every violated bound or equality row. feasible uses
    relative tolerances: each block needs min eig >= -tol*(1 + ||block||_2),
    each bound/equality holds within tol*(1 + |bound|).
    """

    block_min_eigs: np.ndarray
    block_norms: np.ndarray
    box_violations: list[tuple[int, float]]
    eq_violations: list[tuple[int, float]]
    worst_violation: float
    feasible: bool
    tol: float


def check_solution(program: ConeProgram, x: np.ndarray, tol: float = 1e-8) -> SolutionCheck:
    x = np.asarray(x, dtype=float)
    if x.shape != (program.num_vars,):
        raise ValueError(f"x must have shape ({program.num_vars},)")
    min_eigs = []
    norms = []
    worst = 0.0
    feasible = True
    for blk in program.psd_blocks:
        val = blk.evaluate(x)
        eigs = np.linalg.eigvalsh(val)
        min_eigs.append(float(eigs[0]))
        norms.append(float(np.abs(eigs).max()))
        rel = -float(eigs[0]) / (1.0 + norms[-1])
        worst = max(worst, rel)
        if eigs[0] < -tol * (1.0 + norms[-1]):
            feasible = False
    box_violations: list[tuple[int, float]] = []
    for i in range(program.num_vars):
        lo, up = program.lower[i], program.upper[i]
        viol = max(lo - x[i] if np.isfinite(lo) else 0.0, x[i] - up if np.isfinite(up) else 0.0)
        if viol > 0.0:
            box_violations.append((i, float(viol)))
            bound = lo if lo - x[i] >= x[i] - up else up
            rel = viol / (1.0 + abs(bound))
            worst = max(worst, rel)
            if viol > tol * (1.0 + abs(bound)):
                feasible = False
    eq_violations: list[tuple[int, float]] = []
    for k, (row, rhs) in enumerate(program.linear_eq or []):
        res = abs(float(row @ x) - rhs)
        if res > 0.0:
            eq_violations.append((k, float(res)))
            rel = res / (1.0 + abs(rhs))
            worst = max(worst, rel)
            if res > tol * (1.0 + abs(rhs)):
                feasible = False
    return SolutionCheck(
        block_min_eigs=np.asarray(min_eigs),
        block_norms=np.asarray(norms),
        box_violations=box_violations,
        eq_violations=eq_violations,
        worst_violation=worst,
        feasible=feasible,
        tol=tol,
    )


def dump_program(program: ConeProgram, path: str) -> None:
    """Write the program to a self-describing JSON file.

    Schema (format "anchorplace-coneprogram/1"): objective, lower, upper as
    number lists with null for infinite bounds; equalities as
    {coefficients, rhs}; psd_blocks as {size, offset, coefficients} where each
    coefficient is {variable, matrix} for dense blocks or
    {variable, entries: [[row, col, value]]} for sparse ones (the matrix is
    value * (E_rc + E_cr), halved on the diagonal to a single E_rr term).
    """

    def bound_list(arr: np.ndarray) -> list:
        return [None if not np.isfinite(v) else float(v) for v in arr]

    blocks = []
    for blk in program.psd_blocks:
        if blk.is_sparse():
            coeffs = [
                {"variable": int(v), "entries": [[int(r), int(cc), float(val)]]}
                for v, r, cc, val in zip(blk.var_indices, blk.entry_rows, blk.entry_cols, blk.entry_vals)
            ]
        else:
            coeffs = [
                {"variable": int(v), "matrix": m.tolist()}
                for v, m in zip(blk.var_indices, blk.coeffs)
            ]
        blocks.append({"size": blk.size, "offset": blk.offset.tolist(), "coefficients": coeffs})
    doc = {
        "format": "anchorplace-coneprogram/1",
        "n": program.num_vars,
        "objective": [float(v) for v in program.objective],
        "lower": bound_list(program.lower),
        "upper": bound_list(program.upper),
        "equalities": [
            {"coefficients": [float(v) for v in row], "rhs": rhs} for row, rhs in (program.linear_eq or [])
        ],
        "psd_blocks": blocks,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
