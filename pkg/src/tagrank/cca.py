"""Canonical correlation analysis between visual and textual features, and
the normalized-CCA similarity used for cross-modal ranking."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as la

from .errors import FormatError, NumericError

DEFAULT_POWER = 4.0
DEFAULT_MAX_DIM = 128
MODALITIES = ("visual", "textual")


@dataclass(frozen=True)
class CcaModel:
    P_v: np.ndarray          # (D_v, c)
    P_t: np.ndarray          # (D_t, c)
    correlations: np.ndarray  # (c,), descending in [0, 1]
    mean_v: np.ndarray
    mean_t: np.ndarray
    reg_v: float
    reg_t: float
    power: float = DEFAULT_POWER
    text_mode: Optional[str] = None

    @property
    def dim(self) -> int:
        return self.correlations.shape[0]

    def weights(self) -> np.ndarray:
        return self.correlations ** self.power


def default_reg(X: np.ndarray) -> float:
    """1e-4 times the average diagonal of the scatter matrix."""
    d = X.shape[1]
    return 1e-4 * float(np.einsum("ij,ij->", X, X)) / d if d else 0.0


def _positive_definite_solve(B, rhs, what):
    try:
        return la.solve(B, rhs, assume_a="pos")
    except (la.LinAlgError, ValueError) as exc:
        raise NumericError(f"{what} scatter matrix is singular; use reg > 0") from exc


def fit_cca(F_v, F_t, c: Optional[int] = None, reg: Optional[float] = None,
            power: float = DEFAULT_POWER, text_mode: Optional[str] = None) -> CcaModel:
    """Fit projections maximizing the correlation of centered features.

    Solved as the generalized symmetric eigenproblem
    ``C_so C_oo^-1 C_os p = rho^2 C_ss p`` on the lower-dimensional side
    ``s``; the other side follows as ``q ~ C_oo^-1 C_os p``. Both scatter
    matrices carry ``reg`` on their diagonal (default: per-modality
    ``1e-4 * trace / dim``).
    """
    F_v = np.asarray(F_v, dtype=np.float64)
    F_t = np.asarray(F_t, dtype=np.float64)
    if F_v.ndim != 2 or F_t.ndim != 2:
        raise ValueError("feature matrices must be 2-D")
    n = F_v.shape[0]
    if n != F_t.shape[0]:
        raise ValueError(f"row counts differ: {n} vs {F_t.shape[0]}")
    if n < 2:
        raise ValueError("need at least two rows")
    d_v, d_t = F_v.shape[1], F_t.shape[1]
    c_max = min(d_v, d_t, n - 1)
    if c is None:
        c = min(DEFAULT_MAX_DIM, c_max)
    if not (1 <= c <= c_max):
        raise ValueError(f"subspace dimension c={c} must lie in [1, {c_max}]")
    if reg is not None and reg < 0:
        raise ValueError("reg must be non-negative")

    mean_v, mean_t = F_v.mean(axis=0), F_t.mean(axis=0)
    Xv, Xt = F_v - mean_v, F_t - mean_t
    reg_v = default_reg(Xv) if reg is None else float(reg)
    reg_t = default_reg(Xt) if reg is None else float(reg)
    Cvv = Xv.T @ Xv + reg_v * np.eye(d_v)
    Ctt = Xt.T @ Xt + reg_t * np.eye(d_t)
    Cvt = Xv.T @ Xt

    swap = d_t < d_v
    if swap:
        Css, Coo, Cso = Ctt, Cvv, Cvt.T
    else:
        Css, Coo, Cso = Cvv, Ctt, Cvt
    Coo_inv_Cos = _positive_definite_solve(Coo, Cso.T, "textual" if swap else "visual")
    M = Cso @ Coo_inv_Cos
    M = 0.5 * (M + M.T)
    try:
        rho2, vecs = la.eigh(M, Css)
    except la.LinAlgError as exc:
        raise NumericError("scatter matrix is singular; use reg > 0") from exc
    order = np.argsort(-rho2, kind="stable")[:c]
    P_s = vecs[:, order]

    Q = Coo_inv_Cos @ P_s
    qnorm = np.sqrt(np.maximum(np.einsum("ik,ij,jk->k", Q, Coo, Q), 0.0))
    scale = np.sqrt(max(float(np.abs(rho2).max()), 1.0))
    degenerate = qnorm <= 1e-7 * scale
    P_o = np.zeros_like(Q)
    P_o[:, ~degenerate] = Q[:, ~degenerate] / qnorm[~degenerate]
    if degenerate.any():
        # uncorrelated directions: take the other side's null-correlation
        # eigenvectors, which are already C_oo-orthogonal to the rest
        Css_inv_Cso = la.solve(Css, Cso, assume_a="pos")
        M_o = Cso.T @ Css_inv_Cso
        _, vecs_o = la.eigh(0.5 * (M_o + M_o.T), Coo)
        P_o[:, degenerate] = vecs_o[:, :int(degenerate.sum())]
    lam = np.einsum("ik,ij,jk->k", P_s, Cso, P_o)
    flip = lam < 0
    P_o[:, flip] *= -1
    lam = np.clip(np.abs(lam), 0.0, 1.0)

    P_v, P_t = (P_o, P_s) if swap else (P_s, P_o)
    # deterministic signs: the largest-magnitude entry of each P_v column is positive
    pivot = P_v[np.argmax(np.abs(P_v), axis=0), np.arange(c)]
    sign = np.where(pivot < 0, -1.0, 1.0)
    P_v = P_v * sign
    P_t = P_t * sign
    order = np.argsort(-lam, kind="stable")
    return CcaModel(P_v[:, order], P_t[:, order], lam[order], mean_v, mean_t, reg_v, reg_t,
                    float(power), text_mode)


def project(model: CcaModel, rows, modality: str) -> np.ndarray:
    """Center, project and weight rows by correlation**power."""
    if modality == "visual":
        P, mean = model.P_v, model.mean_v
    elif modality == "textual":
        P, mean = model.P_t, model.mean_t
    else:
        raise ValueError(f"modality must be one of {MODALITIES}")
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[-1] != P.shape[0]:
        raise ValueError(f"{modality} rows have dimension {rows.shape[-1]}, model expects {P.shape[0]}")
    return ((rows - mean) @ P) * model.weights()


def ncca_similarity(embed_a, embed_b) -> float:
    a = np.asarray(embed_a, dtype=np.float64)
    b = np.asarray(embed_b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("similarity is undefined for a zero embedding")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def ncca_similarities(query, db) -> np.ndarray:
    """Vectorized similarity of one embedding against rows of ``db``."""
    q = np.asarray(query, dtype=np.float64)
    db = np.atleast_2d(np.asarray(db, dtype=np.float64))
    nq = np.linalg.norm(q)
    nd = np.linalg.norm(db, axis=1)
    if nq == 0 or np.any(nd == 0):
        raise ValueError("similarity is undefined for a zero embedding")
    return np.clip(db @ q / (nd * nq), -1.0, 1.0)


# --------------------------------------------------------------------------
# model file


CCA_MAGIC = b"TGRKCCA1"
TEXT_MODES = ("TAGS", "PBTI", "PCTI", "TBTI", "TCTI")
_CCA_HEADER = struct.Struct("<8s3QdddB")


def cca_bytes(model: CcaModel) -> bytes:
    d_v, c = model.P_v.shape
    d_t = model.P_t.shape[0]
    mode_id = 255 if model.text_mode is None else TEXT_MODES.index(model.text_mode)
    head = _CCA_HEADER.pack(CCA_MAGIC, d_v, d_t, c, model.power, model.reg_v, model.reg_t, mode_id)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                    for a in (model.mean_v, model.mean_t, model.correlations, model.P_v, model.P_t))
    return head + body


def save_cca(path, model: CcaModel) -> None:
    Path(path).write_bytes(cca_bytes(model))


def read_cca_bytes(data: bytes) -> CcaModel:
    if len(data) < _CCA_HEADER.size:
        raise FormatError("truncated CCA header", len(data))
    magic, d_v, d_t, c, power, reg_v, reg_t, mode_id = _CCA_HEADER.unpack_from(data, 0)
    if magic != CCA_MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    sizes = [d_v, d_t, c, d_v * c, d_t * c]
    if len(data) != _CCA_HEADER.size + 8 * sum(sizes):
        raise FormatError(f"payload length mismatch for dims ({d_v}, {d_t}, {c})", _CCA_HEADER.size)
    vals = np.frombuffer(data, dtype="<f8", offset=_CCA_HEADER.size).astype(np.float64)
    parts = np.split(vals, np.cumsum(sizes)[:-1])
    text_mode = None if mode_id == 255 else TEXT_MODES[mode_id]
    return CcaModel(parts[3].reshape(d_v, c), parts[4].reshape(d_t, c), parts[2], parts[0], parts[1],
                    reg_v, reg_t, power, text_mode)


def load_cca(path) -> CcaModel:
    return read_cca_bytes(Path(path).read_bytes())
