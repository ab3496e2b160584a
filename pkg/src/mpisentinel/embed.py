"""IR2vec-style module embeddings.

A deterministic seeded vocabulary maps entity tokens (opcodes, type classes,
operand kinds) to base vectors.  The symbolic encoding sums weighted token
vectors per instruction; the flow-aware encoding additionally propagates the
embeddings of defining instructions through operand uses, resolved by a
damped fixed-point iteration.  Both halves are concatenated into one
512-element feature vector per compilation unit.
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ircore import IrFunction, IrModule, OperandKind, token_triple

DEFAULT_DIM = 256
DEFAULT_WEIGHTS = (1.0, 0.5, 0.2)  # opcode, type, operand-kind


class ScalerMismatch(Exception):
    pass


class NonConvergenceWarning(UserWarning):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"flow-aware fixed point did not converge after "
                         f"{iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class SeedVocab:
    """Deterministic token -> vector table: (seed, token) fully determines
    the entry, each component uniform in [-1, 1].  Entries are materialized
    lazily under a lock and derived from a counter-mode hash stream, so they
    are identical across runs, platforms and library versions."""

    def __init__(self, seed: int, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.seed = int(seed)
        self.dim = int(dim)
        self._entries: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def vector(self, token: str) -> np.ndarray:
        vec = self._entries.get(token)
        if vec is not None:
            return vec
        with self._lock:
            vec = self._entries.get(token)
            if vec is None:
                vec = self._materialize(token)
                self._entries[token] = vec
        return vec

    def _materialize(self, token: str) -> np.ndarray:
        out = np.empty(self.dim, dtype=np.float64)
        blocks = (self.dim + 3) // 4
        key = f"{self.seed}|{token}|".encode("utf-8")
        pos = 0
        for b in range(blocks):
            digest = hashlib.sha256(key + str(b).encode()).digest()
            for (u,) in struct.iter_unpack(">Q", digest):
                if pos >= self.dim:
                    break
                out[pos] = (u / 2.0 ** 64) * 2.0 - 1.0
                pos += 1
        out.flags.writeable = False
        return out


def seed_vocabulary(seed: int, dim: int = DEFAULT_DIM) -> SeedVocab:
    """Deterministic vocabulary keyed by (seed, token)."""
    return SeedVocab(seed, dim)


@dataclass
class EmbeddingVector:
    values: np.ndarray  # length 2*dim: symbolic then flow-aware
    source_id: str = ""
    warning: str | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding contains non-finite values")


def _instruction_static_parts(fn: IrFunction, vocab: SeedVocab, weights):
    """Per-instruction base vector and dynamic (defining-instruction) links."""
    w_op, w_ty, w_arg = weights
    defs: dict[str, int] = {}
    instrs = []
    for block in fn.blocks:
        for instr in block.instructions:
            idx = len(instrs)
            instrs.append(instr)
            if instr.result_id is not None:
                defs[instr.result_id] = idx
    base = np.zeros((len(instrs), vocab.dim))
    links: list[tuple[int, int]] = []  # (user index, def index)
    for idx, instr in enumerate(instrs):
        triple = token_triple(instr)
        vec = w_op * vocab.vector(triple.opcode_token) \
            + w_ty * vocab.vector(triple.type_token)
        for op in instr.operands:
            if op.kind is OperandKind.LABEL:
                continue
            if op.kind is OperandKind.LOCAL and op.token in defs:
                links.append((idx, defs[op.token]))
            else:
                vec = vec + w_arg * vocab.vector(op.kind.value)
        base[idx] = vec
    return base, links


def encode_symbolic_function(fn: IrFunction, vocab: SeedVocab,
                             weights=DEFAULT_WEIGHTS) -> np.ndarray:
    w_op, w_ty, w_arg = weights
    total = np.zeros(vocab.dim)
    for block in fn.blocks:
        for instr in block.instructions:
            triple = token_triple(instr)
            vec = w_op * vocab.vector(triple.opcode_token) \
                + w_ty * vocab.vector(triple.type_token)
            for kind in triple.arg_tokens:
                vec = vec + w_arg * vocab.vector(kind)
            total += vec
    return total


def encode_symbolic(module: IrModule, vocab: SeedVocab,
                    weights=DEFAULT_WEIGHTS) -> np.ndarray:
    total = np.zeros(vocab.dim)
    for fn in module.defined_functions():
        total += encode_symbolic_function(fn, vocab, weights)
    return total


def encode_flow_aware_function(fn: IrFunction, vocab: SeedVocab,
                               weights=DEFAULT_WEIGHTS, damping: float = 0.5,
                               tol: float = 1e-6, max_iter: int = 100,
                               ) -> tuple[np.ndarray, bool, int, float]:
    """Returns (sum of converged per-instruction embeddings, converged,
    iterations, final residual)."""
    w_arg = weights[2]
    base, links = _instruction_static_parts(fn, vocab, weights)
    if not links:
        # summation order matches encode_symbolic so the two agree bitwise
        return _seq_sum(base, vocab.dim), True, 0, 0.0
    users = np.array([u for u, _ in links])
    defs = np.array([d for _, d in links])
    state = base.copy()
    residual = np.inf
    # per-instruction residuals add up in the function sum, so the stopping
    # threshold is scaled down by the instruction count to keep the summed
    # result within tol of the fixed point
    tol_eff = tol / max(1, base.shape[0])
    for it in range(1, max_iter + 1):
        prop = base.copy()
        np.add.at(prop, users, w_arg * state[defs])
        nxt = (1.0 - damping) * state + damping * prop
        residual = float(np.max(np.abs(nxt - state)))
        state = nxt
        if residual < tol_eff:
            return _seq_sum(state, vocab.dim), True, it, residual
    return _seq_sum(state, vocab.dim), False, max_iter, residual


def _seq_sum(rows: np.ndarray, dim: int) -> np.ndarray:
    total = np.zeros(dim)
    for row in rows:
        total += row
    return total


def encode_flow_aware(module: IrModule, vocab: SeedVocab,
                      weights=DEFAULT_WEIGHTS, damping: float = 0.5,
                      tol: float = 1e-6, max_iter: int = 100) -> np.ndarray:
    """Module-level flow-aware encoding; warns on non-convergence and still
    returns the last iterate's sum."""
    total = np.zeros(vocab.dim)
    for fn in module.defined_functions():
        vec, converged, iters, residual = encode_flow_aware_function(
            fn, vocab, weights, damping, tol, max_iter)
        if not converged:
            warnings.warn(NonConvergenceWarning(iters, residual), stacklevel=2)
        total += vec
    return total


def embed(module: IrModule, vocab: SeedVocab, weights=DEFAULT_WEIGHTS,
          source_id: str = "", damping: float = 0.5, tol: float = 1e-6,
          max_iter: int = 100) -> EmbeddingVector:
    """Concatenated symbolic (first half) and flow-aware (second half) vector."""
    sym = encode_symbolic(module, vocab, weights)
    note = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonConvergenceWarning)
        flow = encode_flow_aware(module, vocab, weights, damping, tol, max_iter)
        for w in caught:
            if issubclass(w.category, NonConvergenceWarning):
                note = str(w.message)
    return EmbeddingVector(np.concatenate([sym, flow]), source_id, note)


# ---------------------------------------------------------------------------
# Normalization strategies

@dataclass
class IndexScaler:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if np.any(self.maxs < self.mins):
            raise ValueError("index scaler requires max >= min per coordinate")


def fit_index_scaler(matrix: np.ndarray) -> IndexScaler:
    m = np.asarray(matrix, dtype=np.float64)
    return IndexScaler(m.min(axis=0), m.max(axis=0))


def normalize(matrix: np.ndarray, strategy) -> np.ndarray:
    """strategy: "none", "vector", or a fitted IndexScaler.

    vector: each row is divided by its maximum element when that maximum is
    positive; all-zero rows pass through; rows whose maximum is <= 0 are
    divided by the maximum absolute value so signs are preserved.
    index: per-coordinate min-max from the fitted scaler, clamped to [0, 1].
    """
    m = np.asarray(matrix, dtype=np.float64)
    single = m.ndim == 1
    if single:
        m = m[None, :]
    if strategy == "none" or strategy is None:
        out = m.copy()
    elif strategy == "vector":
        out = m.copy()
        for i in range(out.shape[0]):
            row = out[i]
            mx = row.max() if row.size else 0.0
            if mx > 0:
                out[i] = row / mx
            elif np.any(row != 0):
                out[i] = row / np.abs(row).max()
    elif isinstance(strategy, IndexScaler):
        if m.shape[1] != strategy.mins.shape[0]:
            raise ScalerMismatch(
                f"scaler fitted on width {strategy.mins.shape[0]}, "
                f"matrix has width {m.shape[1]}")
        span = strategy.maxs - strategy.mins
        safe = np.where(span > 0, span, 1.0)
        out = np.clip((m - strategy.mins) / safe, 0.0, 1.0)
        out[:, span == 0] = 0.0
    else:
        raise ValueError(f"unknown normalization strategy: {strategy!r}")
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Embedding cache files

def write_embedding_csv(vectors: list[EmbeddingVector], path, meta: dict):
    """CSV with 17-significant-digit floats plus a sidecar metadata JSON."""
    width = vectors[0].values.shape[0] if vectors else 2 * DEFAULT_DIM
    header = "sample_id," + ",".join(f"v{i}" for i in range(width))
    lines = [header]
    for ev in vectors:
        lines.append(ev.source_id + "," + ",".join("%.17g" % x for x in ev.values))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_embedding_csv(path) -> list[EmbeddingVector]:
    out = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("sample_id,"):
            raise ValueError(f"{path}: not an embedding cache file")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            sample_id, rest = line.split(",", 1)
            out.append(EmbeddingVector(
                np.array([float(x) for x in rest.split(",")]), sample_id))
    return out
