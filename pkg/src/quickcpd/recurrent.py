"""Causal recurrent change-probability model with exact backpropagation through time.

One recurrent layer (LSTM or GRU), an affine head on the hidden state and a
sigmoid, all in float64 numpy and vectorised over a batch of equal-length
sequences.  ``forward`` returns the probabilities plus a tape that
``backward`` consumes.

Parameter layout (``H`` hidden units, ``D`` inputs), gates stacked along the
last axis:

* LSTM: ``W (D, 4H)``, ``U (H, 4H)``, ``b (4H,)`` in gate order i, f, g, o
* GRU:  ``W (D, 3H)``, ``U (H, 3H)``, ``b (3H,)`` in gate order z, r, n with
  ``n = tanh(x Wn + (r * h) Un + bn)`` and ``h' = (1 - z) n + z h``
* head: ``head_w (H,)``, ``head_b ()``
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal, Optional

import numpy as np

CHECKPOINT_VERSION = 1

Cell = Literal["lstm", "gru"]


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden_dim: int = 8
    cell: Cell = "lstm"
    dropout: float = 0.0

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("input_dim and hidden_dim must be >= 1")
        if self.cell not in ("lstm", "gru"):
            raise ValueError(f"unknown cell {self.cell!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def n_gates(self) -> int:
        return 4 if self.cell == "lstm" else 3

    def shapes(self) -> dict[str, tuple[int, ...]]:
        g = self.n_gates * self.hidden_dim
        return {
            "W": (self.input_dim, g),
            "U": (self.hidden_dim, g),
            "b": (g,),
            "head_w": (self.hidden_dim,),
            "head_b": (),
        }


@dataclass
class ModelParams:
    spec: ModelSpec
    arrays: dict[str, np.ndarray]

    def __post_init__(self):
        for name, shape in self.spec.shapes().items():
            a = self.arrays.get(name)
            if a is None or a.shape != shape:
                raise ValueError(f"parameter {name!r} should have shape {shape}")

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ModelParams:
    """Uniform on ``[-1/sqrt(H), 1/sqrt(H)]`` for every weight and bias."""
    bound = 1.0 / np.sqrt(spec.hidden_dim)
    arrays = {
        name: np.asarray(rng.uniform(-bound, bound, size=shape), dtype=np.float64)
        for name, shape in spec.shapes().items()
    }
    return ModelParams(spec, arrays)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class Tape:
    cell: str
    x: np.ndarray
    states: dict
    hidden: np.ndarray  # (N, T+1, H), index 0 is the zero initial state
    mask: Optional[np.ndarray]
    probs: np.ndarray


def forward(
    params: ModelParams,
    x: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout_mask: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, Tape]:
    """Change probabilities ``p[:, t]`` for a batch ``x`` of shape ``(N, T, D)``.

    ``x`` may also be a single ``(T, D)`` sequence, in which case the
    returned probabilities have shape ``(T,)``.
    """
    spec = params.spec
    single = np.ndim(x) == 2
    x = np.asarray(x, dtype=np.float64)
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != spec.input_dim:
        raise ValueError(f"expected input (N, T, {spec.input_dim}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    n, length, _ = x.shape
    hd = spec.hidden_dim

    mask = None
    if training and spec.dropout > 0.0:
        if dropout_mask is not None:
            mask = dropout_mask
        else:
            if rng is None:
                raise ValueError("training with dropout needs an rng")
            keep = 1.0 - spec.dropout
            mask = (rng.random((n, length, hd)) < keep) / keep

    W, U, b = params["W"], params["U"], params["b"]
    # per-step projections keep each step's arithmetic independent of T
    xw = np.stack([x[:, t] @ W for t in range(length)], axis=1) + b
    h = np.zeros((n, length + 1, hd))
    if spec.cell == "lstm":
        c = np.zeros((n, length + 1, hd))
        gates = np.zeros((n, length, 4 * hd))
        for t in range(length):
            a = xw[:, t] + h[:, t] @ U
            i = _sigmoid(a[:, :hd])
            f = _sigmoid(a[:, hd : 2 * hd])
            g = np.tanh(a[:, 2 * hd : 3 * hd])
            o = _sigmoid(a[:, 3 * hd :])
            c[:, t + 1] = f * c[:, t] + i * g
            h[:, t + 1] = o * np.tanh(c[:, t + 1])
            gates[:, t] = np.concatenate([i, f, g, o], axis=1)
        states = {"c": c, "gates": gates}
    else:
        Uzr, Un = U[:, : 2 * hd], U[:, 2 * hd :]
        gates = np.zeros((n, length, 3 * hd))
        for t in range(length):
            hp = h[:, t]
            zr = _sigmoid(xw[:, t, : 2 * hd] + hp @ Uzr)
            z, r = zr[:, :hd], zr[:, hd:]
            cand = np.tanh(xw[:, t, 2 * hd :] + (r * hp) @ Un)
            h[:, t + 1] = (1.0 - z) * cand + z * hp
            gates[:, t] = np.concatenate([z, r, cand], axis=1)
        states = {"gates": gates}

    feats = h[:, 1:] if mask is None else h[:, 1:] * mask
    probs = _sigmoid(feats @ params["head_w"] + params["head_b"])
    tape = Tape(spec.cell, x, states, h, mask, probs)
    return (probs[0] if single else probs), tape


def backward(params: ModelParams, tape: Tape, grad_p: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given upstream ``dloss/dp`` of the forward output's shape."""
    spec = params.spec
    hd = spec.hidden_dim
    grad_p = np.asarray(grad_p, dtype=np.float64)
    if grad_p.ndim == 1:
        grad_p = grad_p[None]
    if grad_p.shape != tape.probs.shape:
        raise ValueError(f"gradient shape {grad_p.shape} does not match tape {tape.probs.shape}")
    x, h, mask = tape.x, tape.hidden, tape.mask
    n, length, _ = x.shape

    dz = grad_p * tape.probs * (1.0 - tape.probs)  # through the sigmoid
    feats = h[:, 1:] if mask is None else h[:, 1:] * mask
    grads = {
        "head_w": np.einsum("nt,nth->h", dz, feats),
        "head_b": np.asarray(dz.sum()),
    }
    dh_head = dz[:, :, None] * params["head_w"]
    if mask is not None:
        dh_head = dh_head * mask

    U = params["U"]
    da_all = np.zeros((n, length, spec.n_gates * hd))
    dh_next = np.zeros((n, hd))
    if spec.cell == "lstm":
        c, gates = tape.states["c"], tape.states["gates"]
        dc_next = np.zeros((n, hd))
        for t in range(length - 1, -1, -1):
            i, f, g, o = (gates[:, t, k * hd : (k + 1) * hd] for k in range(4))
            tc = np.tanh(c[:, t + 1])
            dh = dh_head[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c[:, t] * f * (1.0 - f),
                    dc * i * (1.0 - g * g),
                    dh * tc * o * (1.0 - o),
                ],
                axis=1,
            )
            da_all[:, t] = da
            dc_next = dc * f
            dh_next = da @ U.T
    else:
        gates = tape.states["gates"]
        Uzr, Un = U[:, : 2 * hd], U[:, 2 * hd :]
        dUn = np.zeros_like(Un)
        for t in range(length - 1, -1, -1):
            z, r, cand = (gates[:, t, k * hd : (k + 1) * hd] for k in range(3))
            hp = h[:, t]
            dh = dh_head[:, t] + dh_next
            dan = dh * (1.0 - z) * (1.0 - cand * cand)
            drh = dan @ Un.T
            daz = dh * (hp - cand) * z * (1.0 - z)
            dar = drh * hp * r * (1.0 - r)
            dazr = np.concatenate([daz, dar], axis=1)
            da_all[:, t] = np.concatenate([dazr, dan], axis=1)
            dUn += (r * hp).T @ dan
            dh_next = dh * z + drh * r + dazr @ Uzr.T

    grads["W"] = np.einsum("ntd,ntg->dg", x, da_all)
    grads["b"] = da_all.sum(axis=(0, 1))
    if spec.cell == "lstm":
        grads["U"] = np.einsum("nth,ntg->hg", h[:, :-1], da_all)
    else:
        dUzr = np.einsum("nth,ntg->hg", h[:, :-1], da_all[:, :, : 2 * hd])
        grads["U"] = np.concatenate([dUzr, dUn], axis=1)
    return grads


def predict(params: ModelParams, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode probabilities for ``(N, T, D)`` input, processed in fixed-size chunks."""
    x = np.asarray(x, dtype=np.float64)
    out = [forward(params, x[i : i + batch_size])[0] for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(out, axis=0)


# -- checkpoint ---------------------------------------------------------------


def to_json(params: ModelParams) -> str:
    doc = {
        "version": CHECKPOINT_VERSION,
        "spec": asdict(params.spec),
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in sorted(params.arrays.items())
        },
    }
    return json.dumps(doc, indent=1) + "\n"


def from_json(text: str) -> ModelParams:
    doc = json.loads(text)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    spec = ModelSpec(**doc["spec"])
    arrays = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in doc["params"].items()
    }
    return ModelParams(spec, arrays)


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    Path(path).write_text(to_json(params))


def load_checkpoint(path: str | Path) -> ModelParams:
    return from_json(Path(path).read_text())
