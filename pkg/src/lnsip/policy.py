"""Bipartite graph-convolutional actor and critic.

The state is a variable/constraint bipartite graph whose edge weights are
the constraint coefficients.  Both networks share the same encoder layout:
affine projections into a 128-wide embedding, then two rounds of

    C <- C + Tanh(LN(A  V W_v))
    V <- V + Tanh(LN(A' C W_c))

with bias-free convolution weights.  The actor maps each final variable
embedding through a 256/128 Tanh MLP to a per-variable selection
probability; the critic appends the selection bit to the raw variable
features, mean-pools the final embeddings and maps the pooled vector to a
scalar value through the same MLP shape (bias-free last layer).

Parameter counts are independent of instance size, which is what lets one
checkpoint serve any number of variables and constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor, load_checkpoint, parameter, save_checkpoint
from .core import IpInstance
from .errors import ConfigError, ContractError, DimensionError

HIDDEN = 128
ROUNDS = 2
MLP_DIMS = (256, 128)
LOGIT_CLAMP = 40.0
RESAMPLE_TRIES = 16


@dataclass
class BipartiteState:
    """Variable features, constraint features and the coefficient graph."""

    var_features: np.ndarray  # (n, d_v)
    con_features: np.ndarray  # (m, 1)
    edges: object             # sparse (m, n), the instance matrix
    edges_t: object           # sparse (n, m) transpose

    def __post_init__(self):
        m, n = self.edges.shape
        if self.var_features.shape[0] != n or self.con_features.shape != (m, 1):
            raise DimensionError("state features do not match the edge matrix")

    @property
    def n_vars(self):
        return self.var_features.shape[0]


def state_from_instance(instance: IpInstance, var_features: np.ndarray) -> BipartiteState:
    return BipartiteState(
        var_features=var_features,
        con_features=instance.rhs.reshape(-1, 1),
        edges=instance.matrix,
        edges_t=instance.matrix_csc.T,
    )


@dataclass
class ActionMask:
    """Destroy set over variables; never empty and never universal."""

    selected: np.ndarray

    def __post_init__(self):
        self.selected = np.asarray(self.selected, dtype=bool)
        n_sel = int(self.selected.sum())
        if n_sel == 0 or n_sel == self.selected.size:
            raise ContractError("action mask must select some but not all variables")

    @property
    def size(self) -> int:
        return int(self.selected.sum())


def _census(var_width: int, final_bias: bool) -> list[tuple[str, tuple[int, int]]]:
    names = [
        ("var_proj_w", (var_width, HIDDEN)),
        ("var_proj_b", (1, HIDDEN)),
        ("con_proj_w", (1, HIDDEN)),
        ("con_proj_b", (1, HIDDEN)),
    ]
    for k in range(ROUNDS):
        names.append((f"conv_v_w{k}", (HIDDEN, HIDDEN)))
        names.append((f"conv_c_w{k}", (HIDDEN, HIDDEN)))
    dims = (HIDDEN,) + MLP_DIMS + (1,)
    for i in range(len(dims) - 1):
        names.append((f"mlp_w{i + 1}", (dims[i], dims[i + 1])))
        if i < len(dims) - 2 or final_bias:
            names.append((f"mlp_b{i + 1}", (1, dims[i + 1])))
    return names


class _NetParams:
    """Named parameter set with a fixed census for one network."""

    kind = ""
    final_bias = True

    def __init__(self, feature_width: int, rng=None):
        self.feature_width = feature_width
        self.params: dict[str, Tensor] = {}
        rng = rng if rng is not None else np.random.default_rng(0)
        for name, shape in _census(self._var_width(), self.final_bias):
            if name.endswith("_b"):
                data = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(shape[0])
                data = rng.uniform(-bound, bound, size=shape)
            self.params[name] = parameter(data, f"{self.kind}/{name}")

    def _var_width(self) -> int:
        return self.feature_width

    def zero_(self):
        for p in self.params.values():
            p.data[:] = 0.0
        return self

    def copy(self):
        dup = object.__new__(type(self))
        dup.feature_width = self.feature_width
        dup.params = {
            k: parameter(v.data.copy(), v.name) for k, v in self.params.items()
        }
        return dup

    def save(self, path):
        save_checkpoint(
            path, self.params, meta={"kind": self.kind, "feature_width": self.feature_width}
        )

    @classmethod
    def load(cls, path):
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != cls.kind:
            raise ConfigError(
                f"checkpoint holds a {meta.get('kind')!r} network, expected {cls.kind!r}"
            )
        obj = cls(int(meta["feature_width"]))
        expected = {name: shape for name, shape in _census(obj._var_width(), cls.final_bias)}
        got = {k: tuple(v.shape) for k, v in arrays.items()}
        if got != expected:
            raise ConfigError("checkpoint parameter census does not match this architecture")
        for k, v in arrays.items():
            obj.params[k].data = v
        return obj


class PolicyParams(_NetParams):
    kind = "actor"
    final_bias = True


class CriticParams(_NetParams):
    kind = "critic"
    final_bias = False

    def _var_width(self) -> int:
        return self.feature_width + 1  # appended selection bit


def _encode(tape: Tape, p: dict[str, Tensor], var_feats, con_feats, edges, edges_t) -> Tensor:
    v = tape.affine(var_feats, p["var_proj_w"], p["var_proj_b"])
    c = tape.affine(con_feats, p["con_proj_w"], p["con_proj_b"])
    for k in range(ROUNDS):
        msg_c = tape.spmm(edges, tape.matmul(v, p[f"conv_v_w{k}"]))
        c = tape.add(c, tape.tanh(tape.layer_norm(msg_c)))
        msg_v = tape.spmm(edges_t, tape.matmul(c, p[f"conv_c_w{k}"]))
        v = tape.add(v, tape.tanh(tape.layer_norm(msg_v)))
    return v


def _mlp(tape: Tape, p: dict[str, Tensor], x: Tensor, final_bias: bool) -> Tensor:
    h = tape.tanh(tape.affine(x, p["mlp_w1"], p["mlp_b1"]))
    h = tape.tanh(tape.affine(h, p["mlp_w2"], p["mlp_b2"]))
    if final_bias:
        return tape.affine(h, p["mlp_w3"], p["mlp_b3"])
    return tape.matmul(h, p["mlp_w3"])


def actor_forward(params: PolicyParams, state: BipartiteState, tape: Tape | None = None) -> Tensor:
    """Per-variable selection probabilities, shape (n, 1), strictly in (0, 1)."""
    tape = tape if tape is not None else Tape()
    if state.var_features.shape[1] != params.feature_width:
        raise DimensionError(
            f"state has width {state.var_features.shape[1]}, actor expects {params.feature_width}"
        )
    v = _encode(
        tape, params.params,
        Tensor(state.var_features), Tensor(state.con_features),
        state.edges, state.edges_t,
    )
    logits = tape.clamp(_mlp(tape, params.params, v, final_bias=True), -LOGIT_CLAMP, LOGIT_CLAMP)
    return tape.sigmoid(logits)


def critic_forward(
    params: CriticParams, state: BipartiteState, mask: ActionMask, tape: Tape | None = None
) -> Tensor:
    """Scalar action value Q(s, a), shape (1, 1)."""
    tape = tape if tape is not None else Tape()
    if state.var_features.shape[1] != params.feature_width:
        raise DimensionError(
            f"state has width {state.var_features.shape[1]}, critic expects {params.feature_width}"
        )
    feats = np.hstack([state.var_features, mask.selected.reshape(-1, 1).astype(float)])
    v = _encode(
        tape, params.params,
        Tensor(feats), Tensor(state.con_features),
        state.edges, state.edges_t,
    )
    pooled = tape.mean_pool_rows(v)
    return _mlp(tape, params.params, pooled, final_bias=False)


def clip_probs(p, epsilon: float, tape: Tape | None = None):
    """Clamp selection probabilities into [epsilon, 1 - epsilon].

    On tensors the clamp backpropagates as the identity: a hard-zero
    gradient outside the band would freeze any variable whose probability
    ever saturates, killing its learning signal for good.
    """
    if not 0.0 <= epsilon < 0.5:
        raise ConfigError("epsilon must satisfy 0 <= epsilon < 0.5")
    if isinstance(p, Tensor):
        tape = tape if tape is not None else Tape()
        if epsilon == 0.0:
            return p
        return tape.clamp_pass(p, epsilon, 1.0 - epsilon)
    return np.clip(np.asarray(p, dtype=np.float64), epsilon, 1.0 - epsilon)


def sample_action(p: np.ndarray, rng, max_tries: int = RESAMPLE_TRIES) -> ActionMask:
    """Independent Bernoulli draws per variable, resampled while degenerate.

    Empty and universal draws are rejected; after ``max_tries`` rejections
    one uniformly chosen coordinate is force-flipped so the call always
    terminates.
    """
    p = np.asarray(p, dtype=np.float64).ravel()
    n = p.size
    draw = rng.random(n) < p
    for _ in range(max(1, max_tries) - 1):
        s = int(draw.sum())
        if 0 < s < n:
            return ActionMask(draw)
        draw = rng.random(n) < p
    s = int(draw.sum())
    if s == 0:
        draw[int(rng.integers(n))] = True
    elif s == n:
        draw[int(rng.integers(n))] = False
    return ActionMask(draw)


def log_prob(p, mask: ActionMask, tape: Tape | None = None):
    """Factorized log-probability sum_i [m_i log p_i + (1-m_i) log(1-p_i)]."""
    m = mask.selected.reshape(-1, 1).astype(float)
    if isinstance(p, Tensor):
        tape = tape if tape is not None else Tape()
        if p.shape != m.shape:
            raise DimensionError(f"probabilities {p.shape} vs mask {m.shape}")
        ones = Tensor(np.ones_like(m))
        sel = tape.mul(Tensor(m), tape.log(p))
        unsel = tape.mul(Tensor(1.0 - m), tape.log(tape.sub(ones, p)))
        return tape.sum(tape.add(sel, unsel))
    p = np.asarray(p, dtype=np.float64).reshape(-1, 1)
    if p.shape != m.shape:
        raise DimensionError(f"probabilities {p.shape} vs mask {m.shape}")
    if np.any((p <= 0) | (p >= 1)):
        raise ContractError("log_prob needs probabilities strictly inside (0, 1)")
    return float((m * np.log(p) + (1.0 - m) * np.log(1.0 - p)).sum())
