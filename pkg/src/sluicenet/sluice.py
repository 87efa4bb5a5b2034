"""The sharing meta-architecture: alpha combiners, beta mixers, presets.

M task networks of K bidirectional recurrent layers run side by side. After
every layer, an alpha unit linearly recombines all tasks' subspace outputs;
a per-task beta vector then mixes the K post-alpha layer outputs into the
representation read by that task's head. Presets freeze or tie alpha/beta
entries to recover classic sharing schemes (hard sharing, cross-stitch,
group lasso, shared/private domain adaptation, low supervision).

Index convention for an alpha unit with M tasks and S subspaces: position
m * S + s denotes subspace s of task m, in both rows and columns. Row i of
the matrix produces output i from all inputs j (matrix[i][j] weights input j).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .data import TaskSpec
from .encoder import CharWordEmbedder, TaskNetwork, Vocabulary, layer_forward_all
from .errors import ConfigError, ContractError, InputError
from .rng import Rng

N_SUBSPACES = 2  # the layer partition is a two-way split; other values unsupported


class AlphaUnit:
    """Trainable (M*S x M*S) combiner applied after one layer."""

    def __init__(self, layer_index: int, n_tasks: int, n_subspaces: int, init: np.ndarray):
        self.layer_index = layer_index
        self.n_tasks = n_tasks
        self.n_subspaces = n_subspaces
        self.matrix = ad.parameter(init, name=f"alpha.layer{layer_index}")


class BetaMixer:
    """Per-task mixture weights over the K layer outputs."""

    def __init__(self, task_index: int, init: np.ndarray):
        self.task_index = task_index
        self.weights = ad.parameter(init, name=f"beta.task{task_index}")


def biased_alpha_init(n_tasks: int, n_subspaces: int) -> np.ndarray:
    """0.9 on the own-subspace diagonal; the remaining 0.1 spread uniformly."""
    n = n_tasks * n_subspaces
    if n == 1:
        return np.array([[1.0]])
    off = 0.1 / (n - 1)
    m = np.full((n, n), off)
    np.fill_diagonal(m, 0.9)
    return m


def uniform_alpha_init(n_tasks: int, n_subspaces: int) -> np.ndarray:
    n = n_tasks * n_subspaces
    return np.full((n, n), 1.0 / n)


def biased_beta_init(n_layers: int) -> np.ndarray:
    """0.1 everywhere except the outer layer, which takes the remainder."""
    b = np.full(n_layers, 0.1)
    b[-1] = 1.0 - 0.1 * (n_layers - 1)
    return b


def count_extra_params(n_tasks: int, n_layers: int, n_subspaces: int = 2) -> tuple[int, int]:
    """(alpha_count, beta_count) added by the sharing machinery.

    One (S*M)^2 combiner per layer and one K-vector per task, so
    ((S*M)^2 * K, K*M); for S=2 that is (4KM^2, KM).
    """
    if n_tasks < 1 or n_layers < 1:
        raise ConfigError("task and layer counts must be >= 1")
    return ((n_subspaces * n_tasks) ** 2 * n_layers, n_layers * n_tasks)


class Constraint:
    """Frozen entries receive no updates; tied entries move as one parameter.

    Both are realized as gradient projections: frozen coordinates are zeroed
    and each tie group's gradients are replaced by the group total, which is
    the exact gradient of the single shared parameter the group represents
    (members are set equal when the constraint is installed).
    """

    def __init__(self, shape):
        self.frozen = np.zeros(shape, dtype=bool)
        self.tie_groups: list[np.ndarray] = []

    def add_tie(self, flat_indices) -> None:
        self.tie_groups.append(np.asarray(flat_indices, dtype=np.intp))

    def project_grad(self, grad: np.ndarray) -> None:
        flat = grad.reshape(-1)
        for group in self.tie_groups:
            flat[group] = flat[group].sum()
        flat[self.frozen.reshape(-1)] = 0.0

    def equalize_values(self, data: np.ndarray) -> None:
        flat = data.reshape(-1)
        for group in self.tie_groups:
            flat[group] = flat[group].mean()


@dataclass
class PresetArchitecture:
    """Named sharing scheme plus the constraint builder that installs it."""

    name: str
    install: Callable[["SluiceModel"], None]
    gamma_default: float = 0.0
    tied_task_init: bool = False


class SluiceModel:
    """M task networks, K alpha units, M beta mixers, and their constraints."""

    def __init__(self, tasks: Sequence[TaskSpec], vocab: Vocabulary, rng: Rng, *,
                 n_layers: int = 3, hidden: int = 100, word_dim: int = 64,
                 char_dim: int = 100, char_hidden: int = 50, mlp_hidden: int = 100,
                 mixing: str = "mixture", alpha_init: str = "biased",
                 main_task: int = 0, lambdas: Optional[Sequence[float]] = None,
                 gamma: float = 0.0, n_subspaces: int = 2, embed_init: float = 0.1):
        if n_subspaces != N_SUBSPACES:
            raise ConfigError(f"only {N_SUBSPACES} subspaces are supported, got {n_subspaces}")
        if mixing not in ("mixture", "concat", "skip"):
            raise ConfigError(f"unknown mixing mode {mixing!r}")
        if not tasks:
            raise ConfigError("at least one task is required")
        self.tasks = list(tasks)
        self.task_names = [t.name for t in self.tasks]
        self.vocab = vocab
        self.n_tasks = len(self.tasks)
        self.n_layers = n_layers
        self.n_subspaces = N_SUBSPACES
        self.hidden = hidden
        self.mixing = mixing
        self.main_task = main_task
        self.gamma = gamma
        self.lambdas = list(lambdas) if lambdas is not None else [1.0] * self.n_tasks
        if len(self.lambdas) != self.n_tasks:
            raise ConfigError(f"{len(self.lambdas)} lambda weights for {self.n_tasks} tasks")
        self.preset = "learned_sluice"
        self.steps_taken = 0

        self.embedder = CharWordEmbedder(vocab, word_dim, char_dim, char_hidden,
                                         rng, embed_init)
        head_dim = 2 * hidden * (n_layers if mixing == "concat" else 1)
        self.task_networks = [
            TaskNetwork(m, t.n_labels, self.embedder.output_dim, hidden, n_layers,
                        mlp_hidden, head_dim, rng, name=f"task{m}")
            for m, t in enumerate(self.tasks)
        ]
        init_fn = {"biased": biased_alpha_init, "uniform": uniform_alpha_init}.get(alpha_init)
        if init_fn is None:
            raise ConfigError(f"unknown alpha_init {alpha_init!r}")
        self.alpha_units = [
            AlphaUnit(k + 1, self.n_tasks, self.n_subspaces, init_fn(self.n_tasks, self.n_subspaces))
            for k in range(n_layers)
        ]
        self.beta_mixers = [BetaMixer(m, biased_beta_init(n_layers)) for m in range(self.n_tasks)]
        self.constraints: dict[ad.Tensor, Constraint] = {}
        # column permutation restoring [fwd | bwd] order after subspace reassembly
        cols = self.task_networks[0].layers[0].subspace_cols
        self._unperm = np.argsort(np.concatenate(cols))

    # -- parameter bookkeeping ------------------------------------------------

    def named_parameters(self) -> list[tuple[str, ad.Tensor]]:
        out = [(p.name, p) for p in self.embedder.parameters()]
        for net in self.task_networks:
            out.extend((p.name, p) for p in net.parameters())
        for unit in self.alpha_units:
            out.append((unit.matrix.name, unit.matrix))
        for mixer in self.beta_mixers:
            out.append((mixer.weights.name, mixer.weights))
        return out

    def parameters(self) -> list[ad.Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        named = dict(self.named_parameters())
        if set(named) != set(state):
            missing = sorted(set(named) ^ set(state))
            raise ContractError(f"snapshot/model parameter mismatch: {missing[:4]}...")
        for name, arr in state.items():
            if named[name].data.shape != np.asarray(arr).shape:
                raise ContractError(f"snapshot shape mismatch for {name}")
            named[name].data[...] = arr

    def sharing_param_counts(self) -> tuple[int, int]:
        a = sum(u.matrix.data.size for u in self.alpha_units)
        b = sum(m.weights.data.size for m in self.beta_mixers)
        return a, b

    def trainable_sharing_counts(self) -> tuple[int, int]:
        """(alpha, beta) entries that still receive updates; ties count once."""

        def free(param):
            cons = self.constraints.get(param)
            if cons is None:
                return param.data.size
            n = int((~cons.frozen).sum())
            for group in cons.tie_groups:
                live = int((~cons.frozen.reshape(-1)[group]).sum())
                if live:
                    n -= live - 1
            return n

        a = sum(free(u.matrix) for u in self.alpha_units)
        b = sum(free(m.weights) for m in self.beta_mixers)
        return a, b

    def note_step(self) -> None:
        self.steps_taken += 1

    # -- constraints -----------------------------------------------------------

    def constraint_for(self, param: ad.Tensor) -> Constraint:
        if param not in self.constraints:
            self.constraints[param] = Constraint(param.data.shape)
        return self.constraints[param]

    def apply_grad_constraints(self) -> None:
        for param, cons in self.constraints.items():
            if param.grad is not None:
                cons.project_grad(param.grad)

    def sharing_grad_norms(self) -> tuple[float, float]:
        """(alpha, beta) L2 gradient norms after constraint projection."""
        a = sum((u.matrix.grad ** 2).sum() for u in self.alpha_units
                if u.matrix.grad is not None)
        b = sum((m.weights.grad ** 2).sum() for m in self.beta_mixers
                if m.weights.grad is not None)
        return float(np.sqrt(a)), float(np.sqrt(b))


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def alpha_combine(unit: AlphaUnit, subspace_outputs: Sequence[ad.Tensor]) -> list[ad.Tensor]:
    """Mix all tasks' subspace outputs; order must follow the unit convention."""
    n = unit.n_tasks * unit.n_subspaces
    if len(subspace_outputs) != n:
        raise ConfigError(f"alpha unit expects {n} subspace tensors, got {len(subspace_outputs)}")
    return ad.linear_mix(unit.matrix, subspace_outputs)


def beta_mix(mixer: BetaMixer, layer_outputs: Sequence[ad.Tensor]) -> ad.Tensor:
    """Weighted sum of the K per-layer representations for one task."""
    if len(layer_outputs) != mixer.weights.data.shape[0]:
        raise ConfigError(
            f"beta mixer expects {mixer.weights.data.shape[0]} layer outputs, got {len(layer_outputs)}")
    return ad.weighted_sum(mixer.weights, layer_outputs)


def forward_all_tasks(model: SluiceModel, tokens: Sequence[str],
                      tasks: Optional[Sequence[int]] = None,
                      collect_hidden: bool = False):
    """One shared embedding pass, K layer+mix stages, then per-task heads.

    Returns {task_index: [T x n_labels] logits}. All task networks always run
    (the alpha units mix across tasks); `tasks` only narrows which heads are
    evaluated. With collect_hidden=True also returns the per-task list of
    post-alpha layer outputs.
    """
    if not tokens:
        raise InputError("cannot run forward on an empty sentence")
    wanted = list(range(model.n_tasks)) if tasks is None else list(tasks)
    emb = model.embedder.embed_sentence(tokens)
    current = [emb] * model.n_tasks
    per_task_layers: list[list[ad.Tensor]] = [[] for _ in range(model.n_tasks)]
    s_count = model.n_subspaces
    for k in range(model.n_layers):
        outs = layer_forward_all([net.layers[k] for net in model.task_networks], current)
        subs = []
        for m, net in enumerate(model.task_networks):
            for s in range(s_count):
                subs.append(net.layers[k].subspace_view(outs[m], s))
        mixed = alpha_combine(model.alpha_units[k], subs)
        for m in range(model.n_tasks):
            grouped = ad.concat(mixed[m * s_count:(m + 1) * s_count], axis=1)
            assembled = ad.take_columns(grouped, model._unperm)
            current[m] = assembled
            per_task_layers[m].append(assembled)
    logits = {}
    for m in wanted:
        if model.mixing == "concat":
            mixed_repr = ad.concat(per_task_layers[m], axis=1)
        else:
            mixed_repr = beta_mix(model.beta_mixers[m], per_task_layers[m])
        logits[m] = _head_logits(model, m, mixed_repr)
    if collect_hidden:
        return logits, per_task_layers
    return logits


def _head_logits(model: SluiceModel, m: int, mixed_repr: ad.Tensor) -> ad.Tensor:
    from .encoder import output_logits
    return output_logits(model.task_networks[m].head, mixed_repr)


def orthogonality_penalty(model: SluiceModel) -> ad.Tensor:
    """sum over tasks, layers, directions of ||G1^T G2||_F^2.

    G1/G2 are the input-weight columns (first input_dim rows of the fused
    LSTM matrix, all four gates) feeding the two hidden subspaces.
    """
    terms = []
    for k in range(model.n_layers):
        ref_layer = model.task_networks[0].layers[k]
        col_groups = (ref_layer.gate_subspace_cols(0), ref_layer.gate_subspace_cols(1))
        weights = []
        for net in model.task_networks:
            weights.extend(net.layers[k].input_weight_tensors())
        terms.append(ad.subspace_ortho(weights, ref_layer.input_dim, col_groups))
    return terms[0] if len(terms) == 1 else ad.add_n(terms)


def total_loss(model: SluiceModel, batch: dict[int, list],
               parts: Optional[dict] = None) -> ad.Tensor:
    """sum_m lambda_m * mean-token cross-entropy + gamma * subspace penalty.

    `batch` maps task index to TaggedSentence lists; absent tasks contribute
    0. When a dict is passed as `parts` it is filled with the unweighted
    cross-entropy sums, token counts, and penalty value for metrics.
    """
    if not batch or all(not sents for sents in batch.values()):
        raise InputError("total_loss needs at least one sentence")
    pieces = []
    ce_sum: dict[int, float] = {}
    tokens: dict[int, int] = {}
    penalty_val = 0.0
    for m, sentences in sorted(batch.items()):
        if not sentences:
            continue
        sums = []
        n_tokens = 0
        for sent in sentences:
            logits = forward_all_tasks(model, sent.tokens, tasks=[m])[m]
            sums.append(ad.softmax_xent_sum(logits, sent.tags))
            n_tokens += len(sent.tags)
        task_sum = sums[0] if len(sums) == 1 else ad.add_n(sums)
        ce_sum[m] = float(task_sum.data)
        tokens[m] = n_tokens
        pieces.append(ad.mul_scalar(task_sum, model.lambdas[m] / n_tokens))
    if model.gamma != 0.0:
        penalty = orthogonality_penalty(model)
        penalty_val = float(penalty.data)
        pieces.append(ad.mul_scalar(penalty, model.gamma))
    if parts is not None:
        parts.update({"ce_sum": ce_sum, "tokens": tokens, "penalty": penalty_val})
    return pieces[0] if len(pieces) == 1 else ad.add_n(pieces)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def _freeze_alpha_constant(model: SluiceModel) -> None:
    n = model.n_tasks * model.n_subspaces
    for unit in model.alpha_units:
        unit.matrix.data[...] = 1.0 / n
        model.constraint_for(unit.matrix).frozen[...] = True


def _freeze_alpha_identity(model: SluiceModel, layer_indices) -> None:
    for k in layer_indices:
        unit = model.alpha_units[k]
        unit.matrix.data[...] = np.eye(unit.matrix.data.shape[0])
        model.constraint_for(unit.matrix).frozen[...] = True


def _freeze_beta_onehot(model: SluiceModel, task_index: int, layer: int) -> None:
    mixer = model.beta_mixers[task_index]
    mixer.weights.data[...] = 0.0
    mixer.weights.data[layer] = 1.0
    model.constraint_for(mixer.weights).frozen[...] = True


def _freeze_beta_ones(model: SluiceModel) -> None:
    for mixer in model.beta_mixers:
        mixer.weights.data[...] = 1.0
        model.constraint_for(mixer.weights).frozen[...] = True


def tie_alpha_subspaces(model: SluiceModel) -> None:
    """Whole-layer mixing: same-subspace entries tied per task pair, the rest 0.

    This is the cross-stitch reduction of the combiner; it is also used by
    the 'subspaces off' ablation.
    """
    s_count = model.n_subspaces
    n = model.n_tasks * s_count
    for unit in model.alpha_units:
        cons = model.constraint_for(unit.matrix)
        for i_task in range(model.n_tasks):
            for j_task in range(model.n_tasks):
                group = []
                for s in range(s_count):
                    group.append((i_task * s_count + s) * n + (j_task * s_count + s))
                cons.add_tie(group)
                for si in range(s_count):
                    for sj in range(s_count):
                        if si != sj:
                            r = i_task * s_count + si
                            c = j_task * s_count + sj
                            unit.matrix.data[r, c] = 0.0
                            cons.frozen[r, c] = True
        cons.equalize_values(unit.matrix.data)


def _install_learned_sluice(model: SluiceModel) -> None:
    pass  # everything trainable


def _install_single_task(model: SluiceModel) -> None:
    _freeze_alpha_identity(model, range(model.n_layers))
    for m in range(model.n_tasks):
        _freeze_beta_onehot(model, m, model.n_layers - 1)


def _install_hard_sharing(model: SluiceModel) -> None:
    # constant combiner everywhere; plain outer-layer prediction
    _freeze_alpha_constant(model)
    for m in range(model.n_tasks):
        _freeze_beta_onehot(model, m, model.n_layers - 1)


def _install_cross_stitch(model: SluiceModel) -> None:
    tie_alpha_subspaces(model)
    for m in range(model.n_tasks):
        _freeze_beta_onehot(model, m, model.n_layers - 1)


def _install_group_lasso(model: SluiceModel) -> None:
    s_count = model.n_subspaces
    for unit in model.alpha_units:
        cons = model.constraint_for(unit.matrix)
        for i_task in range(model.n_tasks):
            for j_task in range(model.n_tasks):
                if i_task == j_task:
                    continue
                rows = slice(i_task * s_count, (i_task + 1) * s_count)
                cols = slice(j_task * s_count, (j_task + 1) * s_count)
                unit.matrix.data[rows, cols] = 0.0
                cons.frozen[rows, cols] = True


def _install_frustratingly_easy_da(model: SluiceModel) -> None:
    # subspace 1 private: no cross-task weights touch it; the cross-task
    # subspace-2 weights are tied to the source task's own subspace-2 weight.
    s_count = model.n_subspaces
    n = model.n_tasks * s_count
    shared = s_count - 1  # subspace index 1, i.e. the second subspace
    for unit in model.alpha_units:
        cons = model.constraint_for(unit.matrix)
        for i_task in range(model.n_tasks):
            for j_task in range(model.n_tasks):
                if i_task == j_task:
                    continue
                for si in range(s_count):
                    for sj in range(s_count):
                        if si == shared and sj == shared:
                            continue
                        r = i_task * s_count + si
                        c = j_task * s_count + sj
                        unit.matrix.data[r, c] = 0.0
                        cons.frozen[r, c] = True
        for j_task in range(model.n_tasks):
            c = j_task * s_count + shared
            group = [(m * s_count + shared) * n + c for m in range(model.n_tasks)]
            cons.add_tie(group)
            # cross weights start from the source task's own within weight
            unit.matrix.data.reshape(-1)[group] = unit.matrix.data.reshape(-1)[c * n + c]


def _install_low_supervision(model: SluiceModel) -> None:
    # first layer hard-shared, upper layers task-private; auxiliary tasks are
    # supervised off layer 1, the main task off the outer layer
    n = model.n_tasks * model.n_subspaces
    unit = model.alpha_units[0]
    unit.matrix.data[...] = 1.0 / n
    model.constraint_for(unit.matrix).frozen[...] = True
    _freeze_alpha_identity(model, range(1, model.n_layers))
    for m in range(model.n_tasks):
        layer = model.n_layers - 1 if m == model.main_task else 0
        _freeze_beta_onehot(model, m, layer)


PRESETS: dict[str, PresetArchitecture] = {
    "learned_sluice": PresetArchitecture("learned_sluice", _install_learned_sluice,
                                         gamma_default=0.01),
    "single_task": PresetArchitecture("single_task", _install_single_task),
    "hard_sharing": PresetArchitecture("hard_sharing", _install_hard_sharing,
                                       tied_task_init=True),
    "low_supervision": PresetArchitecture("low_supervision", _install_low_supervision),
    "cross_stitch": PresetArchitecture("cross_stitch", _install_cross_stitch),
    "group_lasso": PresetArchitecture("group_lasso", _install_group_lasso),
    "frustratingly_easy_da": PresetArchitecture("frustratingly_easy_da",
                                                _install_frustratingly_easy_da),
}


def apply_preset(model: SluiceModel, preset: str) -> None:
    """Install a preset's frozen/tied masks on a freshly built model."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    if model.steps_taken > 0:
        raise ContractError("cannot apply a preset to a partially trained model")
    PRESETS[preset].install(model)
    model.preset = preset


def build_sluice_model(tasks: Sequence[TaskSpec], vocab: Vocabulary, rng: Rng, *,
                       preset: str = "learned_sluice",
                       alpha_mode: Optional[str] = None,
                       subspaces: Optional[bool] = None,
                       mixing: str = "mixture",
                       gamma: Optional[float] = None,
                       tied_task_init: Optional[bool] = None,
                       **model_kwargs) -> SluiceModel:
    """Construct a model, apply its preset, then any ablation overrides.

    alpha_mode 'constant' freezes every combiner at the uniform constant;
    subspaces=False ties the combiners to whole-layer mixing and disables the
    orthogonality weight; mixing 'skip' freezes beta at all-ones.
    """
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    spec = PRESETS[preset]
    resolved_gamma = spec.gamma_default if gamma is None else gamma
    if subspaces is False:
        resolved_gamma = 0.0
    model = SluiceModel(tasks, vocab, rng, mixing=mixing, gamma=resolved_gamma,
                        **model_kwargs)
    tied = spec.tied_task_init if tied_task_init is None else tied_task_init
    if tied:
        for net in model.task_networks[1:]:
            net.copy_recurrent_weights_from(model.task_networks[0])
    apply_preset(model, preset)
    if alpha_mode == "constant":
        _freeze_alpha_constant(model)
    elif alpha_mode not in (None, "learned"):
        raise ConfigError(f"unknown alpha_mode {alpha_mode!r}")
    if subspaces is False and alpha_mode != "constant":
        # whole-layer mixing; with a constant combiner the distinction is
        # vacuous and tying would clobber the frozen constant with zeros
        tie_alpha_subspaces(model)
    if mixing == "skip":
        _freeze_beta_ones(model)
    return model


# ---------------------------------------------------------------------------
# snapshots of the sharing parameters
# ---------------------------------------------------------------------------

def alpha_rows(model: SluiceModel) -> list[tuple]:
    """(layer, from_task, from_subspace, to_task, to_subspace, value) rows."""
    rows = []
    s_count = model.n_subspaces
    for unit in model.alpha_units:
        m = unit.matrix.data
        for i in range(m.shape[0]):
            for j in range(m.shape[1]):
                rows.append((unit.layer_index,
                             model.task_names[j // s_count], j % s_count + 1,
                             model.task_names[i // s_count], i % s_count + 1,
                             float(m[i, j])))
    return rows


def beta_rows(model: SluiceModel) -> list[tuple]:
    rows = []
    for mixer in model.beta_mixers:
        for k in range(model.n_layers):
            rows.append((model.task_names[mixer.task_index], k + 1,
                         float(mixer.weights.data[k])))
    return rows


def write_alpha_csv(model: SluiceModel, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "from_task", "from_subspace", "to_task", "to_subspace", "value"])
        for row in alpha_rows(model):
            w.writerow([*row[:-1], repr(row[-1])])


def write_beta_csv(model: SluiceModel, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "layer", "value"])
        for row in beta_rows(model):
            w.writerow([*row[:-1], repr(row[-1])])


def alpha_sharing_ratio(model: SluiceModel, task_index: Optional[int] = None) -> float:
    """Mean over layers and target-task rows of |cross-task| / |within-task| mass."""
    m_idx = model.main_task if task_index is None else task_index
    s_count = model.n_subspaces
    ratios = []
    for unit in model.alpha_units:
        mat = np.abs(unit.matrix.data)
        for s in range(s_count):
            row = mat[m_idx * s_count + s]
            within = row[m_idx * s_count:(m_idx + 1) * s_count].sum()
            cross = row.sum() - within
            ratios.append(cross / within)
    return float(np.mean(ratios))
