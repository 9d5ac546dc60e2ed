"""Compute-budget allocation across layer types and per-layer mask selection.

Budgets are parameter counts: a layer's compute is the number of nonzero
weights it keeps, ``mask.nnz + rank * (m + n)``, times its instance count.
"""
import json
from dataclasses import dataclass, field
from math import floor, log2

from .errors import BudgetError, InfeasibleError, PixelflyError
from .patterns import BlockMask, FlatButterflyParams, PatternSpec, generate_pattern, is_power_of_two

__all__ = [
    "KNOWN_LAYER_TYPES",
    "LayerSpec",
    "ModelSchema",
    "LayerAssignment",
    "Assignment",
    "ProportionalAllocation",
    "proportional_allocate",
    "closed_form_allocate",
    "butterfly_param_count",
    "select_layer_mask",
    "sparsify_schema",
    "layer_mask",
    "total_compute",
    "dense_compute",
    "load_schema",
    "schema_from_json",
    "assignment_to_json",
]

KNOWN_LAYER_TYPES = ("attention", "mlp", "projection", "embedding", "output")


@dataclass(frozen=True)
class LayerSpec:
    """``count`` instances of an ``m x n`` weight applied to ``batch_dim`` vectors."""

    layer_type: str
    count: int
    m: int
    n: int
    batch_dim: int = 1

    def __post_init__(self):
        if self.layer_type not in KNOWN_LAYER_TYPES:
            raise PixelflyError(f"unknown layer type {self.layer_type!r}; expected one of {KNOWN_LAYER_TYPES}")
        for name in ("count", "m", "n", "batch_dim"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise PixelflyError(f"{name} must be a positive integer, got {v}")

    @property
    def params(self):
        return self.m * self.n

    @property
    def dense_flops(self):
        return 2 * self.m * self.n * self.batch_dim * self.count


@dataclass(frozen=True)
class ModelSchema:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise PixelflyError("schema has no layers")
        tags = [l.layer_type for l in layers]
        if len(set(tags)) != len(tags):
            raise PixelflyError(f"duplicate layer types in schema: {tags}")
        object.__setattr__(self, "layers", layers)

    def __iter__(self):
        return iter(self.layers)


@dataclass(frozen=True)
class LayerAssignment:
    """Per-layer-type choice. ``dense`` layers keep every weight and ignore the mask fields."""

    density: float
    max_stride: int
    rank: int
    block: int
    compute: int
    dense: bool = False


@dataclass(frozen=True)
class Assignment:
    layers: dict = field(default_factory=dict)
    budget: int = 0

    def __getitem__(self, layer_type):
        return self.layers[layer_type]


@dataclass(frozen=True)
class ProportionalAllocation:
    """Uniform density plus each type's share of the total budget."""

    densities: dict
    shares: dict


def proportional_allocate(schema, budget_fraction):
    """Give each layer type budget in proportion to its dense flop cost.

    Every type then ends up at the same density ``budget_fraction``; ``shares``
    reports the fraction of the overall budget each type receives.
    """
    if not 0.0 < budget_fraction <= 1.0:
        raise BudgetError(f"budget_fraction must lie in (0, 1], got {budget_fraction}")
    schema = schema if isinstance(schema, ModelSchema) else ModelSchema(schema)
    total = sum(l.dense_flops for l in schema)
    shares = {l.layer_type: l.dense_flops / total for l in schema}
    densities = {l.layer_type: float(budget_fraction) for l in schema}
    return ProportionalAllocation(densities, shares)


def closed_form_allocate(seq_len, dim, budget_params):
    """Minimise ``da (s^2 + s d) + 2 dm s d`` on the line ``da s^2 + dm 2 d^2 = B``.

    A linear objective on a segment is optimal at a corner, so the type with
    the lower time cost per parameter is filled to density 1 first and the
    rest of the budget goes to the other. Equal per-parameter costs split
    into equal densities.
    """
    s, d, B = seq_len, dim, budget_params
    if s <= 0 or d < 0:
        raise PixelflyError(f"need seq_len > 0 and dim >= 0, got {s}, {d}")
    if B <= 0:
        raise InfeasibleError(f"budget must be positive, got {B}")
    p_att, p_mlp = s * s, 2 * d * d
    if B > p_att + p_mlp:
        raise BudgetError(f"budget {B} exceeds the {p_att + p_mlp} dense parameters")
    if p_mlp == 0:
        return (B / p_att, 0.0)
    per_att = (s * s + s * d) / p_att
    per_mlp = 2 * s * d / p_mlp
    if per_att == per_mlp:
        delta = B / (p_att + p_mlp)
        return (delta, delta)
    if per_att < per_mlp:
        da = min(1.0, B / p_att)
        return (da, _clip01((B - da * p_att) / p_mlp))
    dm = min(1.0, B / p_mlp)
    return (_clip01((B - dm * p_mlp) / p_att), dm)


def _clip01(x):
    # absorbs rounding at the corners of the budget line
    return min(1.0, max(0.0, x))


def butterfly_param_count(m, n, hw_block, max_stride):
    """Nonzeros of a flat butterfly of ``max_stride`` stretched to ``m x n``."""
    side = min(m, n) // hw_block
    return side * (1 + int(log2(max_stride))) * hw_block * hw_block * (max(m, n) // min(m, n))


def _check_layer(m, n, hw_block):
    if hw_block < 1 or m % hw_block or n % hw_block:
        raise PixelflyError(f"hw_block {hw_block} does not divide {m}x{n}")
    side = min(m, n) // hw_block
    if side < 2 or not is_power_of_two(side):
        raise PixelflyError(f"min(m, n)/hw_block = {side} must be a power of 2 >= 2")
    if max(m, n) % min(m, n):
        raise PixelflyError(f"{m}x{n} is not an integer stretch of a square")
    return side


def _largest_stride(m, n, hw_block, side, budget):
    k = 0
    s = 2
    while s <= side and butterfly_param_count(m, n, hw_block, s) <= budget:
        k = s
        s *= 2
    return k


def select_layer_mask(m, n, param_budget, hw_block, lowrank_share=1 / 3):
    """Split a layer budget between a low-rank term and a flat butterfly.

    The rank is the largest multiple of ``hw_block`` using at most
    ``lowrank_share`` of the budget; the remainder buys the largest
    ``max_stride``. If the remainder cannot afford ``max_stride = 2`` the rank
    drops to 0. Returns ``(FlatButterflyParams, rank)``.
    """
    side = _check_layer(m, n, hw_block)
    if param_budget > m * n:
        raise BudgetError(f"budget {param_budget} exceeds the {m * n} dense parameters")
    if not 0.0 <= lowrank_share < 1.0:
        raise BudgetError(f"lowrank_share must lie in [0, 1), got {lowrank_share}")
    rank = floor(lowrank_share * param_budget / (m + n)) // hw_block * hw_block
    rank = min(rank, min(m, n) // hw_block * hw_block)
    k = _largest_stride(m, n, hw_block, side, param_budget - rank * (m + n))
    if k == 0 and rank:
        rank = 0
        k = _largest_stride(m, n, hw_block, side, param_budget)
    if k == 0:
        need = butterfly_param_count(m, n, hw_block, 2)
        raise BudgetError(f"budget {param_budget} below the smallest flat butterfly ({need} parameters)")
    return FlatButterflyParams(side, hw_block, k), rank


def sparsify_schema(schema, budget_fraction, hw_block, lowrank_share=1 / 3):
    """Proportional densities, then a butterfly + low-rank choice per layer type.

    ``budget_fraction = 1`` keeps every layer dense.
    """
    schema = schema if isinstance(schema, ModelSchema) else ModelSchema(schema)
    alloc = proportional_allocate(schema, budget_fraction)
    out = {}
    for l in schema:
        density = alloc.densities[l.layer_type]
        if density >= 1.0:
            side = _check_layer(l.m, l.n, hw_block)
            out[l.layer_type] = LayerAssignment(1.0, side, 0, hw_block, l.params, dense=True)
            continue
        params, rank = select_layer_mask(l.m, l.n, floor(density * l.params), hw_block, lowrank_share)
        compute = butterfly_param_count(l.m, l.n, hw_block, params.max_stride) + rank * (l.m + l.n)
        out[l.layer_type] = LayerAssignment(density, params.max_stride, rank, hw_block, compute)
    budget = floor(budget_fraction * dense_compute(schema))
    assignment = Assignment(out, budget)
    used = total_compute(schema, assignment)
    if used > budget:
        raise BudgetError(f"assignment uses {used} parameters, budget is {budget}")
    return assignment


def layer_mask(spec, entry):
    """Concrete :class:`BlockMask` for one layer (a full mask when ``entry.dense``)."""
    if entry.dense:
        return BlockMask.full(spec.m, spec.n, entry.block)
    return generate_pattern(
        PatternSpec("butterfly", spec.m, spec.n, entry.block, max_stride=entry.max_stride)
    )


def dense_compute(schema):
    return sum(l.count * l.params for l in schema)


def total_compute(schema, assignment):
    """``sum(count * (mask nonzeros + rank * (m + n)))`` over layer types."""
    return sum(l.count * assignment[l.layer_type].compute for l in schema)


def schema_from_json(text):
    """Parse a JSON array of ``{type, count, m, n, batch_dim}`` objects."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PixelflyError(f"invalid schema JSON: {exc}") from None
    if not isinstance(raw, list):
        raise PixelflyError("schema JSON must be an array of layer objects")
    layers = []
    for obj in raw:
        try:
            layers.append(
                LayerSpec(obj["type"], obj["count"], obj["m"], obj["n"], obj.get("batch_dim", 1))
            )
        except (KeyError, TypeError) as exc:
            raise PixelflyError(f"bad layer entry {obj!r}: {exc}") from None
    return ModelSchema(layers)


def load_schema(path):
    with open(path) as fh:
        return schema_from_json(fh.read())


def assignment_to_json(assignment):
    body = {
        t: {
            "density": e.density,
            "rank": e.rank,
            "max_stride": e.max_stride,
            "block": e.block,
            "compute": e.compute,
            "dense": e.dense,
        }
        for t, e in assignment.layers.items()
    }
    return json.dumps({"budget": assignment.budget, "layers": body}, indent=2, sort_keys=True) + "\n"
