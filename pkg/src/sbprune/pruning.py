"""Layer pruning: resolve a strategy into an explicit retention plan and
execute it without touching a single retained weight.

Layer indices are 0-based bottom-up: layer 0 is nearest the input, layer
L-1 nearest the output.  "top" removes the k highest indices, "bottom" the
k lowest, "middle" a contiguous block of k starting at floor((L-k)/2).
Only (strategy, k) is ever exposed; callers never pass raw index lists.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .encoder import EncoderModel, LayerParams
from .errors import InputError, PlanError
from .tensor import Tensor

STRATEGIES = ("top", "middle", "bottom")


@dataclass(frozen=True)
class PrunePlan:
    original_layers: int
    retained: tuple
    removed: tuple

    def to_dict(self) -> dict:
        return {
            "original_layers": self.original_layers,
            "retained": list(self.retained),
            "removed": list(self.removed),
        }


def plan_prune(num_layers: int, strategy: str, k: int) -> PrunePlan:
    """Resolve (strategy, k) against an L-layer model."""
    if num_layers < 1:
        raise InputError(f"model must have at least one layer, got {num_layers}")
    if strategy not in STRATEGIES:
        raise InputError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")
    if k < 0:
        raise InputError(f"k must be non-negative, got {k}")
    if k >= num_layers:
        raise PlanError(
            f"cannot remove all layers: k={k} with only {num_layers} layers"
        )
    if strategy == "top":
        removed = range(num_layers - k, num_layers)
    elif strategy == "bottom":
        removed = range(0, k)
    else:
        start = (num_layers - k) // 2
        removed = range(start, start + k)
    removed = tuple(removed)
    gone = set(removed)
    retained = tuple(i for i in range(num_layers) if i not in gone)
    return PrunePlan(original_layers=num_layers, retained=retained, removed=removed)


def _copy_tensor(t: Tensor) -> Tensor:
    return Tensor(np.copy(t.data), requires_grad=t.requires_grad)


def prune_model(model: EncoderModel, plan: PrunePlan) -> EncoderModel:
    """New model keeping exactly the planned layers, weights copied bitwise.

    The input model is left untouched; embeddings and the vocabulary carry
    over unchanged (they are not layers).
    """
    if plan.original_layers != model.config.num_layers:
        raise PlanError(
            f"plan is for {plan.original_layers} layers, model has "
            f"{model.config.num_layers}"
        )
    layers = []
    for src in plan.retained:
        old = model.layers[src]
        layers.append(LayerParams(**{
            attr: _copy_tensor(getattr(old, attr)) for _, attr in LayerParams.NAMED
        }))
    config = replace(model.config, num_layers=len(plan.retained))
    return EncoderModel(config=config,
                        token_embedding=_copy_tensor(model.token_embedding),
                        position_embedding=_copy_tensor(model.position_embedding),
                        layers=layers, vocab=model.vocab)


@dataclass
class VerificationReport:
    ok: bool
    checks: list        # [{"check", "ok", "detail"}]
    layer_diffs: list   # [{"output_layer", "source_layer", "max_abs_diff"}]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": self.checks, "layer_diffs": self.layer_diffs}


def verify_prune(original: EncoderModel, pruned: EncoderModel,
                 plan: PrunePlan) -> VerificationReport:
    """Audit a pruned model against its source; failures become report
    entries, never exceptions."""
    checks = []
    layer_diffs = []

    def check(name, ok, detail=""):
        checks.append({"check": name, "ok": bool(ok), "detail": detail})

    r, g = plan.retained, plan.removed
    arithmetic = (
        len(r) + len(g) == plan.original_layers
        and len(set(r) | set(g)) == plan.original_layers
        and not (set(r) & set(g))
        and list(r) == sorted(r) and len(r) >= 1
    )
    check("plan_arithmetic", arithmetic,
          f"retained {len(r)} + removed {len(g)} vs original {plan.original_layers}")
    check("original_layer_count", original.config.num_layers == plan.original_layers,
          f"model {original.config.num_layers} vs plan {plan.original_layers}")
    check("pruned_layer_count", pruned.config.num_layers == len(r),
          f"model {pruned.config.num_layers} vs plan |retained| {len(r)}")

    for name, attr in (("token_embedding", "token_embedding"),
                       ("position_embedding", "position_embedding")):
        a = getattr(original, attr).data
        b = getattr(pruned, attr).data
        same = a.shape == b.shape and a.tobytes() == b.tobytes()
        check(f"{name}_identical", same, "" if same else "embedding tensors differ")

    countable = min(len(pruned.layers), len(r))
    for j in range(countable):
        src = r[j]
        if src >= len(original.layers):
            check(f"layer.{j}_source", False, f"plan retains layer {src}, out of range")
            continue
        a, b = original.layers[src], pruned.layers[j]
        worst = 0.0
        for _, attr in LayerParams.NAMED:
            ta, tb = getattr(a, attr).data, getattr(b, attr).data
            if ta.shape != tb.shape:
                worst = float("inf")
                break
            d = np.abs(ta.astype(np.float64) - tb.astype(np.float64)).max() if ta.size else 0.0
            worst = max(worst, float(d))
        layer_diffs.append({"output_layer": j, "source_layer": src,
                            "max_abs_diff": worst})

    ok = (all(c["ok"] for c in checks)
          and len(layer_diffs) == len(r)
          and all(d["max_abs_diff"] == 0.0 for d in layer_diffs))
    return VerificationReport(ok=ok, checks=checks, layer_diffs=layer_diffs)
