"""The two headline experiments: prune-then-finetune under each depth
strategy, and pruned-versus-scratch at a fixed target depth.

Every arm starts from the same base model and the same fine-tuning seeds,
so strategy (or provenance) is the only varying factor.  Nothing here
mutates the base model: pruning copies and training clones.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .encoder import EncoderModel, encoder_init
from .errors import InputError
from .evaluation import SimilarityReport, eval_sts
from .pruning import STRATEGIES, plan_prune, prune_model
from .training import TrainConfig, two_phase_pipeline


@dataclass
class ExperimentData:
    nli_train: list
    sts_train: list
    sts_test: list


def _similarity_summary(report: SimilarityReport) -> dict:
    return {"spearman": report.spearman, "pearson": report.pearson,
            "n_pairs": report.n_pairs}


@dataclass
class CompareStrategiesReport:
    k: int
    reports: dict       # strategy -> SimilarityReport
    ordering: list      # strategies, best spearman first (ties keep top/middle/bottom order)
    top_is_best: bool

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "strategies": {s: _similarity_summary(r) for s, r in self.reports.items()},
            "ordering": list(self.ordering),
            "top_is_best": self.top_is_best,
        }


def compare_strategies(base_model: EncoderModel, k: int, data: ExperimentData,
                       cfg_nli: TrainConfig, cfg_sts: TrainConfig) -> CompareStrategiesReport:
    """Prune k layers by each strategy, fine-tune identically, score on the
    held-out pairs."""
    L = base_model.config.num_layers
    reports = {}
    for strategy in STRATEGIES:
        plan = plan_prune(L, strategy, k)
        pruned = prune_model(base_model, plan)
        trained, _ = two_phase_pipeline(pruned, data.nli_train, data.sts_train,
                                        cfg_nli, cfg_sts)
        reports[strategy] = eval_sts(trained, data.sts_test)
    ordering = sorted(STRATEGIES, key=lambda s: -reports[s].spearman)
    top = reports["top"].spearman
    top_is_best = (top >= reports["middle"].spearman
                   and top >= reports["bottom"].spearman)
    return CompareStrategiesReport(k=k, reports=reports, ordering=ordering,
                                   top_is_best=top_is_best)


@dataclass
class PrunedVsScratchReport:
    target_layers: int
    pruned: SimilarityReport
    scratch: SimilarityReport
    winner: str     # "pruned" | "scratch" | "tie"

    def to_dict(self) -> dict:
        return {"target_layers": self.target_layers,
                "pruned": _similarity_summary(self.pruned),
                "scratch": _similarity_summary(self.scratch),
                "winner": self.winner}


def pruned_vs_scratch(base_model: EncoderModel, target_layers: int,
                      data: ExperimentData, cfg_nli: TrainConfig,
                      cfg_sts: TrainConfig,
                      scratch_seed: Optional[int] = None) -> PrunedVsScratchReport:
    """Arm A: keep the bottom target_layers of the base model (top prune)
    and fine-tune.  Arm B: a fresh random model of the same width and depth
    target_layers through the identical fine-tune.  Both score on the same
    held-out pairs."""
    L = base_model.config.num_layers
    if not 1 <= target_layers < L:
        raise InputError(
            f"target_layers must lie in [1, {L - 1}], got {target_layers}")

    plan = plan_prune(L, "top", L - target_layers)
    arm_a = prune_model(base_model, plan)
    trained_a, _ = two_phase_pipeline(arm_a, data.nli_train, data.sts_train,
                                      cfg_nli, cfg_sts)
    report_a = eval_sts(trained_a, data.sts_test)

    seed_b = base_model.config.seed if scratch_seed is None else scratch_seed
    arm_b = encoder_init(replace(base_model.config, num_layers=target_layers,
                                 seed=seed_b))
    arm_b.vocab = base_model.vocab
    trained_b, _ = two_phase_pipeline(arm_b, data.nli_train, data.sts_train,
                                      cfg_nli, cfg_sts)
    report_b = eval_sts(trained_b, data.sts_test)

    if report_a.spearman > report_b.spearman:
        winner = "pruned"
    elif report_a.spearman < report_b.spearman:
        winner = "scratch"
    else:
        winner = "tie"
    return PrunedVsScratchReport(target_layers=target_layers, pruned=report_a,
                                 scratch=report_b, winner=winner)
