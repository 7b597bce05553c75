"""Normal and novel-query evaluation protocols over all systems."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..adaptation import CaseDifferenceAdapter, save_adapter
from ..baselines import ConstantRegressor, NeuralRegressor, save_regressor
from ..casebase import CaseBase, SplitPlan, generate_synthetic, kfold_split, load_cases, novel_split
from ..exceptions import FoldError
from ..retrieval import L1Retriever, SiameseRetriever, save_siamese
from .config import ExperimentConfig
from .report import MEAN_FOLD, ExperimentReport, ReportRow

_STREAMS = {"split": 0, "regressor": 1, "siamese": 2, "adapter": 3}
NO_BACKEND = "-"


def component_seed(seed: int, component: str, fold: int | None = None) -> int:
    """Independent 32-bit seed for one component, so components never share a stream."""
    key = [seed, _STREAMS[component]] if fold is None else [seed, _STREAMS[component], fold]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def load_data(cfg: ExperimentConfig) -> CaseBase:
    return load_cases(cfg.data_path) if cfg.data_path else generate_synthetic(cfg.synth)


def make_regressor(cfg, fold):
    return NeuralRegressor(
        hidden_widths=cfg.hidden_widths,
        dropout_rate=cfg.dropout_rate,
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        target_scaling=cfg.target_scaling,
        random_state=component_seed(cfg.seed, "regressor", fold),
    )


def make_adapter(cfg, fold):
    return CaseDifferenceAdapter(
        hidden_widths=cfg.hidden_widths,
        dropout_rate=cfg.dropout_rate,
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        target_scaling=cfg.target_scaling,
        random_state=component_seed(cfg.seed, "adapter", fold),
    )


def make_retriever(cfg, backend, fold):
    if backend == "l1":
        return L1Retriever()
    return SiameseRetriever(
        embedding_dim=cfg.embedding_dim,
        hidden_widths=cfg.siamese_widths,
        dropout_rate=cfg.siamese_dropout,
        margin=cfg.margin,
        same_tolerance=cfg.same_tolerance,
        negative_gap=cfg.negative_gap,
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        random_state=component_seed(cfg.seed, "siamese", fold),
    )


class FoldSystems:
    """Every system of one fold, fitted on the same training/validation cases."""

    def __init__(self, cfg: ExperimentConfig, train: CaseBase, val: CaseBase, fold: int, adapter_factory=None):
        X, y = train.features, train.solutions
        eval_set = (val.features, val.solutions)
        self.train = train
        self.constant = ConstantRegressor().fit(X, y)
        self.regressor = make_regressor(cfg, fold).fit(X, y, eval_set=eval_set)
        self.retrievers = {b: make_retriever(cfg, b, fold).fit(X, y, eval_set=eval_set) for b in cfg.retrieval_backends}
        factory = adapter_factory or make_adapter
        self.adapters = {}
        shared = None
        for b, retriever in self.retrievers.items():
            partners = None
            if cfg.adapter_validation == "retriever":
                partners = retriever.retrieve(val.features)[0]
            elif shared is not None:
                self.adapters[b] = shared
                continue
            adapter = factory(cfg, fold).fit(X, y, eval_set=eval_set, val_partners=partners)
            self.adapters[b] = adapter
            if partners is None:
                shared = adapter

    def save(self, directory, fold):
        """Write each trained network of this fold as ``fold{k}-{system}.npz``."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)

        def meta(est):
            return est.random_state, est.training_log_.best_epoch

        save_regressor(out / f"fold{fold}-regressor.npz", self.regressor.model_, *meta(self.regressor))
        for b, retriever in self.retrievers.items():
            if isinstance(retriever, SiameseRetriever):
                save_siamese(out / f"fold{fold}-siamese.npz", retriever.model_, *meta(retriever))
        # one shared adapter unless each backend selected its own on its retrievals
        shared = len({id(a) for a in self.adapters.values()}) == 1
        for b, adapter in self.adapters.items():
            if isinstance(adapter, CaseDifferenceAdapter):
                name = "adapter" if shared else f"adapter-{b}"
                save_adapter(out / f"fold{fold}-{name}.npz", adapter.model_, *meta(adapter))
                if shared:
                    break

    def score(self, setting, query_range, fold, queries: CaseBase):
        n = len(queries)
        rows = []

        def row(system, backend, err):
            rows.append(ReportRow(setting, query_range, system, backend, fold, n,
                                  None if err is None else float(np.mean(err))))

        if n == 0:
            for system in ("constant", "regressor"):
                row(system, NO_BACKEND, None)
            for b in self.retrievers:
                row("retrieve", b, None)
                row("adapt", b, None)
            return rows
        Q, truth = queries.features, queries.solutions
        row("constant", NO_BACKEND, np.abs(self.constant.predict(Q) - truth))
        row("regressor", NO_BACKEND, np.abs(self.regressor.predict(Q) - truth))
        for b, retriever in self.retrievers.items():
            idx, _, retrieved = retriever.retrieve(Q)
            # the adapted answer starts from the very case scored in the retrieve row
            delta = self.adapters[b].predict_delta(Q, self.train.features[idx])
            row("retrieve", b, np.abs(retrieved - truth))
            row("adapt", b, np.abs(retrieved + delta - truth))
        return rows


def _fold_rows(cfg, cb, fold, adapter_factory):
    try:
        if cfg.setting == "normal":
            plan = SplitPlan.normal(cfg.fold_count)
            train, val, test = kfold_split(cb, plan, fold, component_seed(cfg.seed, "split"))
            systems = FoldSystems(cfg, train, val, fold, adapter_factory)
            if cfg.checkpoint_dir:
                systems.save(cfg.checkpoint_dir, fold)
            return systems.score("normal", "all", fold, test)
        plan = SplitPlan.novel(cfg.fold_count)
        split = novel_split(cb, plan, fold, component_seed(cfg.seed, "split"))
        systems = FoldSystems(cfg, split.train, split.validation, fold, adapter_factory)
        if cfg.checkpoint_dir:
            systems.save(cfg.checkpoint_dir, fold)
        rows = []
        for name, bucket in split.buckets:
            rows.extend(systems.score("novel", name, fold, bucket))
        return rows
    except Exception as exc:
        raise FoldError(fold, exc) from exc


def _fold_means(rows):
    groups = {}
    for r in rows:
        groups.setdefault((r.setting, r.query_range, r.system, r.backend), []).append(r)
    means = []
    for (setting, qr, system, backend), members in groups.items():
        scored = [m.mae for m in members if m.mae is not None]
        means.append(ReportRow(setting, qr, system, backend, MEAN_FOLD,
                               sum(m.count for m in members),
                               float(np.mean(scored)) if scored else None))
    return means


def run_experiment(cfg: ExperimentConfig, case_base: CaseBase | None = None, adapter_factory=None) -> ExperimentReport:
    """Run every configured fold; ``adapter_factory(cfg, fold)`` may replace the adapter."""
    cb = case_base if case_base is not None else load_data(cfg)
    folds = cfg.fold_indices
    if cfg.n_jobs > 1 and adapter_factory is None and len(folds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.n_jobs, len(folds))) as pool:
            per_fold = list(pool.map(_fold_rows, [cfg] * len(folds), [cb] * len(folds), folds, [None] * len(folds)))
    else:
        per_fold = [_fold_rows(cfg, cb, f, adapter_factory) for f in folds]
    rows = [r for fold_rows in per_fold for r in fold_rows]
    ranges = ("all",) if cfg.setting == "normal" else tuple(b.name for b in SplitPlan.novel(cfg.fold_count).query_buckets)
    return ExperimentReport(rows + _fold_means(rows), ranges)


def run_normal(cfg: ExperimentConfig, case_base=None, adapter_factory=None) -> ExperimentReport:
    if cfg.setting != "normal":
        raise ValueError("run_normal needs setting = normal")
    return run_experiment(cfg, case_base, adapter_factory)


def run_novel(cfg: ExperimentConfig, case_base=None, adapter_factory=None) -> ExperimentReport:
    if cfg.setting != "novel":
        raise ValueError("run_novel needs setting = novel")
    return run_experiment(cfg, case_base, adapter_factory)
