"""Class-incremental task orchestration and strategy benchmarks.

Task 0's class is the normal regime; task i (1-based) introduces the i-th
class. Strategies:

- rcl: per-class generators produce pseudo data for every previous class; a
  fresh ensemble is trained per task on {pseudo previous + raw new}.
- finetune: one ensemble carried across tasks; each new task extends the
  output head and continues training on {raw normal + raw newest} only.
- ewc: finetune plus a quadratic anchor to the previous task's parameters
  weighted by a Fisher diagonal (zero weight on freshly appended head units).
- baseline: retrains a fresh ensemble per task on raw data of all classes
  seen so far.

Classes are relabeled to their position in the task order; every run records
position -> original id. All randomness derives from the run seed, never from
the strategy name, so two strategies given equal seeds share identical
streams.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .classifier import (
    Ensemble,
    EWCPenalty,
    NetSpec,
    TrainConfig,
    extend_output,
    fisher_diagonal,
    fit_ensemble,
    member_probabilities,
    pad_parameters,
    predict,
    train,
)
from .data import (
    SYNTHETIC_TRIAL_ID,
    TimeSeriesTrial,
    WindowedSample,
    apply_standardizer,
    fit_standardizer,
    window_trial,
)
from .errors import ConfigurationError, DataFormatError
from .generator import ClassGenerator, GenerationRequest, fit_generator, generate
from .metrics import ConfusionMatrix, MetricReport, aggregate, confusion, metrics
from .seeding import derive_seed

STRATEGIES = ("rcl", "ewc", "finetune", "baseline")


@dataclass(eq=False)
class TaskSequence:
    """Windowed train/test splits per class position.

    train[p] and test[p] hold samples relabeled to position p; class_ids[p]
    is the original class id. Train and test never share a trial id.
    """

    class_ids: list[int]
    train: list[list[WindowedSample]]
    test: list[list[WindowedSample]]
    window: int
    channels: int

    def __post_init__(self):
        if len(self.class_ids) < 2:
            raise ConfigurationError("need at least 2 classes (one task)")
        if not (len(self.train) == len(self.test) == len(self.class_ids)):
            raise ConfigurationError("class_ids, train and test must align")
        for p in range(len(self.class_ids)):
            if not self.train[p]:
                raise DataFormatError(f"class {self.class_ids[p]}: no training windows")
            if not self.test[p]:
                raise DataFormatError(f"class {self.class_ids[p]}: no test windows")

    @property
    def n_tasks(self) -> int:
        return len(self.class_ids) - 1

    @classmethod
    def from_trials(
        cls,
        trials: list[TimeSeriesTrial],
        window: int,
        stride: int | None = None,
        train_trials: tuple[int, ...] = (1,),
        class_order: list[int] | None = None,
    ) -> "TaskSequence":
        """Split trials into train (listed trial ids) and test (the rest)."""
        present = sorted({t.class_id for t in trials})
        order = present if class_order is None else list(class_order)
        missing = [c for c in order if c not in present]
        if missing:
            raise ConfigurationError(f"classes {missing} not present in the data")
        if len(set(order)) != len(order):
            raise ConfigurationError("class_order contains duplicates")

        train_ids = set(train_trials)
        train: list[list[WindowedSample]] = []
        test: list[list[WindowedSample]] = []
        for pos, cid in enumerate(order):
            tr: list[WindowedSample] = []
            te: list[WindowedSample] = []
            for trial in sorted(
                (t for t in trials if t.class_id == cid), key=lambda t: t.trial_id
            ):
                windows = window_trial(trial, window, stride)
                for s in windows:
                    s.class_id = pos
                (tr if trial.trial_id in train_ids else te).extend(windows)
            train.append(tr)
            test.append(te)
        channels = trials[0].n_channels if trials else 0
        return cls(class_ids=order, train=train, test=test, window=window, channels=channels)


@dataclass(frozen=True)
class GeneratorConfig:
    k: int = 5
    memory_budget: int | None = None
    pseudo_per_class: int | None = None  # None: match the new class's size

    def __post_init__(self):
        if self.pseudo_per_class is not None and self.pseudo_per_class < 1:
            raise ConfigurationError(
                f"pseudo_per_class must be >= 1, got {self.pseudo_per_class}"
            )


@dataclass(eq=False)
class TaskResult:
    task_index: int  # 1-based
    class_ids: list[int]  # original ids covered by this task's evaluation
    cm: ConfusionMatrix
    report: MetricReport
    member_f_std: float
    replay_counts: dict[int, int]  # original class id -> pseudo samples used
    train_provenance: list[tuple[int, int, int]]  # (position, trial_id, start)


@dataclass(eq=False)
class ContinualRun:
    strategy: str
    seed: int
    class_ids: list[int]
    tasks: list[TaskResult]
    generators: dict[int, ClassGenerator]  # position -> generator (rcl only)
    ensembles: list[Ensemble]  # one per task
    memory_footprint: int  # raw previous-class windows retained


def _templates(seq: TaskSequence, net) -> list[NetSpec]:
    if isinstance(net, NetSpec):
        nets = [net] * seq.n_tasks
    else:
        nets = list(net)
        if len(nets) != seq.n_tasks:
            raise ConfigurationError(
                f"need one net spec or {seq.n_tasks}, got {len(nets)}"
            )
    return nets


def _task_spec(template: NetSpec, seq: TaskSequence, n_classes: int) -> NetSpec:
    return replace(
        template, input_shape=(seq.window, seq.channels), n_classes=n_classes
    )


def _provenance(mix: list[WindowedSample]) -> list[tuple[int, int, int]]:
    return [(s.class_id, s.source[0], s.source[1]) for s in mix]


def _evaluate(ensemble: Ensemble, seq: TaskSequence, upto: int) -> tuple[ConfusionMatrix, MetricReport, float]:
    batch: list[WindowedSample] = []
    y_true: list[int] = []
    for p in range(upto + 1):
        batch.extend(seq.test[p])
        y_true.extend([p] * len(seq.test[p]))
    y_pred = predict(ensemble, batch)
    cm = confusion(y_true, y_pred, upto + 1)
    report = metrics(cm)

    probs = member_probabilities(ensemble, batch)
    member_f = [
        metrics(confusion(y_true, np.argmax(p, axis=1), upto + 1)).macro_f for p in probs
    ]
    return cm, report, float(np.std(member_f))


def _fit_class_generator(
    seq: TaskSequence, pos: int, gen_config: GeneratorConfig, seed: int, task_index: int
) -> ClassGenerator:
    try:
        return fit_generator(
            class_id=pos,
            samples=seq.train[pos],
            k=gen_config.k,
            memory_budget=gen_config.memory_budget,
            seed=derive_seed(seed, "generator", pos),
        )
    except (ConfigurationError, DataFormatError) as exc:
        raise type(exc)(
            f"task {task_index}: generator for class {seq.class_ids[pos]}: {exc}"
        ) from exc


def run_rcl(
    seq: TaskSequence,
    net,
    train_config: TrainConfig,
    gen_config: GeneratorConfig = GeneratorConfig(),
    seed: int = 0,
    n_members: int = 5,
) -> ContinualRun:
    """Pseudo-replay: fresh ensemble per task on generated previous classes
    plus the raw new class. Previous-class raw windows are never trained on;
    only generator memories retain raw data."""
    nets = _templates(seq, net)
    generators: dict[int, ClassGenerator] = {}
    ensembles: list[Ensemble] = []
    tasks: list[TaskResult] = []
    for i in range(1, seq.n_tasks + 1):
        for pos in range(i + 1):
            if pos not in generators:
                generators[pos] = _fit_class_generator(seq, pos, gen_config, seed, i)
        mix: list[WindowedSample] = []
        replay: dict[int, int] = {}
        pseudo_count = gen_config.pseudo_per_class or len(seq.train[i])
        for pos in range(i):
            pseudo = generate(
                generators[pos],
                GenerationRequest(pseudo_count),
                seed=derive_seed(seed, "replay", i, pos),
            )
            mix.extend(pseudo)
            replay[seq.class_ids[pos]] = pseudo_count
        mix.extend(seq.train[i])

        ens = fit_ensemble(
            _task_spec(nets[i - 1], seq, i + 1),
            mix,
            train_config,
            seed=derive_seed(seed, "task", i),
            n_members=n_members,
        )
        ensembles.append(ens)
        cm, report, spread = _evaluate(ens, seq, i)
        tasks.append(
            TaskResult(
                task_index=i,
                class_ids=seq.class_ids[: i + 1],
                cm=cm,
                report=report,
                member_f_std=spread,
                replay_counts=replay,
                train_provenance=_provenance(mix),
            )
        )
    return ContinualRun(
        strategy="rcl",
        seed=seed,
        class_ids=seq.class_ids,
        tasks=tasks,
        generators=generators,
        ensembles=ensembles,
        memory_footprint=sum(g.memory_size for g in generators.values()),
    )


def run_baseline(
    seq: TaskSequence,
    net,
    train_config: TrainConfig,
    seed: int = 0,
    n_members: int = 5,
) -> ContinualRun:
    """Upper reference: fresh ensemble per task on raw data of every class
    seen so far."""
    nets = _templates(seq, net)
    ensembles: list[Ensemble] = []
    tasks: list[TaskResult] = []
    for i in range(1, seq.n_tasks + 1):
        mix: list[WindowedSample] = []
        for pos in range(i + 1):
            mix.extend(seq.train[pos])
        ens = fit_ensemble(
            _task_spec(nets[i - 1], seq, i + 1),
            mix,
            train_config,
            seed=derive_seed(seed, "task", i),
            n_members=n_members,
        )
        ensembles.append(ens)
        cm, report, spread = _evaluate(ens, seq, i)
        tasks.append(
            TaskResult(
                task_index=i,
                class_ids=seq.class_ids[: i + 1],
                cm=cm,
                report=report,
                member_f_std=spread,
                replay_counts={},
                train_provenance=_provenance(mix),
            )
        )
    return ContinualRun(
        strategy="baseline",
        seed=seed,
        class_ids=seq.class_ids,
        tasks=tasks,
        generators={},
        ensembles=ensembles,
        memory_footprint=sum(len(t) for t in seq.train),
    )


def _run_sequential(
    seq: TaskSequence,
    net,
    train_config: TrainConfig,
    seed: int,
    n_members: int,
    lam: float | None,
    strategy: str,
) -> ContinualRun:
    """Shared engine for finetune (lam None) and ewc (lam float).

    A lam of 0.0 still computes Fisher snapshots but contributes no term to
    the loss, so its parameter trajectory is bit-identical to finetune under
    the same seed.
    """
    nets = _templates(seq, net)
    # the carried ensemble can only grow its head, not change architecture
    base = replace(nets[0], n_classes=2, seed=0)
    for candidate in nets[1:]:
        if replace(candidate, n_classes=2, seed=0) != base:
            raise ConfigurationError(
                f"{strategy} carries one model across tasks and cannot switch"
                " architectures; per-task net specs must match"
            )
    ensembles: list[Ensemble] = []
    tasks: list[TaskResult] = []

    mix = seq.train[0] + seq.train[1]
    ens = fit_ensemble(
        _task_spec(nets[0], seq, 2),
        mix,
        train_config,
        seed=derive_seed(seed, "task", 1),
        n_members=n_members,
    )
    ensembles.append(ens)
    cm, report, spread = _evaluate(ens, seq, 1)
    tasks.append(
        TaskResult(1, seq.class_ids[:2], cm, report, spread, {}, _provenance(mix))
    )

    anchors: list[np.ndarray] | None = None
    fishers: list[np.ndarray] | None = None

    def snapshot(current: Ensemble, training_mix: list[WindowedSample]):
        standardized = [apply_standardizer(current.standardizer, s) for s in training_mix]
        thetas = [m.parameters.copy() for m in current.members]
        fish = [fisher_diagonal(m, standardized) for m in current.members]
        return thetas, fish

    if lam is not None and seq.n_tasks >= 2:
        anchors, fishers = snapshot(ens, mix)

    for i in range(2, seq.n_tasks + 1):
        # the carried model sees only raw normal data plus the newest class
        mix = seq.train[0] + seq.train[i]
        standardizer = fit_standardizer(mix)
        standardized = [apply_standardizer(standardizer, s) for s in mix]
        new_members = []
        for m_idx, member in enumerate(ens.members):
            extended = extend_output(member, 1, derive_seed(seed, "head", i, m_idx))
            penalty = None
            if lam is not None:
                penalty = EWCPenalty(
                    lam=lam,
                    theta_star=pad_parameters(member.spec, extended.spec, anchors[m_idx]),
                    fisher=pad_parameters(member.spec, extended.spec, fishers[m_idx]),
                )
            member_cfg = replace(
                train_config, shuffle_seed=derive_seed(seed, "task", i, "shuffle", m_idx)
            )
            new_members.append(train(extended, standardized, member_cfg, penalty).model)
        ens = Ensemble(members=new_members, standardizer=standardizer)
        ensembles.append(ens)
        if lam is not None and i < seq.n_tasks:
            anchors, fishers = snapshot(ens, mix)
        cm, report, spread = _evaluate(ens, seq, i)
        tasks.append(
            TaskResult(i, seq.class_ids[: i + 1], cm, report, spread, {}, _provenance(mix))
        )

    return ContinualRun(
        strategy=strategy,
        seed=seed,
        class_ids=seq.class_ids,
        tasks=tasks,
        generators={},
        ensembles=ensembles,
        memory_footprint=len(seq.train[0]) if seq.n_tasks >= 2 else 0,
    )


def run_finetune(
    seq: TaskSequence,
    net,
    train_config: TrainConfig,
    seed: int = 0,
    n_members: int = 5,
) -> ContinualRun:
    return _run_sequential(seq, net, train_config, seed, n_members, None, "finetune")


def run_ewc(
    seq: TaskSequence,
    net,
    train_config: TrainConfig,
    lam: float = 100.0,
    seed: int = 0,
    n_members: int = 5,
) -> ContinualRun:
    if lam < 0:
        raise ConfigurationError(f"lam must be >= 0, got {lam}")
    return _run_sequential(seq, net, train_config, seed, n_members, lam, "ewc")


@dataclass(frozen=True)
class RunSettings:
    """Everything a strategy run needs besides the sequence and seed."""

    net: object  # NetSpec or list of NetSpec per task
    train: TrainConfig = TrainConfig()
    generator: GeneratorConfig = GeneratorConfig()
    ewc_lambda: float = 100.0
    n_members: int = 5


def run_strategy(
    strategy: str, seq: TaskSequence, settings: RunSettings, seed: int
) -> ContinualRun:
    if strategy == "rcl":
        return run_rcl(seq, settings.net, settings.train, settings.generator, seed, settings.n_members)
    if strategy == "ewc":
        return run_ewc(seq, settings.net, settings.train, settings.ewc_lambda, seed, settings.n_members)
    if strategy == "finetune":
        return run_finetune(seq, settings.net, settings.train, seed, settings.n_members)
    if strategy == "baseline":
        return run_baseline(seq, settings.net, settings.train, seed, settings.n_members)
    raise ConfigurationError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")


@dataclass(eq=False)
class StrategySummary:
    strategy: str
    per_task_mean: list[MetricReport]
    per_task_std: list[MetricReport]
    member_spread: list[float]  # mean member macro-F std per task
    replay_counts: list[dict[int, int]]
    memory_footprint: int


@dataclass(eq=False)
class ComparisonReport:
    class_ids: list[int]
    repetitions: int
    strategies: list[str]
    summaries: dict[str, StrategySummary]
    runs: dict[str, list[ContinualRun]]


def compare_strategies(
    seq: TaskSequence,
    settings: RunSettings,
    strategies: tuple[str, ...] = STRATEGIES,
    repetitions: int = 5,
    master_seed: int = 0,
    rep_seeds: list[int] | None = None,
) -> ComparisonReport:
    """Run each strategy `repetitions` times on seeds derived per (strategy,
    repetition) and aggregate per-task metrics across repetitions.

    rep_seeds overrides derivation with explicit per-repetition seeds shared
    by all strategies (useful for paired comparisons).
    """
    if repetitions < 1:
        raise ConfigurationError(f"repetitions must be >= 1, got {repetitions}")
    if not strategies:
        raise ConfigurationError("no strategies requested")
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigurationError(f"unknown strategy {s!r}; choose from {STRATEGIES}")
    if rep_seeds is not None and len(rep_seeds) != repetitions:
        raise ConfigurationError("rep_seeds length must equal repetitions")

    runs: dict[str, list[ContinualRun]] = {}
    summaries: dict[str, StrategySummary] = {}
    for strat in strategies:
        strat_runs = []
        for r in range(repetitions):
            seed = rep_seeds[r] if rep_seeds is not None else derive_seed(
                master_seed, "strategy", strat, "rep", r
            )
            strat_runs.append(run_strategy(strat, seq, settings, seed))
        runs[strat] = strat_runs

        per_task_mean, per_task_std, spread = [], [], []
        for t in range(seq.n_tasks):
            mean, std = aggregate([run.tasks[t].report for run in strat_runs])
            per_task_mean.append(mean)
            per_task_std.append(std)
            spread.append(float(np.mean([run.tasks[t].member_f_std for run in strat_runs])))
        summaries[strat] = StrategySummary(
            strategy=strat,
            per_task_mean=per_task_mean,
            per_task_std=per_task_std,
            member_spread=spread,
            replay_counts=[dict(strat_runs[0].tasks[t].replay_counts) for t in range(seq.n_tasks)],
            memory_footprint=strat_runs[0].memory_footprint,
        )
    return ComparisonReport(
        class_ids=seq.class_ids,
        repetitions=repetitions,
        strategies=list(strategies),
        summaries=summaries,
        runs=runs,
    )


# ---------------------------------------------------------------------------
# audits


@dataclass(eq=False)
class PurityAudit:
    clean: bool
    violations: list[str]


def audit_replay_purity(run: ContinualRun) -> PurityAudit:
    """Check no raw window of a previous class entered any task's training mix."""
    violations = []
    for task in run.tasks:
        for pos, trial_id, start in task.train_provenance:
            if pos < task.task_index and trial_id != SYNTHETIC_TRIAL_ID:
                violations.append(
                    f"task {task.task_index}: raw window of class {run.class_ids[pos]} "
                    f"(trial {trial_id}, start {start})"
                )
    return PurityAudit(clean=not violations, violations=violations)


def audit_memory(run: ContinualRun, gen_config: GeneratorConfig) -> PurityAudit:
    """Check the reported footprint is the exact retained count within budget."""
    violations = []
    total = sum(g.memory_size for g in run.generators.values())
    if run.memory_footprint != total:
        violations.append(
            f"footprint {run.memory_footprint} != retained total {total}"
        )
    if gen_config.memory_budget is not None:
        for pos, gen in run.generators.items():
            if gen.memory_size > gen_config.memory_budget:
                violations.append(
                    f"class {run.class_ids[pos]}: memory {gen.memory_size} "
                    f"exceeds budget {gen_config.memory_budget}"
                )
    return PurityAudit(clean=not violations, violations=violations)
