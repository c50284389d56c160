"""(p, q) experiment grid: cell synthesis, method dispatch and orchestration."""

from __future__ import annotations

import logging
import signal
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from ..correction import CorrectionKind, estimate_T_anchor, estimate_T_trusted, find_anchors, glc_fit_full
from ..corruption import CorruptionSpec, measure_quality
from ..data import BiqualityDataset, LabeledSet, concat, empty_like, stratified_split_indices
from ..learner import ProbClassifier, TrainConfig, evaluate, fit
from ..reweighting import KmmConfig, diw_fit_full, irbl_fit_full
from ..transfer import MtlConfig, mtl_fit, tradaboost_fit
from .datasets import load_csv, make_blobs

log = logging.getLogger(__name__)

OK, NOT_APPLICABLE, FAILED = "ok", "not-applicable", "failed"

BASE_METHODS = (
    "trusted-only",
    "naive-union",
    "GLC-forward",
    "GLC-backward",
    "IRBL",
    "DIW",
    "MTL",
    "TrAdaBoost",
)

# (needs trusted rows, needs untrusted rows)
REQUIREMENTS = {
    "trusted-only": (True, False),
    "naive-union": (False, True),
    "GLC-forward": (True, True),
    "GLC-backward": (True, True),
    "IRBL": (True, True),
    "DIW": (True, True),
    "MTL": (True, True),
    "TrAdaBoost": (True, True),
}

# stream tags for derived seeds
_DATA, _TEST, _TRUST, _NOISE = 0, 1, 2, 3


def derive_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def base_method(name: str) -> str:
    return "MTL" if name.startswith("MTL") else name


def applicable(method: str, ds: BiqualityDataset) -> bool:
    need_t, need_u = REQUIREMENTS[base_method(method)]
    has_t = int(ds.trusted.labeled_mask.sum()) > 0
    has_u = len(ds.untrusted) > 0
    return (has_t or not need_t) and (has_u or not need_u)


@dataclass(frozen=True)
class ExperimentGrid:
    dataset: dict
    p_values: tuple[float, ...]
    noise: tuple[CorruptionSpec, ...]
    methods: tuple[str, ...]
    seeds: tuple[int, ...]
    test_fraction: float = 0.3
    train: TrainConfig = field(default_factory=TrainConfig)
    kmm: KmmConfig = field(default_factory=KmmConfig)
    tradaboost_rounds: int = 10
    trusted_weight: float = 1.0
    diagonal_loading: bool = False
    timeout: float = 300.0
    seed_base: int = 0

    def __post_init__(self):
        if not (self.p_values and self.noise and self.methods and self.seeds):
            raise ValueError("p_values, noise, methods and seeds must be nonempty")
        if list(self.p_values) != sorted(self.p_values):
            raise ValueError("p_values must be sorted ascending")
        if any(not 0.0 <= p <= 1.0 for p in self.p_values):
            raise ValueError("p values must lie in [0, 1]")
        for m in self.methods:
            if base_method(m) not in REQUIREMENTS:
                raise ValueError(f"unknown method {m!r}")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate methods")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")

    def cells(self):
        for pi in range(len(self.p_values)):
            for si in range(len(self.noise)):
                for seed in self.seeds:
                    yield pi, si, seed


@dataclass
class ResultRecord:
    method: str
    p: float
    noise: str
    q: float | None
    seed: int
    accuracy: float | None
    balanced_accuracy: float | None
    mean_log_loss: float | None
    wall_time: float
    status: str = OK
    error: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def mtl_lambda(name: str) -> float:
    return float(name[name.index("(") + 1 : name.rindex(")")])


# Cells --------------------------------------------------------------------

@lru_cache(maxsize=4)
def _load_csv_cached(path: str, label_column: str, features) -> LabeledSet:
    return load_csv(path, label_column, "rest" if features == "rest" else list(features))


def load_clean(dataset: dict, seed: int) -> LabeledSet:
    """Clean data for one seed. Blob data is redrawn per seed; CSV data is fixed."""
    kind = dataset.get("kind", "blobs")
    if kind == "blobs":
        return make_blobs(
            int(dataset.get("n_samples", 2000)),
            int(dataset.get("classes", 2)),
            int(dataset.get("dim", 2)),
            float(dataset.get("separation", 3.0)),
            derive_seed(seed, _DATA),
            dataset.get("priors"),
        )
    if kind == "csv":
        feats = dataset.get("features", "rest")
        return _load_csv_cached(str(dataset["path"]), dataset.get("label_column", "label"), feats if feats == "rest" else tuple(feats))
    raise ValueError(f"unknown dataset kind {kind!r}")


@dataclass(frozen=True, eq=False)
class CellSplit:
    trusted_idx: np.ndarray
    untrusted_idx: np.ndarray
    test_idx: np.ndarray


def cell_split(clean: LabeledSet, p: float, seed: int, test_fraction: float) -> CellSplit:
    test_idx, train_idx = stratified_split_indices(clean.labels, test_fraction, derive_seed(seed, _TEST))
    if p == 0.0:
        t_idx, u_idx = train_idx[:0], train_idx
    elif p == 1.0:
        t_idx, u_idx = train_idx, train_idx[:0]
    else:
        a, b = stratified_split_indices(clean.labels[train_idx], p, derive_seed(seed, _TRUST))
        t_idx, u_idx = train_idx[a], train_idx[b]
    split = CellSplit(t_idx, u_idx, test_idx)
    for a, b in ((t_idx, test_idx), (u_idx, test_idx), (t_idx, u_idx)):
        assert np.intersect1d(a, b).size == 0, "cell splits overlap"
    return split


def synthesize_cell(
    clean: LabeledSet, p: float, spec: CorruptionSpec, seed: int, test_fraction: float = 0.3
) -> tuple[BiqualityDataset, LabeledSet]:
    """Split ``clean`` into test / trusted (fraction ``p`` of train) / untrusted
    and corrupt the untrusted labels. The test set is never corrupted."""
    split = cell_split(clean, p, seed, test_fraction)
    trusted = clean.subset(split.trusted_idx) if len(split.trusted_idx) else empty_like(clean)
    untrusted = clean.subset(split.untrusted_idx) if len(split.untrusted_idx) else empty_like(clean)
    if len(untrusted):
        untrusted, flip = spec.apply(untrusted, derive_seed(seed, _NOISE))
    else:
        flip = np.zeros(0, dtype=bool)
    return BiqualityDataset(trusted, untrusted, flip), clean.subset(split.test_idx)


def cell_quality(ds: BiqualityDataset, clean_untrusted: LabeledSet, probe: LabeledSet, cfg: TrainConfig) -> float | None:
    """q of the cell: a model of the clean training labels against a model of
    the corrupted untrusted labels, probed on the test features."""
    if len(ds.untrusted) == 0:
        return None
    f_T = fit(concat(ds.trusted, clean_untrusted) if len(ds.trusted) else clean_untrusted, cfg)
    if ds.untrusted.labeled_mask.any():
        f_U = fit(ds.untrusted, cfg)
    else:
        f_U = ProbClassifier.zeros(ds.class_count, ds.dim)
    return measure_quality(f_T, f_U, probe).q


def run_method(name: str, ds: BiqualityDataset, grid: ExperimentGrid):
    """Fit one method; returns the model and a diagnostics mapping."""
    cfg = grid.train
    base = base_method(name)
    if base == "trusted-only":
        return fit(ds.trusted, cfg), {}
    if base == "naive-union":
        s = concat(ds.trusted, ds.untrusted) if len(ds.trusted) else ds.untrusted
        return fit(s, cfg), {}
    if base in ("GLC-forward", "GLC-backward"):
        kind = CorrectionKind.FORWARD if base == "GLC-forward" else CorrectionKind.BACKWARD
        r = glc_fit_full(ds, cfg, kind, grid.trusted_weight, grid.diagonal_loading)
        return r.model, {"T_hat": r.T_hat.tolist()}
    if base == "IRBL":
        r = irbl_fit_full(ds, cfg)
        return r.model, {"weights": r.weights}
    if base == "DIW":
        r = diw_fit_full(ds, grid.kmm, cfg)
        return r.model, {"weights": r.weights}
    if base == "MTL":
        return mtl_fit(ds, MtlConfig(mtl_lambda(name)), cfg), {}
    if base == "TrAdaBoost":
        return tradaboost_fit(ds, grid.tradaboost_rounds, cfg), {}
    raise ValueError(f"unknown method {name!r}")


class CellTimeout(Exception):
    pass


class _Alarm:
    """SIGALRM-based wall-clock limit; inert off the main thread."""

    def __init__(self, seconds: float):
        self.seconds = seconds
        self.active = (
            seconds > 0 and hasattr(signal, "setitimer") and threading.current_thread() is threading.main_thread()
        )

    def _fire(self, signum, frame):
        raise CellTimeout(f"cell exceeded {self.seconds:g} s")

    def __enter__(self):
        if self.active:
            self._old = signal.signal(signal.SIGALRM, self._fire)
            signal.setitimer(signal.ITIMER_REAL, self.seconds)
        return self

    def __exit__(self, *exc):
        if self.active:
            signal.setitimer(signal.ITIMER_REAL, 0)
            signal.signal(signal.SIGALRM, self._old)
        return False


@dataclass
class CellOutput:
    key: tuple[int, int, int]
    records: list[ResultRecord]
    diagnostics: dict


def run_cell(grid: ExperimentGrid, pi: int, si: int, seed: int) -> CellOutput:
    p, spec = grid.p_values[pi], grid.noise[si]
    real_seed = grid.seed_base + seed
    diag: dict = {"p": p, "noise": spec.label, "seed": seed}
    records: list[ResultRecord] = []

    def blank(method, status, error="", q=None, wall=0.0):
        return ResultRecord(method, p, spec.label, q, seed, None, None, None, wall, status, error)

    try:
        with _Alarm(grid.timeout):
            clean = load_clean(grid.dataset, real_seed)
            split = cell_split(clean, p, real_seed, grid.test_fraction)
            ds, test = synthesize_cell(clean, p, spec, real_seed, grid.test_fraction)
            clean_u = clean.subset(split.untrusted_idx) if len(split.untrusted_idx) else empty_like(clean)
            q = cell_quality(ds, clean_u, test, grid.train)
            true_T = spec.transition(clean.class_count)
            if true_T is not None:
                diag["T_true"] = true_T.tolist()
            for name in grid.methods:
                if not applicable(name, ds):
                    records.append(blank(name, NOT_APPLICABLE, q=q))
                    continue
                t0 = time.perf_counter()
                try:
                    model, extra = run_method(name, ds, grid)
                    m = evaluate(model, test)
                except CellTimeout:
                    raise
                except Exception as e:  # noqa: BLE001 - recorded per cell
                    log.warning("method %s failed on p=%g %s seed=%d: %s", name, p, spec.label, seed, e)
                    records.append(blank(name, FAILED, f"{type(e).__name__}: {e}", q, time.perf_counter() - t0))
                    continue
                wall = time.perf_counter() - t0
                records.append(
                    ResultRecord(name, p, spec.label, q, seed, m.accuracy, m.balanced_accuracy, m.mean_log_loss, wall)
                )
                if extra:
                    diag.setdefault("methods", {})[name] = extra
    except Exception as e:  # noqa: BLE001 - timeout or data failure fails the remaining methods
        done = {r.method for r in records}
        msg = f"{type(e).__name__}: {e}"
        records += [blank(m, FAILED, msg) for m in grid.methods if m not in done]
    return CellOutput((pi, si, seed), records, diag)


def _run_cell_args(args):
    return run_cell(*args)


def run_grid_full(grid: ExperimentGrid, workers: int = 1) -> list[CellOutput]:
    jobs = [(grid, pi, si, seed) for pi, si, seed in grid.cells()]
    if workers <= 1:
        outs = [_run_cell_args(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_run_cell_args, jobs))
    method_rank = {m: i for i, m in enumerate(grid.methods)}
    outs.sort(key=lambda o: o.key)
    for o in outs:
        o.records.sort(key=lambda r: method_rank[r.method])
    return outs


def run_grid(grid: ExperimentGrid, workers: int = 1) -> list[ResultRecord]:
    """Every (p, noise, method, seed) record, ordered by cell then method."""
    return [r for o in run_grid_full(grid, workers) for r in o.records]


def inspect_transition(grid: ExperimentGrid) -> list[dict]:
    """True versus estimated transition matrices for every cell with both sets."""
    out = []
    for pi, si, seed in grid.cells():
        p, spec = grid.p_values[pi], grid.noise[si]
        real_seed = grid.seed_base + seed
        clean = load_clean(grid.dataset, real_seed)
        ds, _ = synthesize_cell(clean, p, spec, real_seed, grid.test_fraction)
        entry = {"p": p, "noise": spec.label, "seed": seed}
        true_T = spec.transition(clean.class_count)
        entry["true"] = None if true_T is None else true_T.tolist()
        if len(ds.untrusted) == 0 or not ds.untrusted.labeled_mask.any():
            entry["error"] = "no labeled untrusted data"
            out.append(entry)
            continue
        f_U = fit(ds.untrusted, grid.train)
        entry["anchor"] = estimate_T_anchor(f_U, find_anchors(f_U, ds.untrusted)).tolist()
        try:
            entry["trusted"] = estimate_T_trusted(f_U, ds.trusted).tolist()
        except ValueError as e:
            entry["trusted"] = None
            entry["error"] = str(e)
        out.append(entry)
    return out


def expand_methods(methods, lambdas) -> tuple[str, ...]:
    out = []
    for m in methods:
        if m == "MTL":
            out += [f"MTL({lam:g})" for lam in lambdas]
        else:
            out.append(m)
    return tuple(out)
