"""End-to-end experiments: sweep the projection count over the four settings.

Settings, all drawing the same angles and the same noise for a given
``(seed, N, trial)``:

``noiseless_perfect``
    clean projections, true order
``noisy_perfect``
    noisy projections, true order
``noisy_synthetic_order``
    noisy projections, order corrupted by a synthetic good map
``noisy_nn_order``
    noisy projections, order recovered by the nearest-neighbour chain

Angles are ``0`` (the anchor) plus ``N - 1`` sorted Uniform[0, 2*pi) draws.
"""
from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .core import Image2D, derive_seed, sample_sorted_uniform
from .io import read_image, write_results_csv
from .ordering import (
    Permutation,
    looks_reversed,
    measure_goodness,
    nn_order,
    synth_good_map,
)
from .phantom import default_phantom
from .tomo import (
    ReconstructionConfig,
    add_projection_noise,
    mass_residual,
    radon,
    reconstruct_unknown_angles,
    relative_error,
)

log = logging.getLogger(__name__)

SETTINGS = ("noiseless_perfect", "noisy_perfect", "noisy_synthetic_order", "noisy_nn_order")
CSV_COLUMNS = ("setting", "N", "trial", "seed", "E", "n_delta", "delta_probe", "reversed", "wall_ms")
PROFILES = {"ci": {"trials": 5, "max_n": 2000}, "full": {"trials": 30}}
MASS_TOL = 0.01

# integer tags for derived random streams
_ANGLES, _NOISE, _ORDER = 1, 2, 3


def _policy_value(rule, n: int) -> int:
    if isinstance(rule, (int, np.integer)) and not isinstance(rule, bool):
        return int(rule)
    if rule == "ceil_sqrt":
        return math.ceil(math.sqrt(n))
    if rule == "ceil_log_sq":
        return math.ceil(math.log(n) ** 2)
    if rule == "ceil_log":
        return math.ceil(math.log(n))
    raise ValueError(f"unknown delta policy rule {rule!r}")


@dataclass(frozen=True)
class DeltaPolicy:
    """How the synthetic ordering corruption scales with ``N``.

    Each rule is an integer or one of ``"ceil_sqrt"``, ``"ceil_log"``,
    ``"ceil_log_sq"`` (natural log).
    """

    delta_bar: object = "ceil_sqrt"
    n_delta: object = "ceil_log_sq"

    def __post_init__(self):
        for rule in (self.delta_bar, self.n_delta):
            _policy_value(rule, 2)

    def __call__(self, n: int) -> tuple[int, int]:
        return _policy_value(self.delta_bar, n), _policy_value(self.n_delta, n)


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment. ``settings`` may hold several settings run on shared data.

    ``phantom`` is an image path in the core format or ``None`` for the built-in
    Gaussian mixture. ``bins`` defaults to the phantom width. When ``cfg``
    leaves ``pixel_size`` unset, the reconstruction grid matches the phantom.
    """

    settings: tuple = ("noiseless_perfect",)
    n_list: tuple = (500, 2000, 8000)
    trials: int = 30
    sigma_rel: float = 0.01
    delta_policy: DeltaPolicy = field(default_factory=DeltaPolicy)
    cfg: ReconstructionConfig = field(default_factory=ReconstructionConfig)
    seed: int = 0
    phantom: str | None = None
    bins: int | None = None
    delta_probe: int = 4

    def __post_init__(self):
        st = (self.settings,) if isinstance(self.settings, str) else tuple(self.settings)
        if not st:
            raise ValueError("at least one setting required")
        for s in st:
            if s not in SETTINGS:
                raise ValueError(f"unknown setting {s!r}; expected one of {SETTINGS}")
        object.__setattr__(self, "settings", st)
        nl = tuple(int(n) for n in self.n_list)
        if not nl:
            raise ValueError("n_list must be nonempty")
        if any(b <= a for a, b in zip(nl, nl[1:])):
            raise ValueError("n_list must be strictly ascending")
        if nl[0] < 2:
            raise ValueError("every N must be >= 2")
        object.__setattr__(self, "n_list", nl)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.sigma_rel >= 0:
            raise ValueError("sigma_rel must be >= 0")
        if self.delta_probe < 0:
            raise ValueError("delta_probe must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        if "setting" in d:
            if "settings" in d:
                raise ValueError("give either 'setting' or 'settings', not both")
            d["settings"] = d.pop("setting")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown experiment fields: {sorted(extra)}")
        if "delta_policy" in d:
            d["delta_policy"] = DeltaPolicy(**d["delta_policy"])
        if "cfg" in d:
            d["cfg"] = ReconstructionConfig(**d["cfg"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["settings"] = list(self.settings)
        d["n_list"] = list(self.n_list)
        return d

    def with_profile(self, profile: str | None) -> "ExperimentSpec":
        """``ci`` caps trials at 5 and drops N above 2000; ``full`` uses 30 trials."""
        if profile is None:
            return self
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}")
        p = PROFILES[profile]
        nl = self.n_list
        if "max_n" in p:
            nl = tuple(n for n in nl if n <= p["max_n"]) or nl[:1]
        return replace(self, trials=p["trials"], n_list=nl)


@dataclass
class ExperimentResult:
    """Per-run rows plus per-(setting, N) mean and median of ``E``.

    Rows hold the CSV columns plus diagnostics: ``E_reversed`` (error of the
    reversal-corrected order, only for flagged runs) and ``mass_residual``.
    """

    spec: ExperimentSpec
    rows: list

    def errors(self, setting: str, n: int, exclude_reversed: bool = False) -> np.ndarray:
        return np.array([
            r["E"] for r in self.rows
            if r["setting"] == setting and r["N"] == n and not (exclude_reversed and r["reversed"])
        ])

    def mean(self, setting: str, n: int) -> float:
        return float(np.mean(self.errors(setting, n)))

    def median(self, setting: str, n: int, exclude_reversed: bool = False) -> float:
        return float(np.median(self.errors(setting, n, exclude_reversed)))

    def aggregates(self) -> list[dict]:
        out = []
        for s in self.spec.settings:
            for n in self.spec.n_list:
                e = self.errors(s, n)
                out.append({
                    "setting": s, "N": n, "mean_E": float(e.mean()), "median_E": float(np.median(e)),
                    "reversed": int(sum(r["reversed"] for r in self.rows if r["setting"] == s and r["N"] == n)),
                })
        return out

    def slope(self, setting: str) -> float:
        return slope_fit([self.mean(setting, n) for n in self.spec.n_list], self.spec.n_list)

    def write_csv(self, path) -> Path:
        return write_results_csv(path, self.rows, CSV_COLUMNS)


def slope_fit(values, n_list) -> float:
    """Least-squares slope of ``log(values)`` against ``log(n_list)``."""
    y = np.asarray(values, dtype=np.float64)
    x = np.asarray(n_list, dtype=np.float64)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("slope_fit needs matching inputs with at least 3 points")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("slope_fit needs positive finite values")
    if np.unique(x).size < 2:
        raise ValueError("slope_fit needs at least two distinct N")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def load_phantom(path) -> Image2D:
    return default_phantom() if path is None else read_image(path)


def trial_angles(n: int, seed: int) -> np.ndarray:
    """Anchor at 0 followed by ``n - 1`` sorted uniform angles."""
    if n < 2:
        return np.zeros(1)
    return np.concatenate([[0.0], sample_sorted_uniform(n - 1, 0.0, 2 * np.pi, seed)])


def _reco_cfg(spec: ExperimentSpec, img: Image2D) -> ReconstructionConfig:
    cfg = spec.cfg
    if cfg.pixel_size is None:
        cfg = replace(cfg, pixel_size=img.pixel_size, grid=img.shape[0])
    return cfg


def _score(img, sino, cfg, order) -> tuple[float, float]:
    t = time.perf_counter()
    fhat = reconstruct_unknown_angles(sino, cfg, order)
    ms = 1e3 * (time.perf_counter() - t)
    return relative_error(img, fhat), ms


def run_trial(spec: ExperimentSpec, img: Image2D, n: int, trial: int) -> list[dict]:
    """All requested settings for one ``(N, trial)``; the data are drawn once and shared."""
    if img.shape[0] != img.shape[1]:
        raise ValueError("phantom must be square")
    cfg = _reco_cfg(spec, img)
    bins = spec.bins or img.shape[0]
    tseed = derive_seed(spec.seed, n, trial)
    clean = radon(img, trial_angles(n, derive_seed(tseed, _ANGLES)), bins)
    resid = float(np.max(mass_residual(img, clean)))
    if resid >= MASS_TOL:
        log.warning("N=%d trial=%d: mass residual %.3g exceeds %.0f%%", n, trial, resid, 100 * MASS_TOL)
    else:
        log.info("N=%d trial=%d: mass residual %.3g", n, trial, resid)
    noisy = None
    if any(s != "noiseless_perfect" for s in spec.settings):
        noisy = add_projection_noise(clean, spec.sigma_rel, derive_seed(tseed, _NOISE))

    rows = []
    for setting in spec.settings:
        sino = clean if setting == "noiseless_perfect" else noisy
        t0 = time.perf_counter()
        if setting == "noisy_synthetic_order":
            db, nd = spec.delta_policy(n)
            order = synth_good_map(n, db, nd, derive_seed(tseed, _ORDER))
        elif setting == "noisy_nn_order":
            order = nn_order(sino.data, 0)
        else:
            order = Permutation.identity(n)
        order_ms = 1e3 * (time.perf_counter() - t0)
        E, ms = _score(img, sino, cfg, order)
        rev = looks_reversed(order)
        row = {
            "setting": setting, "N": n, "trial": trial, "seed": tseed, "E": E,
            "n_delta": measure_goodness(order, spec.delta_probe).n_delta,
            "delta_probe": spec.delta_probe, "reversed": rev, "wall_ms": ms + order_ms,
            "mass_residual": resid, "E_reversed": float("nan"),
        }
        if rev:
            # diagnostic only: what the run would score had the chain gone the other way
            row["E_reversed"] = _score(img, sino, cfg, order.reversed_tail())[0]
            log.info("N=%d trial=%d %s: reversed chain (E=%.3g, corrected E=%.3g)",
                     n, trial, setting, E, row["E_reversed"])
        rows.append(row)
    return rows


def _job(args):
    spec, img, n, trial = args
    return run_trial(spec, img, n, trial)


def run_experiment(spec: ExperimentSpec, img: Image2D | None = None, workers: int = 1) -> ExperimentResult:
    """Run every ``(N, trial)`` in ``spec``; trials are independent and may run in parallel.

    Rows are sorted by (setting, N, trial) so the output does not depend on
    scheduling.
    """
    img = load_phantom(spec.phantom) if img is None else img
    jobs = [(spec, img, n, t) for n in spec.n_list for t in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_job, jobs))
    else:
        chunks = [_job(j) for j in jobs]
    rank = {s: i for i, s in enumerate(spec.settings)}
    rows = sorted((r for c in chunks for r in c), key=lambda r: (rank[r["setting"]], r["N"], r["trial"]))
    return ExperimentResult(spec, rows)


@dataclass
class OrderingHistogram:
    """``n_delta`` of nearest-neighbour orders on clean projections, one entry per seed.

    ``counts[b]`` counts non-reversed runs with ``edges[b] <= n_delta / N < edges[b+1]``
    (the last bin is closed). Reversed runs are kept out of the bins and
    counted in ``n_reversed``.
    """

    n: int
    delta_bar: int
    edges: np.ndarray
    counts: np.ndarray
    n_delta: np.ndarray
    reversed: np.ndarray

    @property
    def n_reversed(self) -> int:
        return int(self.reversed.sum())

    def lowest_bin_fraction(self) -> float:
        kept = int(self.counts.sum())
        return float(self.counts[0] / kept) if kept else float("nan")

    def median_n_delta(self) -> float:
        keep = self.n_delta[~self.reversed]
        return float(np.median(keep)) if keep.size else float("nan")


DEFAULT_HIST_EDGES = (0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)


def histogram_from_orders(orders, delta_bar: int = 4, edges=DEFAULT_HIST_EDGES) -> OrderingHistogram:
    orders = list(orders)
    if not orders:
        raise ValueError("no orders given")
    n = orders[0].n
    if any(o.n != n for o in orders):
        raise ValueError("all orders must have the same length")
    edges = np.asarray(edges, dtype=np.float64)
    nd = np.array([measure_goodness(o, delta_bar).n_delta for o in orders])
    rev = np.array([looks_reversed(o) for o in orders], dtype=bool)
    frac = nd[~rev] / n
    idx = np.clip(np.searchsorted(edges, frac, side="right") - 1, 0, edges.size - 2)
    counts = np.bincount(idx, minlength=edges.size - 1)
    return OrderingHistogram(n, delta_bar, edges, counts, nd, rev)


def ordering_histogram(n: int = 4000, seeds=range(30), img: Image2D | None = None, bins: int | None = None,
                       delta_bar: int = 4, edges=DEFAULT_HIST_EDGES, base_seed: int = 0) -> OrderingHistogram:
    """NN-order the clean projections for each seed and bin ``n_delta`` at ``delta_bar``."""
    img = default_phantom() if img is None else img
    bins = bins or img.shape[0]
    orders = []
    for s in seeds:
        tseed = derive_seed(base_seed, n, int(s))
        sino = radon(img, trial_angles(n, derive_seed(tseed, _ANGLES)), bins)
        orders.append(nn_order(sino.data, 0))
    return histogram_from_orders(orders, delta_bar, edges)
