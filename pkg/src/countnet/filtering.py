"""Ensemble Poisson-Gamma filter for count-driven Hawkes inference.

Per node and per time bin the filter runs four stages:

1. forecast: push every member's intensity through the Hawkes recursion
   using that member's own parameter sample and the previous bin's counts;
2. intensity analysis: move the intensity members so that their mean and
   relative variance follow the exact gamma-conjugate posterior for the
   observed count (Poisson likelihood, gamma prior), using independently
   drawn perturbed observations to keep the member spread consistent;
3. parameter regression: update each member's parameter vector by
   regressing it on the member-wise intensity innovation (a stochastic
   ensemble-Kalman step whose observation space is scalar);
4. roll the state forward to the next bin.

Nodes never read each other's ensembles; they couple only through the
shared observed counts. Every random draw comes from a stream named by
(seed, purpose, node index), so results are bitwise independent of node
ordering and worker count.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .hawkes import CountSeries, advance_intensity

_INTENSITY_KEYS = ("prior_mean", "post_mean", "prior_rel_var", "post_rel_var", "innovation")


class FilterDivergence(RuntimeError):
    """A non-finite ensemble member was detected mid-run."""

    def __init__(self, step: int, node: int):
        super().__init__(f"non-finite intensity member at step {step}, node {node}")
        self.step = step
        self.node = node


@dataclass(frozen=True)
class GammaSpec:
    """Gamma distribution given by mean and variance.

    variance == 0 is the degenerate limit: every draw equals the mean.
    """

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not self.mean > 0:
            raise ValueError("GammaSpec mean must be positive")
        if self.variance < 0:
            raise ValueError("GammaSpec variance must be non-negative")

    def draw(self, gen: np.random.Generator, size) -> np.ndarray:
        if self.variance == 0.0:
            return np.full(size, self.mean, dtype=np.float64)
        shape = self.mean**2 / self.variance
        scale = self.variance / self.mean
        return gen.gamma(shape, scale, size=size)


@dataclass
class NodeEnsemble:
    """M joint samples of (intensity, parameter vector) for one node.

    ``params`` columns are [baseline, decay, excitation_1, ..., excitation_m],
    where excitation_j multiplies the observed counts of node j.
    """

    node_index: int
    intensity: np.ndarray
    params: np.ndarray

    def __post_init__(self) -> None:
        self.intensity = np.asarray(self.intensity, dtype=np.float64)
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.intensity.ndim != 1 or self.params.ndim != 2:
            raise ValueError("intensity must be (M,), params must be (M, m+2)")
        if self.params.shape[0] != self.intensity.shape[0]:
            raise ValueError("intensity and params must have the same member count")
        if self.ensemble_size < 2:
            raise ValueError("ensemble size must be at least 2")
        if self.params.shape[1] < 3:
            raise ValueError("params must have at least 3 columns (m >= 1)")

    @property
    def ensemble_size(self) -> int:
        return self.intensity.shape[0]

    @property
    def m(self) -> int:
        return self.params.shape[1] - 2

    @property
    def baseline(self) -> np.ndarray:
        return self.params[:, 0]

    @property
    def decay(self) -> np.ndarray:
        return self.params[:, 1]

    @property
    def excitation(self) -> np.ndarray:
        return self.params[:, 2:]


@dataclass
class AnalysisDiagnostics:
    """Analysis-step summary; scalar per node, or arrays for a whole step."""

    prior_mean: float | np.ndarray
    post_mean: float | np.ndarray
    prior_rel_var: float | np.ndarray
    post_rel_var: float | np.ndarray
    innovation: float | np.ndarray
    degenerate: bool | np.ndarray


@dataclass(frozen=True)
class FilterConfig:
    """Run settings; ``dt`` must match the assimilated CountSeries."""

    ensemble_size: int
    dt: float
    seed: int
    positivity_floor: float = 1e-8
    decoupled_regression: bool = False
    record_param_history: bool = False
    record_intensity_history: bool = False
    localization: None = None  # reserved; no localization is applied

    def __post_init__(self) -> None:
        if self.ensemble_size < 2:
            raise ValueError("ensemble_size must be at least 2")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.positivity_floor > 0:
            raise ValueError("positivity_floor must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.localization is not None:
            raise ValueError("localization is reserved and must be None")

    def to_json(self) -> dict:
        return {
            "ensemble_size": self.ensemble_size,
            "dt": self.dt,
            "seed": self.seed,
            "positivity_floor": self.positivity_floor,
            "decoupled_regression": self.decoupled_regression,
            "record_param_history": self.record_param_history,
            "record_intensity_history": self.record_intensity_history,
        }


def analytic_posterior(
    mean: float, rel_var: float, dN: int, dt: float
) -> tuple[float, float]:
    """Exact gamma-conjugate update of (mean, relative variance).

    This closed form is the oracle the stochastic ensemble analysis must
    reproduce in the large-ensemble limit.
    """
    if not mean > 0 or not rel_var > 0:
        raise ValueError("mean and rel_var must be positive")
    if dN < 0:
        raise ValueError("dN must be a non-negative count")
    if not dt > 0:
        raise ValueError("dt must be positive")
    post_mean = mean + mean / (1.0 / rel_var + mean * dt) * (dN - mean * dt)
    # a zero count carries no information about the relative spread
    post_rel_var = rel_var if dN == 0 else 1.0 / (1.0 / rel_var + dN)
    return post_mean, post_rel_var


def perturbed_observations(
    dN: int, M: int, gen: np.random.Generator
) -> tuple[np.ndarray, float]:
    """M independent gamma draws with mean dN and variance dN, plus their mean.

    Shape dN and rate 1 give relative variance 1/dN, the observation-noise
    scale of a Poisson count of size dN; the redistribution step needs
    exactly that scale for the updated ensemble's relative variance to land
    on the conjugate posterior.
    """
    if dN < 1:
        raise ValueError("perturbed observations are only drawn for dN >= 1")
    if M < 2:
        raise ValueError("need at least two draws")
    draws = gen.gamma(float(dN), 1.0, size=M)
    return draws, float(draws.mean())


def _analyze_rows(lam_f, counts, dt, floor, streams) -> tuple[np.ndarray, AnalysisDiagnostics]:
    """Intensity analysis for a board of rows; one stream per row."""
    n_rows, M = lam_f.shape
    mean_f = lam_f.mean(axis=1)
    u = lam_f / mean_f[:, None] - 1.0
    prior_rv = np.einsum("im,im->i", u, u) / (M - 1)
    degenerate = prior_rv == 0.0
    inv_prior = np.empty(n_rows)
    inv_prior[degenerate] = np.inf
    inv_prior[~degenerate] = 1.0 / prior_rv[~degenerate]

    innovation = counts - mean_f * dt
    gain = mean_f / (inv_prior + mean_f * dt)  # degenerate rows get gain 0
    post_mean = mean_f + gain * innovation

    # redistribute relative deviations; a zero count leaves them untouched
    a = u
    for i in range(n_rows):
        if counts[i] >= 1 and not degenerate[i]:
            draws, draw_mean = perturbed_observations(int(counts[i]), M, streams[i])
            t = draws / draw_mean - 1.0
            c = prior_rv[i] / (prior_rv[i] + 1.0 / counts[i])
            a[i] = u[i] + c * (t - u[i])
    lam_a = post_mean[:, None] * (1.0 + a)
    np.maximum(lam_a, floor, out=lam_a)

    post_rv = np.where(counts == 0, prior_rv, 1.0 / (inv_prior + counts))
    diag = AnalysisDiagnostics(mean_f, post_mean, prior_rv, post_rv, innovation, degenerate)
    return lam_a, diag


def pg_analysis(
    lam_f: np.ndarray,
    dN: int,
    dt: float,
    gen: np.random.Generator,
    floor: float = 1e-8,
) -> tuple[np.ndarray, AnalysisDiagnostics]:
    """Poisson-Gamma analysis of one node's forecast intensity ensemble.

    Returns the analysed members and diagnostics holding the prior and
    posterior (mean, relative variance); the posterior pair follows
    ``analytic_posterior`` applied to the empirical prior.
    """
    lam_f = np.asarray(lam_f, dtype=np.float64)
    if lam_f.ndim != 1 or lam_f.shape[0] < 2:
        raise ValueError("lam_f must be a vector with at least two members")
    if not (lam_f > 0).all():
        raise ValueError("forecast intensities must be positive")
    if dN < 0:
        raise ValueError("dN must be a non-negative count")
    if not dt > 0:
        raise ValueError("dt must be positive")
    board, diag = _analyze_rows(
        lam_f[None, :].copy(), np.array([float(dN)]), dt, floor, [gen]
    )
    return board[0], AnalysisDiagnostics(
        float(diag.prior_mean[0]),
        float(diag.post_mean[0]),
        float(diag.prior_rel_var[0]),
        float(diag.post_rel_var[0]),
        float(diag.innovation[0]),
        bool(diag.degenerate[0]),
    )


def enkf_regress(
    q: np.ndarray,
    lam_f: np.ndarray,
    lam_a: np.ndarray,
    decoupled: bool = False,
) -> np.ndarray:
    """Regress parameter members on the member-wise intensity innovation.

    ``q`` is M x p (members by parameters). The gain is the cross-covariance
    between parameter and forecast-intensity deviations divided by the sum
    of forecast and analysis intensity variances; each member moves by
    gain * (lam_a - lam_f). Negative parameters are clamped to zero. The
    update direction lies in the span of the parameter deviations, so a
    zero-spread ensemble is a fixed point.
    """
    q = np.asarray(q, dtype=np.float64)
    lam_f = np.asarray(lam_f, dtype=np.float64)
    lam_a = np.asarray(lam_a, dtype=np.float64)
    M = q.shape[0]
    if lam_f.shape != (M,) or lam_a.shape != (M,):
        raise ValueError("q, lam_f and lam_a must share the member count")
    ydev = lam_f - lam_f.mean()
    yadev = lam_a - lam_a.mean()
    denom = (ydev @ ydev + yadev @ yadev) / (M - 1)
    if denom == 0.0:
        return q.copy()
    qdev = q - q.mean(axis=0)
    if decoupled:
        # per-parameter regression; identical to the joint gain because the
        # observation space is scalar, kept as a distinct path for comparison
        gain = np.array([(qdev[:, j] @ ydev) / (M - 1) / denom for j in range(q.shape[1])])
    else:
        gain = (qdev.T @ ydev) / (M - 1) / denom
    q_a = q + np.outer(lam_a - lam_f, gain)
    return np.maximum(q_a, 0.0)


@dataclass
class FilterHistory:
    """Per-step diagnostics kept when the config flags request them.

    ``param_mean``/``param_var`` have shape (n_steps + 1, m, m + 2): row 0 is
    the initial ensemble, row k the state after assimilating bin k - 1.
    Intensity arrays have shape (n_steps, m).
    """

    param_mean: np.ndarray | None = None
    param_var: np.ndarray | None = None
    prior_mean: np.ndarray | None = None
    post_mean: np.ndarray | None = None
    prior_rel_var: np.ndarray | None = None
    post_rel_var: np.ndarray | None = None
    innovation: np.ndarray | None = None


@dataclass
class FilterResult:
    """Final ensembles plus optional recorded history."""

    ensembles: list[NodeEnsemble]
    config: FilterConfig
    n_steps: int
    history: FilterHistory | None = None

    def mean_excitation(self) -> np.ndarray:
        """Ensemble-mean excitation matrix (the inferred network)."""
        return np.stack([e.excitation.mean(axis=0) for e in self.ensembles])

    def error_report(self, truth, excitation_scale: float = 1.0) -> dict:
        """Normalized error and variance-reduction report against a truth.

        Requires record_param_history; delegates to network.error_metrics.
        """
        from .network import error_metrics

        return error_metrics(self.history, truth, excitation_scale)


class Filter:
    """Stateful assimilation over a set of nodes.

    Holds the board representation of the node ensembles, the previous
    bin's full count vector (the forecast needs every node's counts), the
    step index, and one analysis stream per node. Streams are keyed by
    ``node_index``, so a sub-filter over any subset of nodes reproduces
    those nodes' results bit for bit.

    ``observed_columns[i]`` is the data column assimilated by ensemble row
    i; it defaults to row order, which covers the full-network case.
    """

    def __init__(
        self,
        ensembles: list[NodeEnsemble],
        cfg: FilterConfig,
        prev_counts: np.ndarray | None = None,
        observed_columns: np.ndarray | None = None,
    ):
        if not ensembles:
            raise ValueError("need at least one node ensemble")
        M = cfg.ensemble_size
        m = ensembles[0].m
        for e in ensembles:
            if e.ensemble_size != M:
                raise ValueError("ensemble size disagrees with config")
            if e.m != m:
                raise ValueError("all node ensembles must share the node count m")
            if not np.isfinite(e.intensity).all() or (e.intensity < 0).any():
                raise ValueError("intensity members must be finite and non-negative")
        self.cfg = cfg
        self.node_indices = [e.node_index for e in ensembles]
        self.m = m
        if observed_columns is None:
            if len(ensembles) != m:
                raise ValueError(
                    "observed_columns is required when the ensembles do not "
                    "cover all m nodes in row order"
                )
            observed_columns = np.arange(m)
        self._cols = np.asarray(observed_columns, dtype=np.intp)
        if self._cols.shape != (len(ensembles),) or (self._cols >= m).any():
            raise ValueError("observed_columns must give one data column per ensemble")
        # prior draws can legitimately fall below the floor (gamma shapes < 1)
        self._lam = np.maximum(
            np.stack([e.intensity for e in ensembles]).astype(np.float64),
            cfg.positivity_floor,
        )
        self._mu = np.stack([e.baseline for e in ensembles]).astype(np.float64)
        self._beta = np.stack([e.decay for e in ensembles]).astype(np.float64)
        self._alpha = np.stack([e.excitation for e in ensembles]).astype(np.float64)
        if prev_counts is None:
            prev_counts = np.zeros(m)
        self._prev = np.asarray(prev_counts, dtype=np.float64).copy()
        if self._prev.shape != (m,):
            raise ValueError("prev_counts must hold the full m-node count vector")
        self._streams = rng.node_streams(cfg.seed, rng.ANALYSIS, self.node_indices)
        self.k = 0
        self._tmp = np.empty_like(self._alpha)

    @property
    def n_nodes(self) -> int:
        return len(self.node_indices)

    def param_moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Current per-node parameter means and variances, (n_nodes, m+2) each."""
        mean = np.concatenate(
            [
                self._mu.mean(axis=1)[:, None],
                self._beta.mean(axis=1)[:, None],
                self._alpha.mean(axis=1),
            ],
            axis=1,
        )
        var = np.concatenate(
            [
                self._mu.var(axis=1, ddof=1)[:, None],
                self._beta.var(axis=1, ddof=1)[:, None],
                self._alpha.var(axis=1, ddof=1),
            ],
            axis=1,
        )
        return mean, var

    def assimilate_step(self, counts_next) -> AnalysisDiagnostics:
        """Forecast with the held previous counts, then assimilate the new bin.

        ``counts_next`` is the full m-node count vector for the next bin.
        """
        counts_next = np.asarray(counts_next, dtype=np.float64)
        if counts_next.shape != (self.m,):
            raise ValueError("counts_next must hold the full m-node count vector")
        if (counts_next < 0).any():
            raise ValueError("counts must be non-negative")
        cfg = self.cfg
        floor = cfg.positivity_floor
        M = cfg.ensemble_size
        own_counts = counts_next[self._cols]

        # Stage 1: member-specific forecast from the previous bin's counts
        excite = self._alpha @ self._prev
        lam_f = advance_intensity(self._lam, self._mu, self._beta, excite, cfg.dt)
        np.maximum(lam_f, floor, out=lam_f)

        # Stage 2: conjugate intensity analysis; overflow surfaces as the
        # explicit divergence error right below, not as numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            lam_a, diag = _analyze_rows(lam_f, own_counts, cfg.dt, floor, self._streams)
        if not np.isfinite(lam_a).all():
            bad = int(np.argwhere(~np.isfinite(lam_a))[0][0])
            raise FilterDivergence(self.k, self.node_indices[bad])

        # Stage 3: regress parameter members on the intensity innovations
        ydev = lam_f - diag.prior_mean[:, None]
        yadev = lam_a - lam_a.mean(axis=1)[:, None]
        denom = (
            np.einsum("im,im->i", ydev, ydev) + np.einsum("im,im->i", yadev, yadev)
        ) / (M - 1)
        safe = denom > 0
        scale = np.zeros_like(denom)
        scale[safe] = 1.0 / denom[safe]
        mudev = self._mu - self._mu.mean(axis=1)[:, None]
        betadev = self._beta - self._beta.mean(axis=1)[:, None]
        np.subtract(self._alpha, self._alpha.mean(axis=1)[:, None, :], out=self._tmp)
        gain_mu = np.einsum("im,im->i", mudev, ydev) / (M - 1) * scale
        gain_beta = np.einsum("im,im->i", betadev, ydev) / (M - 1) * scale
        if cfg.decoupled_regression:
            gain_alpha = np.empty((self.n_nodes, self.m))
            for j in range(self.m):
                gain_alpha[:, j] = (
                    np.einsum("im,im->i", self._tmp[:, :, j], ydev) / (M - 1) * scale
                )
        else:
            gain_alpha = np.einsum("imj,im->ij", self._tmp, ydev) / (M - 1) * scale[:, None]
        innov = lam_a - lam_f
        self._mu += gain_mu[:, None] * innov
        self._beta += gain_beta[:, None] * innov
        np.multiply(innov[:, :, None], gain_alpha[:, None, :], out=self._tmp)
        self._alpha += self._tmp
        np.maximum(self._mu, floor, out=self._mu)
        np.maximum(self._beta, floor, out=self._beta)
        np.maximum(self._alpha, floor, out=self._alpha)

        # Stage 4: roll forward
        self._lam = lam_a
        self._prev = counts_next.copy()
        self.k += 1
        return diag

    def ensembles(self) -> list[NodeEnsemble]:
        out = []
        for i, node in enumerate(self.node_indices):
            params = np.concatenate(
                [self._mu[i][:, None], self._beta[i][:, None], self._alpha[i]], axis=1
            )
            out.append(NodeEnsemble(node, self._lam[i].copy(), params))
        return out


def assimilate_step(
    ensembles: list[NodeEnsemble],
    counts_next,
    cfg: FilterConfig,
    prev_counts: np.ndarray | None = None,
) -> tuple[list[NodeEnsemble], AnalysisDiagnostics]:
    """One-shot assimilation step over the full list of node ensembles.

    ``prev_counts`` is the previous bin's count vector held by the caller
    (zeros if the window starts here). Analysis streams start at their
    per-node origin, as in step 0 of a fresh run.
    """
    filt = Filter(ensembles, cfg, prev_counts)
    diag = filt.assimilate_step(counts_next)
    return filt.ensembles(), diag


def init_ensemble(
    m: int,
    M: int,
    baseline_prior: GammaSpec,
    decay_prior: GammaSpec,
    excitation_prior: GammaSpec,
    seed: int,
) -> list[NodeEnsemble]:
    """Draw initial node ensembles from per-group gamma priors.

    Each node draws from its own named stream; member intensities start at
    the member's own baseline draw.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if M < 2:
        raise ValueError("M must be >= 2")
    out = []
    for i in range(m):
        gen = rng.node_stream(seed, rng.ENSEMBLE_INIT, i)
        mu = baseline_prior.draw(gen, M)
        beta = decay_prior.draw(gen, M)
        alpha = excitation_prior.draw(gen, (M, m))
        params = np.concatenate([mu[:, None], beta[:, None], alpha], axis=1)
        out.append(NodeEnsemble(i, mu.copy(), params))
    return out


def _run_chunk(
    counts: np.ndarray,
    ensembles: list[NodeEnsemble],
    cfg: FilterConfig,
    positions: np.ndarray,
    progress=None,
):
    """Full assimilation loop for a subset of nodes; used by the workers."""
    n_steps = counts.shape[0]
    filt = Filter(ensembles, cfg, observed_columns=positions)
    record_p = cfg.record_param_history
    record_i = cfg.record_intensity_history
    p = filt.m + 2
    n_nodes = filt.n_nodes
    param_mean = np.empty((n_steps + 1, n_nodes, p)) if record_p else None
    param_var = np.empty((n_steps + 1, n_nodes, p)) if record_p else None
    if record_p:
        param_mean[0], param_var[0] = filt.param_moments()
    intensity = (
        {key: np.empty((n_steps, n_nodes)) for key in _INTENSITY_KEYS}
        if record_i
        else None
    )
    rows = counts.astype(np.float64)
    report_every = max(1, n_steps // 20)
    for k in range(n_steps):
        diag = filt.assimilate_step(rows[k])
        if record_p:
            param_mean[k + 1], param_var[k + 1] = filt.param_moments()
        if record_i:
            for key in _INTENSITY_KEYS:
                intensity[key][k] = getattr(diag, key)
        if progress is not None and (k + 1) % report_every == 0:
            progress(k + 1, n_steps)
    return filt.ensembles(), param_mean, param_var, intensity


def run_filter(
    data: CountSeries,
    init: list[NodeEnsemble],
    cfg: FilterConfig,
    workers: int = 1,
    progress=None,
) -> FilterResult:
    """Assimilate every bin of ``data`` starting from the given ensembles.

    ``workers`` > 1 splits the nodes across processes; the per-node streams
    make the result identical to a serial run, bit for bit. ``progress``,
    if given, is called as progress(step, n_steps) from the serial path.
    """
    m = data.m
    if len(init) != m:
        raise ValueError("need one initial ensemble per data column")
    if not np.isclose(cfg.dt, data.dt):
        raise ValueError(f"config dt {cfg.dt} disagrees with data dt {data.dt}")
    counts = data.counts
    n_steps = data.n_steps
    if n_steps == 0:
        history = None
        if cfg.record_param_history:
            filt = Filter(init, cfg)
            mean, var = filt.param_moments()
            history = FilterHistory(param_mean=mean[None], param_var=var[None])
        return FilterResult([_copy_ensemble(e) for e in init], cfg, 0, history)

    positions = np.arange(m)
    workers = max(1, min(workers, m))
    if workers == 1:
        chunks = [(_run_chunk(counts, init, cfg, positions, progress), positions)]
    else:
        splits = np.array_split(positions, workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_chunk, counts, [init[i] for i in part], cfg, part)
                for part in splits
            ]
            chunks = [(f.result(), part) for f, part in zip(futures, splits)]

    ensembles: list[NodeEnsemble | None] = [None] * m
    history = None
    if cfg.record_param_history or cfg.record_intensity_history:
        history = FilterHistory()
        if cfg.record_param_history:
            history.param_mean = np.empty((n_steps + 1, m, m + 2))
            history.param_var = np.empty((n_steps + 1, m, m + 2))
        if cfg.record_intensity_history:
            for key in _INTENSITY_KEYS:
                setattr(history, key, np.empty((n_steps, m)))
    for (chunk_ens, pmean, pvar, intensity), part in chunks:
        for local, pos in enumerate(part):
            ensembles[pos] = chunk_ens[local]
        if history is not None and cfg.record_param_history:
            history.param_mean[:, part, :] = pmean
            history.param_var[:, part, :] = pvar
        if history is not None and cfg.record_intensity_history:
            for key in _INTENSITY_KEYS:
                getattr(history, key)[:, part] = intensity[key]
    return FilterResult(ensembles, cfg, n_steps, history)


def _copy_ensemble(e: NodeEnsemble) -> NodeEnsemble:
    return NodeEnsemble(e.node_index, e.intensity.copy(), e.params.copy())


def save_filter_result(
    result: FilterResult,
    out_dir: str | Path,
    rmse_norm: np.ndarray | None = None,
) -> None:
    """Write the manifest, mean excitation matrix, diagnostics and snapshots.

    ``rmse_norm`` (n_steps x m), when available from a truth comparison,
    is appended as an extra diagnostics column.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nodes = []
    for e in result.ensembles:
        nodes.append(
            {
                "index": e.node_index,
                "baseline_mean": float(e.baseline.mean()),
                "baseline_sd": float(e.baseline.std(ddof=1)),
                "decay_mean": float(e.decay.mean()),
                "decay_sd": float(e.decay.std(ddof=1)),
                "excitation_mean": e.excitation.mean(axis=0).tolist(),
                "excitation_sd": e.excitation.std(axis=0, ddof=1).tolist(),
            }
        )
    manifest = {
        "config": result.config.to_json(),
        "n_steps": result.n_steps,
        "nodes": nodes,
    }
    (out_dir / "result.json").write_text(json.dumps(manifest, indent=2) + "\n")
    np.savetxt(out_dir / "alpha_mean.csv", result.mean_excitation(), delimiter=",", fmt="%.17g")
    if result.history is not None and result.history.prior_mean is not None:
        h = result.history
        with (out_dir / "diagnostics.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["step", "node"] + list(_INTENSITY_KEYS)
            if rmse_norm is not None:
                header.append("rmse_norm")
            writer.writerow(header)
            n_steps, m = h.prior_mean.shape
            for k in range(n_steps):
                for i in range(m):
                    row = [k, i] + [
                        f"{getattr(h, key)[k, i]:.17g}" for key in _INTENSITY_KEYS
                    ]
                    if rmse_norm is not None:
                        row.append(f"{rmse_norm[k, i]:.17g}")
                    writer.writerow(row)
    snap_dir = out_dir / "ensembles"
    snap_dir.mkdir(exist_ok=True)
    for e in result.ensembles:
        table = np.concatenate([e.intensity[:, None], e.params], axis=1)
        np.savetxt(snap_dir / f"node_{e.node_index:04d}.csv", table, delimiter=",", fmt="%.17g")


def load_ensemble_snapshots(out_dir: str | Path) -> list[NodeEnsemble]:
    """Rebuild node ensembles from the per-node snapshot CSVs."""
    snap_dir = Path(out_dir) / "ensembles"
    paths = sorted(snap_dir.glob("node_*.csv"))
    if not paths:
        raise FileNotFoundError(f"no ensemble snapshots under {snap_dir}")
    out = []
    for path in paths:
        node = int(path.stem.split("_")[1])
        table = np.loadtxt(path, delimiter=",", ndmin=2)
        out.append(NodeEnsemble(node, table[:, 0], table[:, 1:]))
    return out
