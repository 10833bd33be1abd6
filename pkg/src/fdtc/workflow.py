"""Sequential design workflow: frequency allocation, leakage/crosstalk
robustness under fabrication disorder, threshold gating, Pareto bookkeeping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .circuits import (
    CouplingParams,
    DtcParams,
    FluxoniumParams,
    ParameterSet,
    ResonatorParams,
)
from .config import extend_chain
from .gates import crosstalk_zeta, leakage_worstcase, map_error_budget
from .measurement import (
    plasmon_resonator_coherence,
    readout_metrics,
    reset_simulation,
)
from .noise import NoiseEnvironment, fluxonium_coherence
from .spectra import (
    InfeasibleDesignError,
    dtc_mode_frequencies,
    find_turnoff_flux,
    fluxonium_transition,
)


class WorkflowError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# thresholds and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Thresholds:
    """Target values gating each performance metric.

    Comparators: fidelities/coherence are lower bounds, leakage/crosstalk/
    reset-time upper bounds; the dispersive shift and SNR condition are
    band targets (within a factor ``band`` of the nominal value).
    """

    F_1q: float = 0.9999
    F_2q: float = 0.999
    eta: float = 1e-3
    zeta_khz: float = 10.0
    t_reset_ns: float = 300.0
    F_reset: float = 0.99
    chi2_mhz: float = 2.0
    n_crit: float = 50.0
    snr: float = 1.0
    T_phi_shot_us: float = 10.0
    T1_purcell_us: float = 10.0
    band: float = 2.0


@dataclass(frozen=True)
class MetricReport:
    name: str
    value: float
    threshold: float
    comparator: str          # ">=", "<=", "band"
    passed: bool
    provenance: str = ""
    percentile_95: Optional[float] = None
    percent_passing: Optional[float] = None


def _check(name, value, threshold, comparator, provenance="", band=2.0, **extra) -> MetricReport:
    if comparator == ">=":
        ok = value >= threshold
    elif comparator == "<=":
        ok = value <= threshold
    elif comparator == "band":
        ok = threshold / band <= value <= threshold * band
    else:
        raise WorkflowError(f"unknown comparator {comparator!r}")
    return MetricReport(name, float(value), float(threshold), comparator, bool(ok),
                        provenance, **extra)


# ---------------------------------------------------------------------------
# fabrication disorder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisorderModel:
    """Relative fabrication scatter per parameter class.

    Junction-class energies take 5% when below ``large_junction_cutoff``
    GHz and 2% above it; all charging energies take 2%.  Draws are normal,
    truncated at +-3 sigma by resampling; ``uniform=True`` switches to a
    uniform +-sigma window instead.
    """

    sigma_small_junction: float = 0.05
    sigma_large_junction: float = 0.02
    sigma_charging: float = 0.02
    large_junction_cutoff: float = 5.0
    n_samples: int = 100
    seed: int = 7
    uniform: bool = False

    def sigma_junction(self, value_ghz: float) -> float:
        if value_ghz < self.large_junction_cutoff:
            return self.sigma_small_junction
        return self.sigma_large_junction


def _draw(rng: np.random.Generator, sigma: float, uniform: bool) -> float:
    if sigma == 0.0:
        return 1.0
    if uniform:
        return 1.0 + sigma * (2.0 * rng.random() - 1.0)
    while True:
        x = rng.standard_normal()
        if abs(x) <= 3.0:
            return 1.0 + sigma * x


def perturb_parameter_set(ps: ParameterSet, model: DisorderModel,
                          rng: np.random.Generator) -> ParameterSet:
    qubits = []
    for q in ps.qubits:
        qubits.append(replace(
            q,
            E_C=q.E_C * _draw(rng, model.sigma_charging, model.uniform),
            E_J=q.E_J * _draw(rng, model.sigma_junction(q.E_J), model.uniform),
            E_L=q.E_L * _draw(rng, model.sigma_junction(q.E_L), model.uniform),
        ))
    couplers = []
    for c in ps.couplers:
        couplers.append(replace(
            c,
            E_C1=c.E_C1 * _draw(rng, model.sigma_charging, model.uniform),
            E_C2=c.E_C2 * _draw(rng, model.sigma_charging, model.uniform),
            E_J1=c.E_J1 * _draw(rng, model.sigma_junction(c.E_J1), model.uniform),
            E_J2=c.E_J2 * _draw(rng, model.sigma_junction(c.E_J2), model.uniform),
            E_J12=c.E_J12 * _draw(rng, model.sigma_junction(c.E_J12), model.uniform),
        ))
    return ParameterSet(
        qubits=tuple(qubits),
        couplers=tuple(couplers),
        couplings=ps.couplings,
        readout=ps.readout,
        reset=ps.reset,
    )


def disorder_sample(ps: ParameterSet, model: DisorderModel) -> list[ParameterSet]:
    """The model's n_samples perturbed copies; reproducible under the seed."""
    rng = np.random.default_rng(model.seed)
    return [perturb_parameter_set(ps, model, rng) for _ in range(model.n_samples)]


@dataclass(frozen=True)
class RobustnessSummary:
    values: np.ndarray
    failures: int
    percentile_95: float
    median: float
    percent_below: Optional[float] = None


def nearest_rank_percentile(values: Sequence[float], q: float) -> float:
    vals = np.sort(np.asarray(values, dtype=float))
    if len(vals) == 0:
        raise WorkflowError("no values for percentile")
    k = max(1, math.ceil(q / 100.0 * len(vals)))
    return float(vals[k - 1])


def robustness_eval(
    metric: Callable[[ParameterSet], float],
    samples: Iterable[ParameterSet],
    threshold: Optional[float] = None,
) -> RobustnessSummary:
    """Evaluate a metric over disorder samples; per-sample failures are
    recorded (as worst-case infinities for percentile purposes), not fatal."""
    values, failures = [], 0
    for sample in samples:
        try:
            values.append(float(metric(sample)))
        except Exception:
            failures += 1
            values.append(math.inf)
    arr = np.asarray(values)
    pct = None
    if threshold is not None:
        pct = float(np.mean(arr < threshold) * 100.0)
    return RobustnessSummary(
        values=arr,
        failures=failures,
        percentile_95=nearest_rank_percentile(arr, 95.0),
        median=float(np.median(arr)),
        percent_below=pct,
    )


# ---------------------------------------------------------------------------
# frequency allocation
# ---------------------------------------------------------------------------

def allocation_check(
    ps: ParameterSet,
    guard_ghz: float = 0.05,
    dtc_nmax: int = 12,
    collision_levels: tuple[int, ...] = (3, 4, 5),
) -> list[str]:
    """Frequency-allocation and collision rules; returns violations (empty
    when the allocation is accepted).

    Checks: the reset mode sits below f_01 at zero qubit flux and inside
    (f_01, f_12) at half flux; the working set {f_03, f_14, f_12,
    omega_off, omega_r, omega_r'} is mutually separated by the guard; the
    readout mode sits between f_03 and f_14; and the coupler's upper
    levels miss the f_14 transition at the turn-off flux.
    """
    v: list[str] = []
    q = ps.qubits[0]
    f01_half = fluxonium_transition(q.at_flux(math.pi), 0, 1)
    f12_half = fluxonium_transition(q.at_flux(math.pi), 1, 2)
    f03_half = fluxonium_transition(q.at_flux(math.pi), 0, 3)
    f14_half = fluxonium_transition(q.at_flux(math.pi), 1, 4)
    f01_zero = fluxonium_transition(q.at_flux(0.0), 0, 1)

    try:
        off = find_turnoff_flux(ps.couplers[0], n_max=dtc_nmax)
    except InfeasibleDesignError as err:
        v.append(f"coupler turn-off: {err}")
        off = None

    named = {"f_03": f03_half, "f_14": f14_half, "f_12": f12_half}
    if off is not None:
        named["omega_off"] = off.omega_off
    if ps.readout:
        named["omega_r"] = ps.readout[0].omega_r
    if ps.reset:
        named["omega_r_reset"] = ps.reset[0].omega_r

    if ps.reset:
        w_reset = ps.reset[0].omega_r
        if w_reset >= f01_zero:
            v.append(
                f"reset resonator {w_reset:.3f} GHz must sit below f_01 at zero "
                f"flux ({f01_zero:.3f} GHz)"
            )
        if not (f01_half < w_reset < f12_half):
            v.append(
                f"reset resonator {w_reset:.3f} GHz outside the (f_01, f_12) "
                f"band ({f01_half:.3f}, {f12_half:.3f}) at half flux"
            )
    if ps.readout:
        w_ro = ps.readout[0].omega_r
        if not (f03_half < w_ro < f14_half):
            v.append(
                f"readout resonator {w_ro:.3f} GHz outside the (f_03, f_14) "
                f"band ({f03_half:.3f}, {f14_half:.3f})"
            )

    names = sorted(named)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            gap = abs(named[a] - named[b])
            if gap < guard_ghz:
                v.append(f"frequency collision: {a}={named[a]:.4f} and "
                         f"{b}={named[b]:.4f} GHz separated by {gap * 1e3:.1f} MHz")

    if off is not None:
        c = ps.couplers[0].at_flux(off.phi_off)
        from .circuits import dtc_hamiltonian
        evals = np.linalg.eigvalsh(dtc_hamiltonian(c, dtc_nmax).values)
        evals = evals - evals[0]
        for m in collision_levels:
            if m < len(evals) and abs(evals[m] - f14_half) < guard_ghz:
                v.append(
                    f"coupler level {m} ({evals[m]:.4f} GHz) collides with f_14 "
                    f"({f14_half:.4f} GHz) at the turn-off flux"
                )
    return v


# ---------------------------------------------------------------------------
# Pareto bookkeeping
# ---------------------------------------------------------------------------

def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Minimization dominance: a <= b everywhere and < somewhere."""
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def pareto_record(candidates: Sequence[Sequence[float]]) -> list[int]:
    """Indices of the non-dominated candidates, in stable input order.

    All metrics are minimized (fidelities should be recast as infidelities
    before recording).
    """
    n = len(candidates)
    keep = []
    for i in range(n):
        if any(dominates(candidates[j], candidates[i]) for j in range(n) if j != i):
            continue
        keep.append(i)
    return keep


# ---------------------------------------------------------------------------
# the sequential workflow
# ---------------------------------------------------------------------------

@dataclass
class WorkflowResult:
    accepted: bool
    halted_at: Optional[str]
    parameter_set: ParameterSet
    reports: list[MetricReport] = field(default_factory=list)
    audit: list[dict] = field(default_factory=list)


def _leakage_metric(t_g: float, window: float, dims: dict) -> Callable[[ParameterSet], float]:
    def metric(sample: ParameterSet) -> float:
        _, eta, _ = leakage_worstcase(
            sample, t_g=t_g, window=window, use_oracle_at_pole=False, **dims
        )
        return eta
    return metric


def run_workflow(
    ps: ParameterSet,
    thresholds: Thresholds = Thresholds(),
    disorder: DisorderModel = DisorderModel(),
    env: NoiseEnvironment = NoiseEnvironment(),
    t_g: float = 50.0,
    J_grid: Sequence[float] = (0.3, 0.4, 0.5, 0.6, 0.7),
    robustness_fraction: float = 0.95,
    n_zeta_samples: int = 25,
    leakage_dims: Optional[dict] = None,
    zeta_dims: Optional[dict] = None,
) -> WorkflowResult:
    """The staged design sequence over a candidate parameter set.

    Stages: (0-1) frequency allocation, with re-checks after every accepted
    parameter update; (2-3) single-qubit coherence gate; (4-6) choose the
    smallest coupling in J_grid whose worst-case leakage is robust, then the
    two-qubit fidelity gate; (7-8) spectator crosstalk; (9-11, 15) reset;
    (12-14) readout.  Halts at the first failing stage with a named report.
    """
    leakage_dims = leakage_dims or {"K_q": 8, "K_c": 6, "dtc_nmax": 10}
    zeta_dims = zeta_dims or {"K_q": 4, "K_c": 4, "K_active": 16, "dtc_nmax": 8}
    audit: list[dict] = []
    reports: list[MetricReport] = []
    result = WorkflowResult(False, None, ps, reports, audit)

    def log(stage, **kw):
        audit.append({"stage": stage, **kw})

    def halt(stage: str) -> WorkflowResult:
        result.halted_at = stage
        log(stage, event="halt")
        return result

    # --- steps 0-1: allocation over feasible ranges -----------------------
    violations = allocation_check(ps)
    log("0-1 allocation", violations=violations)
    if violations:
        reports.append(_check("allocation", len(violations), 0, "<=",
                              provenance="allocation_check"))
        return halt("0-1 allocation")
    reports.append(_check("allocation", 0, 0, "<=", provenance="allocation_check"))

    # --- steps 2-3: single-qubit coherence gate ---------------------------
    coh = fluxonium_coherence(ps.qubits[0], env, t_g_ns=t_g)
    reports.append(_check("F_1q", coh.F_1q, thresholds.F_1q, ">=",
                          provenance="fluxonium_coherence"))
    log("2-3 single-qubit", F_1q=coh.F_1q,
        T1_dielectric_us=coh.T1_dielectric_us, Tphi_us=coh.Tphi_flux_us)
    if coh.F_1q < thresholds.F_1q:
        return halt("2-3 single-qubit fidelity")

    # --- steps 4-6: leakage-robust coupling, then two-qubit fidelity ------
    samples_cache = None
    chosen_J = None
    for J in J_grid:
        trial = ParameterSet(
            qubits=ps.qubits,
            couplers=ps.couplers,
            couplings=tuple(CouplingParams(J, cp.gamma) for cp in ps.couplings),
            readout=ps.readout,
            reset=ps.reset,
        )
        if allocation_check(trial):
            log("4-6 leakage", J_qc=J, event="allocation re-check failed")
            continue
        metric = _leakage_metric(t_g, 0.3, leakage_dims)
        eta_nominal = metric(trial)
        samples = disorder_sample(trial, disorder)
        summary = robustness_eval(metric, samples, threshold=thresholds.eta)
        log("4-6 leakage", J_qc=J, eta_nominal=eta_nominal,
            percent_below=summary.percent_below, p95=summary.percentile_95)
        if eta_nominal < thresholds.eta and summary.percent_below >= 100 * robustness_fraction:
            chosen_J = J
            ps = trial
            samples_cache = samples
            break
    if chosen_J is None:
        reports.append(_check("eta_tilde", math.inf, thresholds.eta, "<=",
                              provenance="leakage_worstcase"))
        return halt("4-6 leakage minimization")
    best_transition, eta_nominal, _ = leakage_worstcase(
        ps, t_g=t_g, use_oracle_at_pole=False, **leakage_dims
    )
    reports.append(_check("eta_tilde", eta_nominal, thresholds.eta, "<=",
                          provenance=f"leakage_worstcase J_qc={chosen_J}"))

    budget = map_error_budget(ps, best_transition, env, t_g=t_g)
    f2q = 1.0 - budget.total
    reports.append(_check("F_2q", f2q, thresholds.F_2q, ">=",
                          provenance=f"map_error_budget {best_transition}"))
    log("5-6 two-qubit fidelity", transition=str(best_transition),
        f_relax=budget.f_relax, f_dephase=budget.f_dephase, f_leak=budget.f_leak)
    if f2q < thresholds.F_2q:
        return halt("5-6 two-qubit fidelity")

    # --- steps 7-8: spectator crosstalk -----------------------------------
    ps3 = extend_chain(ps, 3)
    zeta_metric = lambda s: crosstalk_zeta(s, flux_tol=1e-4, **zeta_dims).zeta_khz
    zeta_nominal = crosstalk_zeta(ps3, **zeta_dims).zeta_khz
    zeta_model = replace(disorder, n_samples=n_zeta_samples)
    zeta_summary = robustness_eval(zeta_metric, disorder_sample(ps3, zeta_model),
                                   threshold=thresholds.zeta_khz)
    reports.append(_check("zeta_khz", zeta_nominal, thresholds.zeta_khz, "<=",
                          provenance="crosstalk_zeta",
                          percentile_95=zeta_summary.percentile_95,
                          percent_passing=zeta_summary.percent_below))
    log("7-8 crosstalk", zeta_nominal=zeta_nominal, p95=zeta_summary.percentile_95)
    if zeta_nominal > thresholds.zeta_khz or zeta_summary.percentile_95 > thresholds.zeta_khz:
        return halt("7-8 crosstalk")

    # --- steps 9-11, 15: reset --------------------------------------------
    if ps.reset:
        r = ps.reset[0]
        outcome = reset_simulation(ps.qubits[0], r, t_max_ns=thresholds.t_reset_ns + 100,
                                   threshold=thresholds.F_reset)
        reports.append(_check("t_reset_ns", outcome.t_reset_ns,
                              thresholds.t_reset_ns, "<=", provenance="reset_simulation"))
        reports.append(_check("F_reset", outcome.F_reset, thresholds.F_reset, ">=",
                              provenance="reset_simulation"))
        t1p, tps = plasmon_resonator_coherence(ps.qubits[0], r, env)
        reports.append(_check("T1_purcell_us", t1p, thresholds.T1_purcell_us, ">=",
                              provenance="plasmon_resonator_coherence (reset)"))
        reports.append(_check("T_phi_shot_us", tps, thresholds.T_phi_shot_us, ">=",
                              provenance="plasmon_resonator_coherence (reset)"))
        log("9-11 reset", t_reset=outcome.t_reset_ns, F_reset=outcome.F_reset,
            T1_purcell=t1p, T_phi_shot=tps)
        if not all(r_.passed for r_ in reports[-4:]):
            return halt("9-11 reset")
        if allocation_check(ps):
            return halt("9-11 reset (allocation re-check)")

    # --- steps 12-14: readout ---------------------------------------------
    if ps.readout:
        m = readout_metrics(ps.qubits[0], ps.readout[0])
        reports.append(_check("chi2_mhz", m.chi2_mhz, thresholds.chi2_mhz, "band",
                              provenance="readout_metrics", band=thresholds.band))
        reports.append(_check("n_crit", m.n_crit, thresholds.n_crit, ">=",
                              provenance="readout_metrics"))
        reports.append(_check("snr_ratio", m.snr_ratio, thresholds.snr, "band",
                              provenance="readout_metrics", band=thresholds.band))
        log("12-14 readout", chi2_mhz=m.chi2_mhz, n_crit=m.n_crit, snr=m.snr_ratio)
        if not all(r_.passed for r_ in reports[-3:]):
            return halt("12-14 readout")
        if allocation_check(ps):
            return halt("12-14 readout (allocation re-check)")

    result.accepted = True
    result.parameter_set = ps
    log("done", accepted=True)
    return result
