"""Command-line interface: reproducible runs emitting plot-ready CSV/JSON.

Every output file embeds the resolved design (canonical TOML echo) and the
seed as header comments (CSV) or fields (JSON); writes are atomic.  Exit
codes: 0 success, 2 validation error, 3 design infeasibility.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .circuits import CouplingParams, FluxoniumParams, ParameterSet, ResonatorParams
from .config import ConfigError, extend_chain, load_config, parameter_set_to_toml
from .gates import crosstalk_zeta, leakage_worstcase, map_error_budget
from .measurement import (
    plasmon_resonator_coherence,
    readout_metrics,
    reset_simulation,
)
from .noise import NoiseEnvironment, fluxonium_coherence
from .spectra import (
    InfeasibleDesignError,
    MAP_CANDIDATES,
    dtc_mode_frequencies,
    find_turnoff_flux,
    find_turnon_flux,
    fluxonium_transition,
    map_transition_table,
)
from .workflow import (
    DisorderModel,
    Thresholds,
    allocation_check,
    disorder_sample,
    nearest_rank_percentile,
    robustness_eval,
    run_workflow,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3

SCHEMAS = {
    "spectrum": "phi_ext_rad, coupler level energies E1..E6 (GHz), fluxonium "
                "f01/f12/f03/f14 at half flux (GHz)",
    "coherence": "E_J (GHz), E_L (GHz), T1_dielectric (us), T1_flux (us), "
                 "T_phi (us), F_1q (dimensionless)",
    "leakage": "initial, final (bare labels), frequency (GHz), drive_element "
               "(dimensionless), eta_worst (probability)",
    "gate-fidelity": "phi_c (rad), transition, infidelity_relax, "
                     "infidelity_dephase, infidelity_leak, infidelity_total",
    "crosstalk": "sample_index, zeta (kHz), argmin_flux (rad)",
    "readout": "omega_r (GHz), g_r (GHz), chi2 (MHz), n_crit, snr_ratio",
    "reset": "t (ns), reset_infidelity (dimensionless), g_r (GHz), Q",
    "robustness": "sample_index, value",
}


def parse_time_ns(text: str) -> float:
    """Accept suffixed literals: '50ns', '0.3us', or bare ns numbers."""
    t = text.strip().lower()
    if t.endswith("ns"):
        return float(t[:-2])
    if t.endswith("us"):
        return float(t[:-2]) * 1e3
    return float(t)


def parse_sweep(text: str) -> np.ndarray:
    """'start:stop:n' -> n evenly spaced values."""
    try:
        start, stop, n = text.split(":")
        return np.linspace(float(start), float(stop), int(n))
    except ValueError:
        raise ConfigError(f"bad sweep specification {text!r}; expected start:stop:n")


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header_comments(ps: ParameterSet, seed=None, **extra) -> str:
    lines = []
    for k, v in extra.items():
        lines.append(f"# {k} = {v}")
    if seed is not None:
        lines.append(f"# seed = {seed}")
    for raw in parameter_set_to_toml(ps).splitlines():
        lines.append(f"# {raw}")
    return "\n".join(lines) + "\n"


def write_csv(path: Path, columns: list[str], rows, ps: ParameterSet, seed=None, **extra):
    body = [",".join(columns)]
    for row in rows:
        body.append(",".join(_csv_cell(x) for x in row))
    _atomic_write(path, _header_comments(ps, seed, **extra) + "\n".join(body) + "\n")


def _csv_cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_json(path: Path, payload: dict, ps: ParameterSet, seed=None, **extra):
    doc = {"config_echo": parameter_set_to_toml(ps), "seed": seed}
    doc.update(extra)
    doc.update(payload)
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def _out_dir(args) -> Path:
    if args.output:
        return Path(args.output)
    return Path(os.environ.get("FDTC_OUTPUT_DIR", "."))


def _load(args) -> tuple[ParameterSet, str]:
    ps, _, raw = load_config(args.config)
    return ps, raw


def _maybe_schema(args) -> bool:
    if getattr(args, "schema", False):
        print(SCHEMAS[args.command])
        return True
    return False


def _pool_map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_spectrum(args) -> int:
    if _maybe_schema(args):
        return EXIT_OK
    ps, _ = _load(args)
    fluxes = parse_sweep(args.flux_sweep)
    q = ps.qubits[0].at_flux(math.pi)
    f_named = [fluxonium_transition(q, *t) for t in ((0, 1), (1, 2), (0, 3), (1, 4))]

    def levels(phi):
        from .circuits import dtc_hamiltonian
        evals = np.linalg.eigvalsh(dtc_hamiltonian(ps.couplers[0].at_flux(phi)).values)
        evals = evals - evals[0]
        return [phi] + list(evals[1:7]) + f_named

    rows = _pool_map(levels, fluxes, args.threads)
    cols = (["phi_ext_rad"] + [f"coupler_E{k}_ghz" for k in range(1, 7)]
            + ["f01_ghz", "f12_ghz", "f03_ghz", "f14_ghz"])
    write_csv(_out_dir(args) / "spectrum.csv", cols, rows, ps, command="spectrum")
    print(f"spectrum: {len(rows)} rows -> {_out_dir(args) / 'spectrum.csv'}")
    return EXIT_OK


def cmd_coherence(args) -> int:
    if _maybe_schema(args):
        return EXIT_OK
    ps, _ = _load(args)
    env = NoiseEnvironment()
    ejs = parse_sweep(args.ej_range)
    els = parse_sweep(args.el_range)
    t_g = parse_time_ns(args.tg)
    ec = args.ec if args.ec is not None else ps.qubits[0].E_C

    def point(pair):
        ej, el = pair
        q = FluxoniumParams(E_C=ec, E_J=ej, E_L=el)
        c = fluxonium_coherence(q, env, t_g_ns=t_g)
        return [ej, el, c.T1_dielectric_us, c.T1_flux_us, c.Tphi_flux_us, c.F_1q]

    grid = [(ej, el) for ej in ejs for el in els]
    rows = _pool_map(point, grid, args.threads)
    cols = ["E_J_ghz", "E_L_ghz", "T1_dielectric_us", "T1_flux_us", "Tphi_us", "F_1q"]
    write_csv(_out_dir(args) / "coherence.csv", cols, rows, ps,
              command="coherence", E_C=ec, t_g_ns=t_g, T_eff_K=env.T_eff)
    print(f"coherence: {len(rows)} grid points -> {_out_dir(args) / 'coherence.csv'}")
    return EXIT_OK


def _apply_J(ps: ParameterSet, J: float) -> ParameterSet:
    return ParameterSet(
        qubits=ps.qubits,
        couplers=ps.couplers,
        couplings=tuple(CouplingParams(J, cp.gamma) for cp in ps.couplings),
        readout=ps.readout,
        reset=ps.reset,
    )


def cmd_leakage(args) -> int:
    if _maybe_schema(args):
        return EXIT_OK
    ps, _ = _load(args)
    if args.J is not None:
        ps = _apply_J(ps, args.J)
    t_g = parse_time_ns(args.tg)
    best, eta, per_candidate = leakage_worstcase(ps, t_g=t_g)
    table = map_transition_table(ps)
    rows = [
        ["".join(map(str, t.initial)), "".join(map(str, t.final)),
         t.frequency, t.drive_element, per_candidate.get((t.initial, t.final), math.nan)]
        for t in table
    ]
    write_csv(_out_dir(args) / "leakage.csv",
              ["initial", "final", "frequency_ghz", "drive_element", "eta_worst"],
              rows, ps, command="leakage", t_g_ns=t_g)
    print(f"eta_tilde = {eta:.3e} via {best[0]}->{best[1]} (t_g = {t_g:.0f} ns)")
    if args.samples:
        model = DisorderModel(n_samples=args.samples, seed=args.seed)
        metric = lambda s: leakage_worstcase(
            s, t_g=t_g, use_oracle_at_pole=False, K_q=8, K_c=6, dtc_nmax=10)[1]
        summary = robustness_eval(metric, disorder_sample(ps, model), threshold=1e-3)
        print(f"disorder n={args.samples}: median {summary.median:.3e}, "
              f"95th percentile {summary.percentile_95:.3e}, "
              f"{summary.percent_below:.0f}% below 1e-3")
    return EXIT_OK


def cmd_gate_fidelity(args) -> int:
    if _maybe_schema(args):
        return EXIT_OK
    ps, _ = _load(args)
    env = NoiseEnvironment()
    t_g = parse_time_ns(args.tg)
    fluxes = parse_sweep(args.flux_scan) if args.flux_scan else np.array([math.pi])
    transitions = [MAP_CANDIDATES[i] for i in (7, 0, 1, 2)]
    rows = []
    for phi in fluxes:
        for tr in transitions:
            try:
                b = map_error_budget(ps, tr, env, t_g=t_g, phi_c=float(phi))
                rows.append([float(phi), f"{''.join(map(str, tr[0]))}->{''.join(map(str, tr[1]))}",
                             b.f_relax, b.f_dephase, b.f_leak, b.total])
            except Exception as err:
                rows.append([float(phi), f"{''.join(map(str, tr[0]))}->{''.join(map(str, tr[1]))}",
                             math.nan, math.nan, math.nan, f"error: {err}"])
    write_csv(_out_dir(args) / "gate_fidelity.csv",
              ["phi_c_rad", "transition", "infid_relax", "infid_dephase",
               "infid_leak", "infid_total"],
              rows, ps, command="gate-fidelity", t_g_ns=t_g, T_eff_K=env.T_eff)
    print(f"gate-fidelity: {len(rows)} rows -> {_out_dir(args) / 'gate_fidelity.csv'}")
    return EXIT_OK


def cmd_crosstalk(args) -> int:
    if _maybe_schema(args):
        return EXIT_OK
    ps, _ = _load(args)
    ps3 = extend_chain(ps, 3)
    nominal = crosstalk_zeta(ps3)
    print(f"zeta = {nominal.zeta_khz:.3f} kHz at phi_12 = {nominal.argmin_flux:.5f} rad")
    rows = [[-1, nominal.zeta_khz, nominal.argmin_flux]]
    if args.samples:
        model = DisorderModel(n_samples=args.samples, seed=args.seed)

        def metric(s):
            r = crosstalk_zeta(s, flux_tol=1e-4)
            return r.zeta_khz

        vals = []
        for i, sample in enumerate(disorder_sample(ps3, model)):
            try:
                r = crosstalk_zeta(sample, flux_tol=1e-4)
                vals.append(r.zeta_khz)
                rows.append([i, r.zeta_khz, r.argmin_flux])
            except Exception:
                vals.append(math.inf)
                rows.append([i, math.inf, math.nan])
        print(f"disorder n={args.samples}: median {np.median(vals):.2f} kHz, "
              f"95th percentile {nearest_rank_percentile(vals, 95):.2f} kHz")
    write_csv(_out_dir(args) / "crosstalk.csv",
              ["sample_index", "zeta_khz", "argmin_flux_rad"],
              rows, ps, seed=args.seed, command="crosstalk")
    return EXIT_OK


def cmd_readout(args) -> int:
    if _maybe_schema(args):
        return EXIT_OK
    ps, _ = _load(args)
    if not ps.readout:
        print("config has no [[readout]] table", file=sys.stderr)
        return EXIT_USAGE
    base = ps.readout[0]
    omegas = parse_sweep(args.omega_range) if args.omega_range else np.array([base.omega_r])
    gs = parse_sweep(args.g_range) if args.g_range else np.array([base.g_r])

    def point(pair):
        w, g = pair
        r = ResonatorParams(w, g, base.Q, base.alpha, base.fock_dim)
        try:
            m = readout_metrics(ps.qubits[0], r)
            return [w, g, m.chi2_mhz, m.n_crit, m.snr_ratio]
        except Exception:
            return [w, g, math.nan, math.nan, math.nan]

    grid = [(w, g) for w in omegas for g in gs]
    rows = _pool_map(point, grid, args.threads)
    write_csv(_out_dir(args) / "readout.csv",
              ["omega_r_ghz", "g_r_ghz", "chi2_mhz", "n_crit", "snr_ratio"],
              rows, ps, command="readout", Q=base.Q)
    if len(rows) == 1:
        _, _, chi2, ncrit, snr = rows[0]
        print(f"|2chi| = {chi2:.3f} MHz, n_crit = {ncrit:.1f}, |2chi|/kappa = {snr:.3f}")
    else:
        print(f"readout: {len(rows)} grid points -> {_out_dir(args) / 'readout.csv'}")
    return EXIT_OK


def cmd_reset(args) -> int:
    if _maybe_schema(args):
        return EXIT_OK
    ps, _ = _load(args)
    if not ps.reset:
        print("config has no [[reset]] table", file=sys.stderr)
        return EXIT_USAGE
    base = ps.reset[0]
    Q = args.Q if args.Q is not None else base.Q
    g = args.g if args.g is not None else base.g_r
    r = ResonatorParams(base.omega_r, g, Q, base.alpha, base.fock_dim)
    t_max = parse_time_ns(args.tmax)
    try:
        out = reset_simulation(ps.qubits[0], r, t_max_ns=t_max)
    except InfeasibleDesignError as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    rows = [[t, 1.0 - f, g, Q] for t, f in zip(out.times_ns, out.fidelity_trace)]
    write_csv(_out_dir(args) / "reset.csv",
              ["t_ns", "reset_infidelity", "g_r_ghz", "Q"],
              rows, ps, command="reset")
    t1p, tps = plasmon_resonator_coherence(ps.qubits[0], r, NoiseEnvironment())
    print(f"F_reset = {out.F_reset:.5f} at t = {out.times_ns[-1]:.0f} ns; "
          f"99% settled at {out.t_reset_ns:.0f} ns; "
          f"T1_Purcell = {t1p:.1f} us, T_phi_shot = {tps:.1f} us")
    return EXIT_OK


def cmd_allocate(args) -> int:
    if _maybe_schema(args):
        return EXIT_OK
    ps, _ = _load(args)
    violations = allocation_check(ps)
    payload = {"violations": violations, "passed": not violations}
    write_json(_out_dir(args) / "allocation.json", payload, ps, command="allocate")
    if violations:
        print("allocation violations:")
        for v in violations:
            print(f"  - {v}")
    else:
        print("allocation: all checks pass")
    return EXIT_OK


def cmd_robustness(args) -> int:
    if _maybe_schema(args):
        return EXIT_OK
    ps, _ = _load(args)
    model = DisorderModel(n_samples=args.samples, seed=args.seed)
    t_g = parse_time_ns(args.tg)
    if args.metric == "leakage":
        metric = lambda s: leakage_worstcase(
            s, t_g=t_g, use_oracle_at_pole=False, K_q=8, K_c=6, dtc_nmax=10)[1]
        samples = disorder_sample(ps, model)
        threshold = 1e-3
    elif args.metric == "crosstalk":
        ps3 = extend_chain(ps, 3)
        metric = lambda s: crosstalk_zeta(s, flux_tol=1e-4).zeta_khz
        samples = disorder_sample(ps3, model)
        threshold = 10.0
    else:
        print(f"unknown metric {args.metric}", file=sys.stderr)
        return EXIT_USAGE
    summary = robustness_eval(metric, samples, threshold=threshold)
    rows = [[i, v] for i, v in enumerate(summary.values)]
    write_csv(_out_dir(args) / f"robustness_{args.metric}.csv",
              ["sample_index", "value"], rows, ps, seed=args.seed,
              command="robustness", metric=args.metric, n_samples=args.samples)
    print(f"{args.metric}: median {summary.median:.4g}, 95th percentile "
          f"{summary.percentile_95:.4g}, {summary.percent_below:.0f}% below {threshold}")
    return EXIT_OK


def cmd_workflow(args) -> int:
    if _maybe_schema(args):
        return EXIT_OK
    ps, _ = _load(args)
    disorder = DisorderModel(n_samples=args.samples, seed=args.seed)
    result = run_workflow(ps, disorder=disorder)
    out = _out_dir(args)
    payload = {
        "accepted": result.accepted,
        "halted_at": result.halted_at,
        "reports": [vars(r) for r in result.reports],
        "audit": result.audit,
    }
    write_json(out / "workflow_audit.json", payload, result.parameter_set,
               seed=args.seed, command="workflow")
    _atomic_write(out / "workflow_accepted.toml",
                  parameter_set_to_toml(result.parameter_set))
    for r in result.reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"  [{status}] {r.name} = {r.value:.6g} ({r.comparator} {r.threshold:g})")
    if not result.accepted:
        print(f"workflow halted at stage: {result.halted_at}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"workflow accepted -> {out / 'workflow_accepted.toml'}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdtc",
        description="Design toolkit for fluxonium processors with "
                    "double-transmon couplers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required=False):
        p.add_argument("--config", required=True, help="TOML design file")
        p.add_argument("--output", default=None, help="output directory "
                       "(default: $FDTC_OUTPUT_DIR or the working directory)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        p.add_argument("--schema", action="store_true",
                       help="print the output column schema and exit")
        p.add_argument("--seed", type=int, default=7 if not seed_required else None,
                       required=seed_required)

    p = sub.add_parser("spectrum", help="coupler/fluxonium levels vs coupler flux")
    common(p)
    p.add_argument("--flux-sweep", default="0:6.283185307179586:201")
    p.set_defaults(run=cmd_spectrum)

    p = sub.add_parser("coherence", help="single-qubit coherence landscape")
    common(p)
    p.add_argument("--ej-range", default="4.5:9.5:21")
    p.add_argument("--el-range", default="0.3:0.65:21")
    p.add_argument("--ec", type=float, default=None)
    p.add_argument("--tg", default="50ns")
    p.set_defaults(run=cmd_coherence)

    p = sub.add_parser("leakage", help="worst-case driven leakage")
    common(p)
    p.add_argument("--tg", default="50ns")
    p.add_argument("--J", type=float, default=None, help="override J_qc (GHz)")
    p.add_argument("--samples", type=int, default=0)
    p.set_defaults(run=cmd_leakage)

    p = sub.add_parser("gate-fidelity", help="controlled-phase error budget")
    common(p)
    p.add_argument("--tg", default="50ns")
    p.add_argument("--flux-scan", default=None, help="phi_c sweep start:stop:n")
    p.set_defaults(run=cmd_gate_fidelity)

    p = sub.add_parser("crosstalk", help="spectator-induced frequency shifts")
    common(p)
    p.add_argument("--samples", type=int, default=0)
    p.set_defaults(run=cmd_crosstalk)

    p = sub.add_parser("readout", help="dispersive readout metrics")
    common(p)
    p.add_argument("--omega-range", default=None)
    p.add_argument("--g-range", default=None)
    p.set_defaults(run=cmd_readout)

    p = sub.add_parser("reset", help="resonator reset dynamics")
    common(p)
    p.add_argument("--tmax", default="400ns")
    p.add_argument("--Q", type=float, default=None)
    p.add_argument("--g", type=float, default=None)
    p.set_defaults(run=cmd_reset)

    p = sub.add_parser("allocate", help="frequency-allocation checks")
    common(p)
    p.set_defaults(run=cmd_allocate)

    p = sub.add_parser("robustness", help="disorder sweep of one metric")
    common(p)
    p.add_argument("--metric", choices=("leakage", "crosstalk"), required=True)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--tg", default="50ns")
    p.set_defaults(run=cmd_robustness)

    p = sub.add_parser("workflow", help="run the sequential design workflow")
    common(p)
    p.add_argument("--samples", type=int, default=25)
    p.set_defaults(run=cmd_workflow)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code not in (0, None) else EXIT_OK
    try:
        return args.run(args)
    except (ConfigError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleDesignError as err:
        print(f"infeasible design: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE


def entrypoint():
    raise SystemExit(main())
