"""TOML configuration loading and canonical echo for parameter sets."""
from __future__ import annotations

import math
from importlib import resources
from pathlib import Path
from typing import Optional, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .circuits import (
    CircuitError,
    CouplingParams,
    DtcParams,
    FluxoniumParams,
    ParameterSet,
    ResonatorParams,
)


class ConfigError(ValueError):
    pass


def _qubit_from_table(t: dict, where: str) -> FluxoniumParams:
    try:
        return FluxoniumParams(
            E_C=float(t["E_C"]),
            E_J=float(t["E_J"]),
            E_L=float(t["E_L"]),
            phi_ext=float(t.get("phi_ext", math.pi)),
        )
    except KeyError as err:
        raise ConfigError(f"{where}: missing field {err}") from None


def _coupler_from_table(t: dict, where: str) -> DtcParams:
    def pair(sym: str) -> tuple[float, float]:
        if sym in t:
            return float(t[sym]), float(t[sym])
        try:
            return float(t[sym + "1"]), float(t[sym + "2"])
        except KeyError:
            raise ConfigError(f"{where}: needs {sym} or {sym}1/{sym}2") from None

    ec1, ec2 = pair("E_C")
    ej1, ej2 = pair("E_J")
    try:
        return DtcParams(
            E_C1=ec1, E_C2=ec2, E_J1=ej1, E_J2=ej2,
            E_J12=float(t["E_J12"]), J12=float(t["J12"]),
            phi_ext=float(t.get("phi_ext", math.pi)),
            flux_coeffs=tuple(t["flux_coeffs"]) if "flux_coeffs" in t else None,
        )
    except KeyError as err:
        raise ConfigError(f"{where}: missing field {err}") from None


def _resonator_from_table(t: dict, where: str) -> ResonatorParams:
    try:
        return ResonatorParams(
            omega_r=float(t["omega_r"]),
            g_r=float(t["g_r"]),
            Q=float(t["Q"]),
            alpha=float(t.get("alpha", 0.0)),
            fock_dim=int(t.get("fock_dim", 6)),
        )
    except KeyError as err:
        raise ConfigError(f"{where}: missing field {err}") from None


def parameter_set_from_dict(doc: dict) -> ParameterSet:
    if "qubit" not in doc or "coupler" not in doc:
        raise ConfigError("config requires [[qubit]] and [[coupler]] tables")
    qubits = [_qubit_from_table(t, f"qubit[{i}]") for i, t in enumerate(doc["qubit"])]
    couplers = [_coupler_from_table(t, f"coupler[{i}]") for i, t in enumerate(doc["coupler"])]
    couplings = [
        CouplingParams(J_qc=float(t["J_qc"]), gamma=float(t.get("gamma", 0.0)))
        for t in doc.get("coupling", [])
    ]
    if not couplings:
        raise ConfigError("config requires at least one [[coupling]] table")
    while len(couplings) < len(couplers):
        couplings.append(couplings[0])
    readout = [_resonator_from_table(t, f"readout[{i}]") for i, t in enumerate(doc.get("readout", []))]
    reset = [_resonator_from_table(t, f"reset[{i}]") for i, t in enumerate(doc.get("reset", []))]
    try:
        return ParameterSet(
            qubits=tuple(qubits),
            couplers=tuple(couplers),
            couplings=tuple(couplings[: len(couplers)]),
            readout=tuple(readout),
            reset=tuple(reset),
        )
    except CircuitError as err:
        raise ConfigError(str(err)) from None


def load_config(path: Union[str, Path]) -> tuple[ParameterSet, dict, str]:
    """Parse a TOML design file: (parameter set, full document, raw text)."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = tomllib.loads(raw)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    return parameter_set_from_dict(doc), doc, raw


def packaged_config(name: str) -> Path:
    """Path of a configuration shipped with the package (configs/<name>)."""
    ref = resources.files("fdtc").joinpath("configs", name)
    return Path(str(ref))


def extend_chain(ps: ParameterSet, n_qubits: int) -> ParameterSet:
    """Replicate the first qubit/coupler entries into an n-qubit chain."""
    if n_qubits < len(ps.qubits):
        raise ConfigError("extend_chain cannot shrink a parameter set")
    qubits = list(ps.qubits) + [ps.qubits[0]] * (n_qubits - len(ps.qubits))
    couplers = list(ps.couplers) + [ps.couplers[0]] * (n_qubits - 1 - len(ps.couplers))
    couplings = list(ps.couplings) + [ps.couplings[0]] * (n_qubits - 1 - len(ps.couplings))
    return ParameterSet(
        qubits=tuple(qubits[:n_qubits]),
        couplers=tuple(couplers[: n_qubits - 1]),
        couplings=tuple(couplings[: n_qubits - 1]),
        readout=ps.readout,
        reset=ps.reset,
    )


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parameter_set_to_toml(ps: ParameterSet) -> str:
    """Canonical serialization; floats use repr so values round-trip exactly."""
    lines = []
    for q in ps.qubits:
        lines += ["[[qubit]]"]
        lines += [f"{k} = {_fmt(getattr(q, k))}" for k in ("E_C", "E_J", "E_L", "phi_ext")]
        lines += [""]
    for c in ps.couplers:
        lines += ["[[coupler]]"]
        lines += [f"{k} = {_fmt(getattr(c, k))}"
                  for k in ("E_C1", "E_C2", "E_J1", "E_J2", "E_J12", "J12", "phi_ext")]
        if c.flux_coeffs is not None:
            lines += [f"flux_coeffs = [{', '.join(repr(x) for x in c.flux_coeffs)}]"]
        lines += [""]
    for cp in ps.couplings:
        lines += ["[[coupling]]", f"J_qc = {_fmt(cp.J_qc)}", f"gamma = {_fmt(cp.gamma)}", ""]
    for name, seq in (("readout", ps.readout), ("reset", ps.reset)):
        for r in seq:
            lines += [f"[[{name}]]"]
            lines += [f"{k} = {_fmt(getattr(r, k))}"
                      for k in ("omega_r", "g_r", "Q", "alpha", "fock_dim")]
            lines += [""]
    return "\n".join(lines)
