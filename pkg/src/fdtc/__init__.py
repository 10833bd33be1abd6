"""Design toolkit for fluxonium processors with double-transmon couplers.

Maps circuit parameters (fluxonium, coupler, resonator energies and
couplings) to system-level performance: gate fidelity, driven leakage,
spectator crosstalk, dispersive readout, resonator reset and coherence,
with fabrication-disorder robustness analysis and a staged design workflow.
"""

from .circuits import (
    CircuitError,
    CompositeSystem,
    CouplingParams,
    DtcParams,
    FluxoniumParams,
    ParameterSet,
    ResonatorParams,
    composite_2q,
    composite_3q,
    drive_operator,
    dtc_hamiltonian,
    dtc_ho_hamiltonian,
    fluxonium_hamiltonian,
    qubit_resonator_hamiltonian,
)
from .config import ConfigError, extend_chain, load_config, packaged_config, parameter_set_to_toml
from .gates import (
    CrosstalkResult,
    GateErrorBudget,
    LeakageEstimate,
    crosstalk_fidelity_penalty,
    crosstalk_zeta,
    fidelity_dephasing,
    fidelity_leakage,
    fidelity_relaxation,
    leakage_dynamics_oracle,
    leakage_perturbative,
    leakage_worstcase,
    map_error_budget,
)
from .measurement import (
    ReadoutMetrics,
    ResetOutcome,
    critical_photon_number,
    dispersive_shift,
    readout_metrics,
    reset_flux_window,
    reset_simulation,
    snr_condition,
)
from .noise import (
    NoiseEnvironment,
    RateReport,
    composite_rates,
    dephasing_rates_1f,
    dielectric_rate_dtc,
    dielectric_rate_fluxonium,
    fluxonium_coherence,
    purcell_rate,
    relaxation_rate_generic,
    shot_noise_dephasing,
    single_qubit_fidelity,
)
from .operators import HilbertBasis, OperatorMatrix, charge_operator, phase_operator
from .spectra import (
    InfeasibleDesignError,
    OperatingPoint,
    SpectrumResult,
    diagonalize_labelled,
    effective_coupling,
    find_turnoff_flux,
    find_turnon_flux,
    map_transition_table,
)
from .workflow import (
    DisorderModel,
    MetricReport,
    Thresholds,
    allocation_check,
    disorder_sample,
    pareto_record,
    robustness_eval,
    run_workflow,
)

__version__ = "0.1.0"
