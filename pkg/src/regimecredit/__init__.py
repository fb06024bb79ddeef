"""Regime-switching structural credit model toolkit.

Log-linear market value dynamics for public companies with observed
equities and liabilities, a latent Markov regime process, EM estimation,
risk-neutral and forward-measure valuation of bonds and of equity/liability
values as options on firm assets, and physical default probabilities.
"""

from .chain import (
    MarkovChain,
    dedup_regimes,
    enumerate_paths,
    future_path_weights,
    path_probability,
    sample_paths,
    simulate_regimes,
)
from .dynamics import (
    ConditionalMoments,
    PathDynamics,
    bond_price,
    build_p_dynamics,
    build_q_dynamics,
    conditional_moments,
    forward_shift,
    girsanov_kernel,
    transition_product,
    transition_products,
)
from .errors import NumericalError, RegimeCreditError, ValidationError
from .estimate import (
    EMConfig,
    EMFit,
    FilterOutput,
    SmootherOutput,
    build_y_series,
    em_fit,
    estimate_standard_errors,
    exact_smoother,
    hamilton_filter,
    log_regime_densities,
    loglik_at,
    m_step_C,
    m_step_Sigma,
    m_step_transition,
    regime_density,
    single_regime_loglik,
    structural_matrices,
)
from .linearize import (
    AssetLinearization,
    LinearizationSchedule,
    asset_linearization,
    asset_schedule,
    expected_regime_quantities,
    export_schedule,
    gordon_step,
    mu_closed_form,
    mu_residual,
    newton_solve_mu,
    solve_mu_schedule,
)
from .model import ModelParams, load_params, save_params
from .panel import (
    LogPanel,
    MarketPanel,
    load_panel,
    log_transform,
    realized_log_returns,
    save_panel,
)
from .pricing import (
    ValuationReport,
    ValuationRequest,
    gaussian_rectangle_probability,
    literal_gaussian_cdf,
    lognormal_call,
    lognormal_put,
    mixture_default_prob,
    mixture_valuation,
    path_asset_law,
    path_call_put,
    path_default_prob,
)
from .simulate import SimulationSpec, simulate_market, simulate_states, substream

__version__ = "0.1.0"
