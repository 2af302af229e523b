"""Named experiment settings."""
from __future__ import annotations

from ..errors import ConfigError
from .config import ExperimentConfig, from_mapping

BENCH_POINT = [0.9162907318741551, 1.0986122886681098]  # log(2.5), log(3)

PRESETS: dict[str, tuple[str, dict]] = {
    "sv_mean": (
        "SV model from (1, 0), sigma = (1, 1/2), T = 1: CIS estimate of E[X_T]",
        {"model": "sv", "method": "cis", "x0": [1.0, 0.0], "T": 1.0, "n_replicates": 100_000},
    ),
    "sv_horizon": (
        "SV model, E[X_T] over T = 1..6 with CIS-R2 (switch method to compare)",
        {"model": "sv", "method": "cis_r2", "x0": [1.0, 0.0], "horizons": [1, 2, 3, 4, 5, 6],
         "n_particles": 500, "n_checkpoints": 10, "ess_threshold": 250, "n_replicates": 20},
    ),
    "sv_density_wgr": (
        "SV model, density at x_T = x0 by WGR2 with lambda(s) = s^(-1/2) / 2",
        {"model": "sv", "method": "wgr2", "x0": [1.0, 0.0], "delta": 0.5, "alpha": 0.5,
         "n_replicates": 100_000},
    ),
    "ou_check": (
        "OU (rho 0.5, mu 1, sigma 0.4) from 2, T = 1: CIS estimate of E[X_T] = 1 + exp(-1/2)",
        {"model": "ou", "method": "cis", "x0": [2.0], "T": 1.0, "n_replicates": 100_000},
    ),
    "cir_density": (
        "Bivariate CIR transition density at X0 = X1 = (2.5, 3), T = 1, by guided CIS in log coordinates",
        {"model": "logcir", "method": "gcis", "x0": BENCH_POINT, "x_T": BENCH_POINT, "T": 1.0,
         "density_coordinates": "cir", "n_replicates": 10_000},
    ),
    "cir_k5_gcis": (
        "CIR benchmark point (2.5, 3), guided CIS at cost K5 = 32^3",
        {"model": "logcir", "method": "gcis", "x0": BENCH_POINT, "x_T": BENCH_POINT, "T": 1.0,
         "density_coordinates": "cir", "budget": 32.0**3, "n_replicates": 1000},
    ),
    "cir_k4_dg": (
        "CIR benchmark point (2.5, 3), Durham-Gallant with M = 16 intervals and N = 256 paths (K4)",
        {"model": "logcir", "method": "dg", "x0": BENCH_POINT, "x_T": BENCH_POINT, "T": 1.0,
         "density_coordinates": "cir", "m_steps": 16, "n_replicates": 256},
    ),
}


def preset_mapping(name: str) -> dict:
    try:
        return dict(PRESETS[name][1])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def preset(name: str, **overrides) -> ExperimentConfig:
    return from_mapping({**preset_mapping(name), **overrides})
