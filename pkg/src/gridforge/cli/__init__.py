"""Command-line experiments: synthetic data, configs and runners."""

from .config import ExperimentConfig, load_config
from .experiments import compare_plasticnet, run_cartpole, run_experiment
from .synth import (EndonetRecipe, PlasticRecipe, TeRecipe, gen_endonet_data, gen_plastic_spectra,
                    gen_te_like)

__all__ = ["ExperimentConfig", "load_config", "run_experiment", "compare_plasticnet", "run_cartpole",
           "EndonetRecipe", "PlasticRecipe", "TeRecipe", "gen_endonet_data",
           "gen_plastic_spectra", "gen_te_like"]
