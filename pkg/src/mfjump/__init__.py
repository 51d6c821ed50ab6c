"""Simulation toolkit for mean-field SDEs driven by Brownian motion and spectrally-positive Lévy noise.

Modules: ``levy`` (jump measures and noise paths), ``model`` (coefficients),
``measure`` (empirical measures, W1), ``scheme`` (Euler-Maruyama particle
systems and coupled error experiments), ``yamada`` (Yamada-Watanabe functions
and lemma checks), ``rates`` (theoretical exponents, log-log fits), ``cli``.
"""

from .grid import GridSpec
from .levy import CompoundPoisson, JumpLaw, StablePositive, TemperedStable, generate_noise_path, sample_increment
from .measure import EmpiricalMeasure1D, moment, w1
from .model import InitialLaw, builtin_intensity_model, builtin_lipschitz_model, positivity_extension
from .rates import fit_loglog, predict_chaos_rate, predict_euler_rate
from .scheme import coupled_chaos_error, coupled_discretization_error, run_limit_copies, run_particle_system
from .yamada import build_yw, verify_lemma_key0, verify_lemma_key12

__version__ = "0.1.0"

__all__ = [
    "GridSpec",
    "StablePositive",
    "TemperedStable",
    "CompoundPoisson",
    "JumpLaw",
    "generate_noise_path",
    "sample_increment",
    "EmpiricalMeasure1D",
    "w1",
    "moment",
    "InitialLaw",
    "builtin_intensity_model",
    "builtin_lipschitz_model",
    "positivity_extension",
    "predict_euler_rate",
    "predict_chaos_rate",
    "fit_loglog",
    "run_particle_system",
    "run_limit_copies",
    "coupled_discretization_error",
    "coupled_chaos_error",
    "build_yw",
    "verify_lemma_key0",
    "verify_lemma_key12",
]
