"""Whiskers of hyperbolic tori in a pendulum coupled to rotators."""
from .fourier import FourierPoly, FrequencyVector, Modes, default_frequency
from .model import ConfigError, ModelConfig, Perturbation, Term, load_config
from .torus import solve_torus
from .linearization import solve_newton, tune_gamma_rg
from .whisker import solve_whisker
from .lindstedt import EpsSeries, Tree, continue_to_wedge, enumerate_trees, expand_orders, trig_degree_check
from .pipeline import RunReport, run_pipeline

__version__ = "0.1.0"
