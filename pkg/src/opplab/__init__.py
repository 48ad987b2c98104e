"""Simulation and exact checks for weighted laws of large numbers of Oppenheim-expansion ratios."""

from .distributions import ConstC, PowerC, Power, RatioA, RatioB, Uniform, parse_dist
from .errors import (ConfigError, DomainError, NoLipschitzConstant, OpplabError,
                     QuadratureBudgetExceeded)
from .expansion import ExpansionScheme, delta, luroth, next_digit, parse_scheme, simulate

__version__ = "0.1.0"
