"""Models as plain Python objects, with tape-based gradients, MAP
optimizers and Hamiltonian Monte Carlo samplers."""

from probtape.ad import (ElementalError, GradientResult, Tape, TapeError,
                         Tracked, call_elemental, elemental, gradient,
                         register_elemental, tsum)
from probtape.dist import Dirichlet, Expon, Normal, log_sum_exp, softmax
from probtape.model import (DimensionError, Model, ParamCursor, Product,
                            compose_product, func_grad)

__version__ = "0.1.0"
