"""Communication-efficient distributed optimization with lattice-quantized messages."""

from .data import gen_synthetic, load_libsvm, problem_from_arrays, write_libsvm
from .errors import ContractViolation, DivergenceError, InputError, InvariantViolation, RankDeficientError
from .glm import GlmProblem, Logistic, Quadratic, compute_constants
from .net import BitLedger, Network, Topology
from .quantizer import decode, encode, make_spec, quantize

__version__ = "0.1.0"
