"""
semifio: semiclassical wavepacket propagation with a complex-phase Fourier
integral operator, checked against a split-step Fourier reference solver.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .symplectic import (SymplecticBlocks, ConstantSpreading, FieldSpreading, BranchTracker,
                         J, symplectic_defect, cal_Y, cal_A, cal_V, branch_sqrt_det,
                         lemma_identity_residual, random_symplectic, random_theta)
from .lattice import QuadratureSpec, mollifier
from .dynamics import (Potential, make_potential, PhasePoint, StepControl, TrajectoryState,
                       BundleSnapshot, TrajectoryGridBundle, integrate_trajectory,
                       integrate_bundle, action_gradient_check, write_trajectory_csv,
                       LatticeFlow, QuadraticFlow)
from .grid import (Grid, WavefunctionGrid, coherent_state, l2_norm, l2_distance,
                   write_wfgrid, read_wfgrid)
from .reference import split_step_propagate, boundary_mass
from .fio import (SymbolOne, HKSymbol, NodeSymbol, PolynomialTest, CallableSymbol, phase,
                  apply_fio, auto_quadrature, rescaling_check, ipp_residual, ipp2_residual,
                  mollifier_independence, empirical_operator_norm, thawed_splitting_check)
from .stft import (PlainWindow, GeneralizedWindow, gaussian_window, stft, stft_generalized,
                   p_delta, p0_norm_squared)
