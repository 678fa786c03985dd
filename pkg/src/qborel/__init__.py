"""q-Borel-Laplace summation of formal solutions of linear q-difference equations."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .errors import *  # noqa: F401,F403
from .laplace import (
    BorelLaplaceSum,
    LaplaceTransform,
    SpiralFunction,
    asymptotic_check,
    borel_sum_pipeline,
    h_membership,
    pole_scan,
    q_laplace_eval,
    residual_check,
)
from .operators import (
    QDiffOperator,
    apply_operator,
    borel_conjugate,
    newton_polygon,
    parse_operator,
    summation_plan,
)
from .scalars import QExpScalar, QValue
from .series import FormalSeries, formal_q_laplace, q_borel, solve_formal
from .systems import (
    BlockSpec,
    JordanData,
    e_block_eval,
    formal_gauge_solver,
    fundamental_solution,
    gauge_transform_eval,
    lambda_C_eval,
    sylvester_spectrum,
    two_slope_gauge,
)
from .theta import comparison_constant, lq_eval, theta_eval, theta_log
