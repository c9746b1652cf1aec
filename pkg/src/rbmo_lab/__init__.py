"""Regular BMO norms, Calderon-Zygmund operators and T1 checks on finite
atomic measures."""

__version__ = "0.1.0"

from .errors import RbmoLabError  # noqa: E402
from .measure import (  # noqa: E402
    AtomicMeasure, CantorFourCorner, Explicit, TwoScale, UniformGrid,
    build_measure, mu_cube, ndim_constant,
)
from .geometry import (  # noqa: E402
    Cube, CubeFamily, DoublingParams, dilate, enumerate_cubes, is_doubling,
    k_cap, k_coefficient, smallest_doubling_dilate,
)
from .rbmo import (  # noqa: E402
    NormEstimate, average, direct_norms, feasibility_norm, jn_profile,
    lp_oscillation, oscillation, sublevel_interval,
)
from .czo import (  # noqa: E402
    Kernel, apply_truncated, builtin_kernel, kernel_condition_report,
    l2_opnorm, t_one,
)
from .verify import (  # noqa: E402
    b_constants, boundedness_report, decompose, lemma23_report,
    lemma23k_report, t1_report,
)
