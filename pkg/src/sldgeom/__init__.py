"""SLD information geometry on finite-dimensional quantum state spaces."""

__version__ = "0.1.0"

from .operators import (  # noqa: E402
    DensityOperator,
    OperatorSubspace,
    expectation,
    sld_inner,
    solve_sld,
    subspace_membership,
    sym_product,
    tensor_power_operator,
)
from .manifold import (  # noqa: E402
    FisherMatrix,
    ParametricModel,
    TangentVector,
    e_covariant_derivative,
    e_geodesic,
    e_transport,
    fisher_matrix,
    iid_extension,
    m_transport,
    tangent_basis,
    torsion,
)
