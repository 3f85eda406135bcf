"""zonekit: price-zone design for electricity networks.

Builds zonal divisions of a transmission grid by two competing methods,
consensus clustering of locational marginal prices under variable wind
and sequential splitting by reference-independent power transfer
distribution factors, and ranks every candidate division by the
scenario-averaged total cost of supplying energy.
"""

from .clustering import (
    CoAssociationMatrix,
    Partition,
    co_association,
    consensus_cluster,
    partition_to_dot,
    validate_partition,
    ward_connectivity_cluster,
)
from .config import DEFAULT_TOLERANCES, Tolerances
from .grid import (
    Branch,
    Bus,
    CaseParseError,
    Generator,
    Network,
    NetworkValidationError,
    UNLIMITED,
    incidence_matrix,
    load_case,
    network_to_dict,
    network_to_json,
    parse_case_file,
    validate,
)
from .opf import DispatchSolution, OpfError, congested_lines, dc_opf, uniform_price
from .pipeline import (
    CONGESTION_CONTRIBUTION,
    LMP_CONSENSUS,
    Diagnostics,
    MethodComparison,
    MethodResult,
    compare_methods,
    congestion_frequency,
    lmp_pipeline,
    sequential_partition,
)
from .ptdf import (
    DegenerateSplitError,
    GeneralizedPtdf,
    PtdfMatrix,
    flows_from_injections,
    generalized_ptdf,
    injections_from_dispatch,
    ptdf_matrix,
    sign_bipartition,
)
from .scenarios import (
    ConfigError,
    InadequateCapacityError,
    ScenarioFormatError,
    ScenarioSet,
    WindParams,
    WindScenario,
    apply_scenario,
    load_scenarios_csv,
    monte_carlo_scenarios,
    write_scenarios_csv,
)
from .welfare import (
    AveragedCost,
    CostBreakdown,
    DivisionEvaluator,
    PartitionInfeasibleError,
    UnservableScenarioError,
    WelfareError,
    WelfareReport,
    evaluate_divisions,
    uniform_market_cost,
    zonal_market_cost,
)

__version__ = "0.1.0"
