"""Hierarchical topological sorts and local edge discovery for additive noise models."""

from .ed import EdConfig, EdTrace, ed_hierarchical, ed_linear, ed_oracle_verdict
from .errors import CausalHTSError, DegenerateDataError, NumericalError, ParameterError, StructureError
from .graph import (
    Dag,
    EdgeScores,
    HierarchicalOrder,
    LinearOrder,
    ParentSets,
    a_top,
    d_separated,
    edge_f1,
    erdos_renyi_dag,
    linearize,
    relatives,
    true_hierarchical_order,
)
from .lhts import ApRelation, Ars, ancestor_sort, lhts, lhts_stage1, lhts_stage2, lhts_stage3
from .nhts import Prs, SortTrace, build_pij, nhts, nhts_stage1, nhts_stage2, nhts_stage3, nhts_stage4
from .stats import (
    KernelSpec,
    TestConfig,
    TestResult,
    conditional_independent,
    krr_residuals,
    marginal_independent,
    ols_residuals,
)
from .synth import Dataset, Mechanism, Noise, ScmConfig, sample_linear, sample_quadratic, standardize

__version__ = "0.1.0"
