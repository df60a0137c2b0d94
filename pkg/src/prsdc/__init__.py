"""Adaptive split-sample polygenic signal detection with double Cauchy combination."""

from .adaptive import (
    SplitTestResult,
    TestConfig,
    TestReport,
    cauchy_combine,
    cauchy_pvalue,
    cauchy_statistic,
    cauchy_transform,
    t1_test,
    t_gamma_test,
    tc_test,
    tdc_test,
)
from .errors import (
    ConvergenceError,
    DegenerateGenotypeError,
    InputError,
    NumericalError,
    PrsdcError,
    QuadratureError,
    SeparationError,
)
from .glm import (
    GenotypeMatrix,
    GlmFamily,
    NullModelFit,
    estimate_score_covariance,
    fit_null_glm,
    marginal_fit,
    score_vector,
    standardize,
)
from .quadform import (
    QuadFormDist,
    WeightMatrixR,
    davies_pvalue,
    eigenvalues_weighted,
    imhof_pvalue,
    mc_quadform_pvalue,
    normal_approx_pvalue,
)
from .simulate import SimDesign, estimate_snr, gen_ar1_genotypes, gen_phenotype, place_signals
from .splitting import make_split_plan, screen_and_weight

__version__ = "0.1.0"
