"""Retinal vessel morphometry and lipidome association toolkit."""

from .cohort import MergedCohort, merge_cohort, parse_fundus_csv, parse_lipid_csv, summarize
from .morphometry import (
    FEATURE_NAMES,
    MorphometricFeatureSet,
    MorphometryConfig,
    SegmentationMask,
    average_bilateral,
    extract_features,
)
from .pipeline import (
    PlantedEffectSpec,
    build_network,
    lipid_retina_sweep,
    profile_demographics,
    simulate_cohort,
    top_associations,
)
from .stats import bh_fdr, fisher_ci, partial_correlation, pearson

__version__ = "0.1.0"
