"""Trace-driven simulator of multi-tenant GPU address translation with a
shared sub-entry TLB and dynamic entry sharing."""

from .addrs import DecomposedAddress, PageConfig, RequestIdentity, TlbGeometry, decompose
from .config import ExperimentConfig, load_config, mix_config, run_experiment
from .hierarchy import InstanceConfig, TranslationPipeline, TranslationRequest
from .metrics import EvictionSample, RunReport
from .star import StarTlb
from .tlbcore import LookupKind, SubEntryTlb
from .variants import Star4Tlb, StaticPartitionTlb, VariantConfig, VariantKind, build_l3
from .workloads import PatternKind, PatternSpec, TenantSpec, standard_mixes

__version__ = "0.1.0"

__all__ = [
    "DecomposedAddress", "PageConfig", "RequestIdentity", "TlbGeometry",
    "decompose", "ExperimentConfig", "load_config", "mix_config",
    "run_experiment", "InstanceConfig", "TranslationPipeline",
    "TranslationRequest", "EvictionSample", "RunReport", "StarTlb",
    "LookupKind", "SubEntryTlb", "Star4Tlb", "StaticPartitionTlb",
    "VariantConfig", "VariantKind", "build_l3", "PatternKind", "PatternSpec",
    "TenantSpec", "standard_mixes",
]
