"""Experiment configuration and the one-call experiment runner.

A run is described by a YAML document (or the equivalent dict):

    seed: 7
    policy:
      kind: star2              # baseline | star2 | star4 | halfsub-double-set
                               # | halfsub-double-way-seq | halfsub-double-way-para
                               # | static-baseline | star2-static
    geometry:                  # the shared level, before variant reshaping
      sets: 128
      ways: 8
    hierarchy:
      l2_sets: 16
      walkers_per_gpc: 8
    schedule:
      mode: rerun-until-longest   # or interleave
      rates: [1, 1, 1]            # optional, per tenant below
    tenants:
      - pid: 1
        g_units: 3
        instructions_per_access: 5.0
        pattern: {kind: stride, footprint_pages: 4096,
                  accesses: 8192, stride_pages: 16}

Unknown keys are rejected anywhere in the document; a config that parses is
a config whose every key did something.  Tenant slice sizes (g_units) must
fit the seven-unit budget of one physical device.
"""

from __future__ import annotations

from dataclasses import dataclass

import yaml

from .addrs import PageConfig, TlbGeometry
from .hierarchy import (DEFAULT_L1_ENTRIES, DEFAULT_L1_LATENCY,
                        DEFAULT_L1_WAYS, DEFAULT_L2_GEOMETRY,
                        DEFAULT_L3_GEOMETRY, DEFAULT_MSHR_CAPACITY,
                        DEFAULT_WALK_CACHE_ENTRIES, DEFAULT_WALK_LEVELS,
                        DEFAULT_WALK_LEVEL_LATENCY, DEFAULT_WALKERS_PER_GPC,
                        InstanceConfig, TranslationPipeline,
                        TranslationRequest)
from .metrics import (RunReport, bits_per_entry, distance_cdf,
                      latency_summary, mpki, reuse_distance_stream,
                      utilization_stats)
from .variants import VariantConfig, VariantKind, build_l3, make_geometry
from .workloads import (PatternKind, PatternSpec, TenantSpec, TraceRecord,
                        generate, interleave, rerun_until_longest,
                        standard_mixes)

G_UNIT_BUDGET = 7

SCHEDULE_MODES = ("rerun-until-longest", "interleave")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HierarchyConfig:
    l1_entries: int = DEFAULT_L1_ENTRIES
    l1_ways: int = DEFAULT_L1_WAYS
    l1_latency_cycles: int = DEFAULT_L1_LATENCY
    l2_sets: int = DEFAULT_L2_GEOMETRY.sets
    l2_ways: int = DEFAULT_L2_GEOMETRY.ways
    l2_latency_cycles: int = DEFAULT_L2_GEOMETRY.lookup_latency_cycles
    l1_mshr_capacity: int = DEFAULT_MSHR_CAPACITY
    l2_mshr_capacity: int = DEFAULT_MSHR_CAPACITY
    walkers_per_gpc: int = DEFAULT_WALKERS_PER_GPC
    walk_cache_entries: int = DEFAULT_WALK_CACHE_ENTRIES
    walk_levels: int = DEFAULT_WALK_LEVELS
    walk_level_latency_cycles: int = DEFAULT_WALK_LEVEL_LATENCY


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    policy: VariantConfig
    tenants: tuple[TenantSpec, ...]
    geometry: TlbGeometry = DEFAULT_L3_GEOMETRY
    page: PageConfig = PageConfig()
    hierarchy: HierarchyConfig = HierarchyConfig()
    schedule_mode: str = "rerun-until-longest"
    rates: tuple[int, ...] | None = None

    def describe(self) -> dict:
        """Plain-dict rendering for embedding in reports; fully determines
        the run together with the code version."""
        return {
            "seed": self.seed,
            "policy": {
                "kind": self.policy.kind.value,
                "enable_tier4": self.policy.enable_tier4,
                "sharing_enabled": self.policy.sharing_enabled,
            },
            "geometry": {
                "sets": self.geometry.sets,
                "ways": self.geometry.ways,
                "subentries_per_entry": self.geometry.subentries_per_entry,
                "lookup_latency_cycles": self.geometry.lookup_latency_cycles,
            },
            "page_size_kib": self.page.page_size_bytes // 1024,
            "hierarchy": {k: getattr(self.hierarchy, k)
                          for k in HierarchyConfig.__dataclass_fields__},
            "schedule": {
                "mode": self.schedule_mode,
                "rates": list(self.rates) if self.rates else None,
            },
            "tenants": [
                {
                    "pid": t.pid,
                    "g_units": t.g_units,
                    "instance_id": t.instance,
                    "mpki_class": t.mpki_class,
                    "instructions_per_access": t.instructions_per_access,
                    "pattern": {
                        "kind": t.pattern.kind.value,
                        "footprint_pages": t.pattern.footprint_pages,
                        "accesses": t.pattern.accesses,
                        "intensity": t.pattern.intensity,
                        "stride_pages": t.pattern.stride_pages,
                        "block_pages": t.pattern.block_pages,
                    },
                }
                for t in self.tenants
            ],
        }


# ----------------------------------------------------------------------
# parsing

def _take(mapping, context: str, **fields):
    """Pull typed fields out of a dict, rejecting anything unrecognized.

    fields maps key -> (type(s), default); default=... marks required.
    """
    if not isinstance(mapping, dict):
        raise ConfigError(f"{context}: expected a mapping, got "
                          f"{type(mapping).__name__}")
    unknown = set(mapping) - set(fields)
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    out = {}
    for key, (types, default) in fields.items():
        if key not in mapping:
            if default is ...:
                raise ConfigError(f"{context}: missing required key {key!r}")
            out[key] = default
            continue
        value = mapping[key]
        # bool is an int subclass; demand exact intent
        if not isinstance(value, types) or (isinstance(value, bool)
                                            and bool not in _astuple(types)):
            raise ConfigError(
                f"{context}.{key}: expected {_typename(types)}, "
                f"got {type(value).__name__}")
        out[key] = value
    return out


def _astuple(types):
    return types if isinstance(types, tuple) else (types,)


def _typename(types) -> str:
    return "/".join(t.__name__ for t in _astuple(types))


def _parse_pattern(data, context: str) -> PatternSpec:
    f = _take(data, context,
              kind=(str, ...),
              footprint_pages=(int, ...),
              accesses=(int, ...),
              intensity=((int, float), 1.0),
              stride_pages=(int, None),
              block_pages=(int, None),
              blocks=(int, None))
    try:
        kind = PatternKind(f["kind"])
    except ValueError:
        raise ConfigError(
            f"{context}.kind: {f['kind']!r} is not one of "
            f"{[k.value for k in PatternKind]}") from None
    try:
        return PatternSpec(kind, f["footprint_pages"], f["accesses"],
                           intensity=float(f["intensity"]),
                           stride_pages=f["stride_pages"],
                           block_pages=f["block_pages"], blocks=f["blocks"])
    except AssertionError as exc:
        raise ConfigError(f"{context}: {exc}") from None


def _parse_tenant(data, context: str) -> TenantSpec:
    f = _take(data, context,
              pid=(int, ...),
              g_units=(int, ...),
              pattern=(dict, ...),
              mpki_class=(str, "M"),
              instructions_per_access=((int, float), 10.0),
              instance_id=(int, None))
    pattern = _parse_pattern(f["pattern"], f"{context}.pattern")
    try:
        return TenantSpec(f["pid"], f["g_units"], pattern,
                          mpki_class=f["mpki_class"],
                          instructions_per_access=float(
                              f["instructions_per_access"]),
                          instance_id=f["instance_id"])
    except AssertionError as exc:
        raise ConfigError(f"{context}: {exc}") from None


def _parse_policy(data) -> VariantConfig:
    f = _take(data, "policy",
              kind=(str, ...),
              enable_tier4=(bool, True),
              sharing_enabled=(bool, True))
    try:
        kind = VariantKind(f["kind"])
    except ValueError:
        raise ConfigError(
            f"policy.kind: {f['kind']!r} is not one of "
            f"{[k.value for k in VariantKind]}") from None
    return VariantConfig(kind, enable_tier4=f["enable_tier4"],
                         sharing_enabled=f["sharing_enabled"])


def _parse_geometry(data) -> TlbGeometry:
    f = _take(data, "geometry",
              sets=(int, DEFAULT_L3_GEOMETRY.sets),
              ways=(int, DEFAULT_L3_GEOMETRY.ways),
              subentries_per_entry=(int,
                                    DEFAULT_L3_GEOMETRY.subentries_per_entry),
              lookup_latency_cycles=(int,
                                     DEFAULT_L3_GEOMETRY.lookup_latency_cycles))
    try:
        return TlbGeometry(f["sets"], f["ways"], f["subentries_per_entry"],
                           f["lookup_latency_cycles"])
    except AssertionError as exc:
        raise ConfigError(f"geometry: {exc}") from None


def _parse_hierarchy(data) -> HierarchyConfig:
    defaults = HierarchyConfig()
    f = _take(data, "hierarchy",
              **{name: (int, getattr(defaults, name))
                 for name in HierarchyConfig.__dataclass_fields__})
    return HierarchyConfig(**f)


def parse_config(data: dict) -> ExperimentConfig:
    f = _take(data, "config",
              seed=(int, 0),
              policy=(dict, ...),
              geometry=(dict, None),
              page_size_kib=(int, 64),
              hierarchy=(dict, None),
              schedule=(dict, None),
              tenants=(list, ...))
    policy = _parse_policy(f["policy"])
    geometry = (_parse_geometry(f["geometry"]) if f["geometry"] is not None
                else DEFAULT_L3_GEOMETRY)
    hierarchy = (_parse_hierarchy(f["hierarchy"]) if f["hierarchy"] is not None
                 else HierarchyConfig())
    page = PageConfig(page_size_bytes=f["page_size_kib"] * 1024)

    if not f["tenants"]:
        raise ConfigError("tenants: at least one tenant required")
    tenants = tuple(_parse_tenant(t, f"tenants[{i}]")
                    for i, t in enumerate(f["tenants"]))

    mode, rates = "rerun-until-longest", None
    if f["schedule"] is not None:
        s = _take(f["schedule"], "schedule",
                  mode=(str, "rerun-until-longest"),
                  rates=(list, None))
        mode = s["mode"]
        if mode not in SCHEDULE_MODES:
            raise ConfigError(f"schedule.mode: {mode!r} is not one of "
                              f"{list(SCHEDULE_MODES)}")
        if s["rates"] is not None:
            if (len(s["rates"]) != len(tenants)
                    or not all(isinstance(r, int) and not isinstance(r, bool)
                               and r >= 1 for r in s["rates"])):
                raise ConfigError(
                    "schedule.rates: need one positive int per tenant")
            rates = tuple(s["rates"])

    cfg = ExperimentConfig(seed=f["seed"], policy=policy, tenants=tenants,
                           geometry=geometry, page=page, hierarchy=hierarchy,
                           schedule_mode=mode, rates=rates)
    validate_tenancy(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config document must be a mapping")
    return parse_config(data)


def validate_tenancy(cfg: ExperimentConfig):
    """Cross-tenant rules: unique pids, one instance per pid, consistent
    per-instance slice sizes, total slices within the device budget."""
    pids = [t.pid for t in cfg.tenants]
    if len(set(pids)) != len(pids):
        raise ConfigError(f"tenants: duplicate pids in {pids}")
    instance_g: dict[int, int] = {}
    for t in cfg.tenants:
        prev = instance_g.get(t.instance)
        if prev is None:
            instance_g[t.instance] = t.g_units
        elif prev != t.g_units:
            raise ConfigError(
                f"tenants: instance {t.instance} declared with g_units "
                f"{prev} and {t.g_units}")
    total = sum(instance_g.values())
    if total > G_UNIT_BUDGET:
        raise ConfigError(
            f"tenants: {total} g_units exceed the device budget of "
            f"{G_UNIT_BUDGET}")


def instance_g_units(cfg: ExperimentConfig) -> dict[int, int]:
    return {t.instance: t.g_units for t in cfg.tenants}


# ----------------------------------------------------------------------
# running

def build_schedule(cfg: ExperimentConfig) -> list[TraceRecord]:
    traces = [generate(t, cfg.seed) for t in cfg.tenants]
    rates = list(cfg.rates) if cfg.rates else None
    if cfg.schedule_mode == "interleave":
        return interleave(traces, rates)
    return rerun_until_longest(traces, rates)


def build_pipeline(cfg: ExperimentConfig) -> TranslationPipeline:
    g_map = instance_g_units(cfg)
    l3 = build_l3(cfg.policy, cfg.geometry, cfg.page, instance_g_units=g_map)
    h = cfg.hierarchy
    instances = [InstanceConfig(iid, g) for iid, g in sorted(g_map.items())]
    l2_geom = TlbGeometry(h.l2_sets, h.l2_ways,
                          DEFAULT_L2_GEOMETRY.subentries_per_entry,
                          h.l2_latency_cycles)
    return TranslationPipeline(
        instances, l3, page=cfg.page,
        l1_entries=h.l1_entries, l1_ways=h.l1_ways,
        l1_latency=h.l1_latency_cycles, l2_geom=l2_geom,
        l1_mshr_capacity=h.l1_mshr_capacity,
        l2_mshr_capacity=h.l2_mshr_capacity,
        walkers_per_gpc=h.walkers_per_gpc,
        walk_cache_entries=h.walk_cache_entries,
        walk_levels=h.walk_levels,
        walk_level_latency=h.walk_level_latency_cycles)


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    pipeline = build_pipeline(cfg)
    pipeline.simulate(
        TranslationRequest(r.tick, r.instance_id, r.pid, r.vaddr,
                           r.weight_instructions, r.measured)
        for r in build_schedule(cfg))
    return assemble_report(cfg, pipeline)


def _rate(hits: int, probes: int) -> float:
    return hits / probes if probes else 0.0


def assemble_report(cfg: ExperimentConfig, pipeline: TranslationPipeline
                    ) -> RunReport:
    """Reduce a drained pipeline to the serializable run report."""
    events = [(pid, page) for pid, page, _ in pipeline.l3_probe_stream]
    measured = [m for _, _, m in pipeline.l3_probe_stream]
    reuse_pages = reuse_distance_stream(events, measured)
    reuse_regions = reuse_distance_stream(events, measured,
                                          group_pages=cfg.page.region_pages)
    samples = pipeline.masked_eviction_samples()

    per_pid = {}
    totals_latencies: list[int] = []
    for pid in sorted(pipeline.tallies):
        t = pipeline.tallies[pid]
        if not t.issued:
            continue
        misses = t.l3_miss_no_entry + t.l3_miss_sub_entry + t.l3_miss_aib
        mpki_value, mpki_class = mpki(misses, t.instructions)
        pid_samples = [s for s in samples if s.pid == pid]
        util = utilization_stats(pid_samples)
        per_pid[pid] = {
            "accesses": t.issued,
            "instructions": t.instructions,
            "l1_probes": t.l1_probes, "l1_hits": t.l1_hits,
            "l1_hit_rate": _rate(t.l1_hits, t.l1_probes),
            "l2_probes": t.l2_probes, "l2_hits": t.l2_hits,
            "l2_hit_rate": _rate(t.l2_hits, t.l2_probes),
            "l3_probes": t.l3_probes, "l3_hits": t.l3_hits,
            "l3_hit_rate": _rate(t.l3_hits, t.l3_probes),
            "l3_miss_no_entry": t.l3_miss_no_entry,
            "l3_miss_sub_entry": t.l3_miss_sub_entry,
            "l3_miss_aib": t.l3_miss_aib,
            "l3_misses": misses,
            "walks": t.walks,
            "mpki": mpki_value,
            "mpki_class": mpki_class,
            "latency": latency_summary(t.latencies),
            "reuse_cdf_pages": [[d, f] for d, f in distance_cdf(
                [e.distance for e in reuse_pages if e.pid == pid])],
            "reuse_cdf_regions": [[d, f] for d, f in distance_cdf(
                [e.distance for e in reuse_regions if e.pid == pid])],
            "evict_samples": util.count,
            "evict_util_mean": util.mean,
            "evict_util_cdf": [[k, f] for k, f in enumerate(util.cdf)],
        }
        totals_latencies.extend(t.latencies)

    def total(key: str):
        return sum(m[key] for m in per_pid.values())

    util_all = utilization_stats(samples)
    geom = make_geometry(cfg.policy.kind, cfg.geometry)
    bits = bits_per_entry(cfg.policy.kind.value, geom.subentries_per_entry)
    total_misses = total("l3_misses")
    total_instructions = total("instructions")
    mpki_value, mpki_class = mpki(total_misses, total_instructions)
    totals = {
        "accesses": total("accesses"),
        "instructions": total_instructions,
        "l1_hit_rate": _rate(total("l1_hits"), total("l1_probes")),
        "l2_hit_rate": _rate(total("l2_hits"), total("l2_probes")),
        "l3_probes": total("l3_probes"),
        "l3_hits": total("l3_hits"),
        "l3_hit_rate": _rate(total("l3_hits"), total("l3_probes")),
        "l3_misses": total_misses,
        "walks": total("walks"),
        "mpki": mpki_value,
        "mpki_class": mpki_class,
        "latency": latency_summary(totals_latencies),
        "reuse_cdf_pages": [[d, f] for d, f in distance_cdf(
            [e.distance for e in reuse_pages])],
        "reuse_cdf_regions": [[d, f] for d, f in distance_cdf(
            [e.distance for e in reuse_regions])],
        "evict_samples": util_all.count,
        "evict_util_mean": util_all.mean,
        "evict_util_cdf": [[k, f] for k, f in enumerate(util_all.cdf)],
        "bits_per_entry": bits,
        "entries": geom.entries,
        "total_bits": bits * geom.entries,
        "l3_stats": pipeline.l3.stats.as_dict(),
        "conservation": pipeline.conservation_check(),
        "mshr_l1_stalls": sum(m.stalls for m in pipeline.l1_mshr.values()),
        "mshr_l2_stalls": sum(m.stalls for m in pipeline.l2_mshr.values()),
        "mshr_l1_coalesced": sum(m.coalesced
                                 for m in pipeline.l1_mshr.values()),
        "mshr_l2_coalesced": sum(m.coalesced
                                 for m in pipeline.l2_mshr.values()),
        "walk_cache_hits": pipeline.gmmu.walk_cache_hits,
        "max_walk_queue_depth": pipeline.gmmu.max_queue_depth,
    }
    return RunReport(seed=cfg.seed, policy=cfg.policy.kind.value,
                     config=cfg.describe(), per_pid=per_pid, totals=totals)


def mix_config(mix: str, policy: VariantKind | str, seed: int, *,
               reach_pages: int = 1024,
               geometry: TlbGeometry | None = None,
               hierarchy: HierarchyConfig | None = None,
               enable_tier4: bool = True,
               sharing_enabled: bool = True) -> ExperimentConfig:
    """Canned multi-tenant experiment: a standard mix against one policy.

    The default geometry is scaled so the named reach is exactly the shared
    level's reach, keeping mixes meaningful at desk scale.
    """
    mixes = standard_mixes(reach_pages)
    if mix not in mixes:
        raise ConfigError(f"unknown mix {mix!r}; have {sorted(mixes)}")
    if isinstance(policy, str):
        policy = VariantKind(policy)
    if geometry is None:
        subs = DEFAULT_L3_GEOMETRY.subentries_per_entry
        ways = DEFAULT_L3_GEOMETRY.ways
        sets = reach_pages // (ways * subs)
        geometry = TlbGeometry(sets, ways, subs,
                               DEFAULT_L3_GEOMETRY.lookup_latency_cycles)
    if hierarchy is None:
        # shrink the private levels hard: a desk-scale shared level is
        # smaller than the default per-instance L2, which would otherwise
        # absorb every tenant that matters
        hierarchy = HierarchyConfig(l2_sets=1, l2_ways=2)
    cfg = ExperimentConfig(
        seed=seed,
        policy=VariantConfig(policy, enable_tier4=enable_tier4,
                             sharing_enabled=sharing_enabled),
        tenants=tuple(mixes[mix]),
        geometry=geometry, hierarchy=hierarchy)
    validate_tenancy(cfg)
    return cfg
