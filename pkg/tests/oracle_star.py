"""Independent reference model of the two-base sharing TLB.

Written separately from the package as a flat dict-state transcription of
the lookup/insert procedures, table-driven where the package computes.  The
equivalence test drives both on the same operation stream and compares full
state digests after every operation; any drift in layout choice, slot
mapping, recency bookkeeping, transition, revert or eviction order shows up
as a digest mismatch at the first divergent op.

Conventions mirrored here (and nowhere else, so disagreement means a bug):
sequential=01 keeps low sub bits as the in-lane position, stride=10 keeps
high bits; lookups touch the entry then the slot, inserts fill the slot then
touch the entry; a singleton occupancy counts as a gap-free run; the lane
with all eight slots valid reverts on the next fill for that base; remap
collisions keep the more recently touched translation.
"""

SEQ = "seq"
STR = "stride"

# (strategy, ordinal) -> lane slot list; local index positions within it
_LANES = {}
for _o in range(2):
    _LANES[(SEQ, _o)] = list(range(_o * 8, _o * 8 + 8))
    _LANES[(STR, _o)] = list(range(_o, 16, 2))

# (strategy, ordinal, sub) -> (phys, aib), built by quotient/remainder
PHYS = {}
for _o in range(2):
    for _sub in range(16):
        PHYS[(SEQ, _o, _sub)] = (_LANES[(SEQ, _o)][_sub % 8], _sub // 8)
        PHYS[(STR, _o, _sub)] = (_LANES[(STR, _o)][_sub // 2], _sub % 2)

# (strategy, ordinal, phys) -> local
LOCAL = {(strat, o, phys): local
         for (strat, o), lane in _LANES.items()
         for local, phys in enumerate(lane)}

# (strategy, local, aib) -> sub, inverse of PHYS restricted to ordinal 0
SUB_OF = {}
for (_strat, _o, _sub), (_phys, _aib) in PHYS.items():
    if _o == 0:
        SUB_OF[(_strat, LOCAL[(_strat, 0, _phys)], _aib)] = _sub


def new_state(sets, ways):
    return {
        "sets": [[_new_entry() for _ in range(ways)] for _ in range(sets)],
        "seq": 0,
        "samples": [],
    }


def _new_entry():
    return {
        "bases": [_new_base(), _new_base()],
        "degree": 1,
        "strategy": None,
        "slots": [_new_slot() for _ in range(16)],
        "lru": 0,
    }


def _new_base():
    return {"valid": False, "vpb": 0, "pid": 0, "last": 0}


def _new_slot():
    return {"valid": False, "pfn": 0, "aib": 0, "touch": 0}


def _bump(st):
    st["seq"] += 1
    return st["seq"]


def _find(entries, vpb, pid):
    for entry in entries:
        if not entry["bases"][0]["valid"]:
            continue
        for o in range(entry["degree"]):
            b = entry["bases"][o]
            if b["valid"] and b["vpb"] == vpb and b["pid"] == pid:
                return entry, o
    return None


def _touch_entry(st, entry, o, tick):
    entry["lru"] = _bump(st)
    entry["bases"][o]["last"] = tick


def o_lookup(st, set_i, vpb, sub, pid, tick):
    """Returns (kind, latency_multiplier, pfn-or-None)."""
    entries = st["sets"][set_i]
    hit = _find(entries, vpb, pid)
    if hit is None:
        return ("miss_no_entry", 1, None)
    entry, o = hit
    mult = o + 1
    _touch_entry(st, entry, o, tick)
    if entry["degree"] == 1:
        slot = entry["slots"][sub]
        if slot["valid"]:
            slot["touch"] = _bump(st)
            return ("hit", mult, slot["pfn"])
        return ("miss_sub_entry", mult, None)
    phys, aib = PHYS[(entry["strategy"], o, sub)]
    slot = entry["slots"][phys]
    if slot["valid"] and slot["aib"] == aib:
        slot["touch"] = _bump(st)
        return ("hit", mult, slot["pfn"])
    return ("miss_aib", mult, None)


def o_insert(st, set_i, vpb, sub, pid, pfn, tick):
    entries = st["sets"][set_i]
    hit = _find(entries, vpb, pid)
    if hit is not None:
        entry, o = hit
        if entry["degree"] == 1:
            _fill(st, entry, sub, pfn, 0)
            _touch_entry(st, entry, 0, tick)
            return
        lane = _LANES[(entry["strategy"], o)]
        if all(entry["slots"][p]["valid"] for p in lane):
            _revert(st, entry, o, tick)
            _fill(st, entry, sub, pfn, 0)
            _touch_entry(st, entry, 0, tick)
            return
        phys, aib = PHYS[(entry["strategy"], o, sub)]
        _fill(st, entry, phys, pfn, aib)
        _touch_entry(st, entry, o, tick)
        return

    for entry in entries:
        if not entry["bases"][0]["valid"]:
            _take_over(st, entry, vpb, pid, sub, pfn, tick)
            return

    target = _share_target(entries, pid)
    if target is not None:
        _transition(st, target, vpb, pid, tick)
        _place_joiner(st, target, sub, pfn, tick)
        return

    victim = entries[0]
    for entry in entries[1:]:
        if entry["lru"] < victim["lru"]:
            victim = entry
    used = sum(1 for s in victim["slots"] if s["valid"])
    st["samples"].append((victim["bases"][0]["pid"], used, 16,
                          victim["degree"] > 1, tick))
    _take_over(st, victim, vpb, pid, sub, pfn, tick)


def _fill(st, entry, phys, pfn, aib):
    slot = entry["slots"][phys]
    slot["valid"] = True
    slot["pfn"] = pfn
    slot["aib"] = aib
    slot["touch"] = _bump(st)


def _take_over(st, entry, vpb, pid, sub, pfn, tick):
    for b in entry["bases"]:
        b["valid"] = False
    entry["bases"][0] = {"valid": True, "vpb": vpb, "pid": pid, "last": 0}
    entry["degree"] = 1
    entry["strategy"] = None
    for slot in entry["slots"]:
        slot["valid"] = False
        slot["aib"] = 0
    _fill(st, entry, sub, pfn, 0)
    _touch_entry(st, entry, 0, tick)


def _share_target(entries, pid):
    pool = []
    for way, entry in enumerate(entries):
        if entry["degree"] != 1:
            continue
        used = sum(1 for s in entry["slots"] if s["valid"])
        if used < 8:
            pool.append((way, used, entry["bases"][0]["pid"] == pid))
    if not pool:
        return None
    mine = [p for p in pool if p[2]]
    if mine:
        pool = mine
    best = min(pool, key=lambda p: (p[1], p[0]))
    return entries[best[0]]


def _transition(st, entry, vpb, pid, tick):
    occupied = [s for s in range(16) if entry["slots"][s]["valid"]]
    lo, hi = min(occupied), max(occupied)
    strategy = SEQ if hi - lo + 1 == len(occupied) else STR
    saved = [(s, entry["slots"][s]["pfn"], entry["slots"][s]["touch"])
             for s in occupied]
    for slot in entry["slots"]:
        slot["valid"] = False
        slot["aib"] = 0
    entry["degree"] = 2
    entry["strategy"] = strategy
    for sub, pfn, touch in saved:
        phys, aib = PHYS[(strategy, 0, sub)]
        slot = entry["slots"][phys]
        if slot["valid"] and touch <= slot["touch"]:
            continue
        slot["valid"] = True
        slot["pfn"] = pfn
        slot["aib"] = aib
        slot["touch"] = touch
    entry["bases"][1] = {"valid": True, "vpb": vpb, "pid": pid, "last": tick}


def _place_joiner(st, entry, sub, pfn, tick):
    phys, aib = PHYS[(entry["strategy"], 1, sub)]
    slot = entry["slots"][phys]
    if slot["valid"]:
        local = LOCAL[(entry["strategy"], 1, phys)]
        alt = _LANES[(entry["strategy"], 0)][local]
        if not entry["slots"][alt]["valid"]:
            entry["slots"][alt] = dict(slot)
        slot["valid"] = False
    _fill(st, entry, phys, pfn, aib)
    _touch_entry(st, entry, 1, tick)


def _revert(st, entry, survivor, tick):
    strategy = entry["strategy"]
    gone = 1 - survivor
    lane = _LANES[(strategy, gone)]
    used = sum(1 for p in lane if entry["slots"][p]["valid"])
    if used >= 1:
        st["samples"].append((entry["bases"][gone]["pid"], used, 8,
                              True, tick))
    kept = []
    for p in _LANES[(strategy, survivor)]:
        slot = entry["slots"][p]
        if slot["valid"]:
            local = LOCAL[(strategy, survivor, p)]
            kept.append((SUB_OF[(strategy, local, slot["aib"])],
                         slot["pfn"], slot["touch"]))
    for slot in entry["slots"]:
        slot["valid"] = False
        slot["aib"] = 0
    keeper = entry["bases"][survivor]
    entry["bases"][0] = dict(keeper)
    entry["bases"][1] = _new_base()
    entry["degree"] = 1
    entry["strategy"] = None
    for sub, pfn, touch in kept:
        slot = entry["slots"][sub]
        slot["valid"] = True
        slot["pfn"] = pfn
        slot["aib"] = 0
        slot["touch"] = touch


def digest(st):
    """Canonical nested tuple of the whole array, recency counters included.

    Invalid bases and slots are masked to zeros: their leftover fields are
    unobservable and the two implementations scrub them differently.
    """
    strategy_code = {None: 0, SEQ: 1, STR: 2}
    out = []
    for entries in st["sets"]:
        row = []
        for e in entries:
            row.append((
                e["degree"], strategy_code[e["strategy"]], e["lru"],
                tuple((True, b["vpb"], b["pid"], b["last"]) if b["valid"]
                      else (False, 0, 0, 0) for b in e["bases"]),
                tuple((True, s["pfn"], s["aib"], s["touch"]) if s["valid"]
                      else (False, 0, 0, 0) for s in e["slots"]),
            ))
        out.append(tuple(row))
    return tuple(out)
