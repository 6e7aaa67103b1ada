#!/usr/bin/env python3
"""Regenerate the reference fixtures under crates/core/fixtures.

Two families are produced, both seeded so reruns are byte-identical:

* tags/{preliminary,formal}.jsonl: one talk per line with its SDG tag set,
  built by local search until per-goal totals, the named pair counts, the
  zero pairs and the talk count hit their targets exactly.
* graphs/{preliminary,formal}.json: 17 knowledge graphs per dataset whose
  initial/final/most-connected nodes, color variety (palette 8), arrow trend
  and node/link totals reproduce the per-goal summary table.

The Rust test suites re-check every target on the emitted files, so this
script is a convenience, not a source of truth.
"""

import json
import os
import random
from itertools import combinations

ROOT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "fixtures")

# ---------------------------------------------------------------------------
# tag fixtures

TAG_TARGETS = {
    "preliminary": {
        "talks": 269,
        "diag": {1: 20, 2: 18, 3: 70, 4: 102, 5: 25, 6: 12, 7: 55, 8: 75, 9: 60,
                 10: 115, 11: 62, 12: 58, 13: 70, 14: 10, 15: 14, 16: 99, 17: 30},
        "pairs": {(10, 16): 71, (4, 10): 57, (4, 16): 47},
        "zero": [],
        "cap": 44,
        "prefix": "pre",
    },
    "formal": {
        "talks": 1127,
        "diag": {1: 90, 2: 70, 3: 353, 4: 346, 5: 147, 6: 12, 7: 107, 8: 306, 9: 250,
                 10: 521, 11: 200, 12: 230, 13: 260, 14: 51, 15: 110, 16: 427, 17: 250},
        "pairs": {(10, 16): 298, (4, 10): 199, (8, 10): 189},
        "zero": [(4, 14), (5, 7), (5, 14), (6, 8)],
        "cap": 180,
        "prefix": "frm",
    },
}


def pair_key(a, b):
    return (a, b) if a < b else (b, a)


def energy_terms(target):
    diag_t = target["diag"]
    pairs_t = target["pairs"]
    zero = set(target["zero"])
    cap = target["cap"]

    def pair_cost(p, c):
        if p in pairs_t:
            return 4 * abs(c - pairs_t[p])
        if p in zero:
            return 8 * c
        return 4 * max(0, c - cap)

    def diag_cost(g, c):
        return 4 * abs(c - diag_t[g])

    return diag_cost, pair_cost


def build_tags(name, target, seed):
    rng = random.Random(seed)
    n = target["talks"]
    goals = list(range(1, 18))
    weights = [target["diag"][g] for g in goals]
    talks = []
    for _ in range(n):
        k = rng.choice([1, 2, 3, 3, 3, 4, 4, 5, 5])
        s = set()
        while len(s) < k:
            s.add(rng.choices(goals, weights)[0])
        talks.append(s)

    diag = {g: 0 for g in goals}
    pairs = {p: 0 for p in combinations(goals, 2)}
    for s in talks:
        for g in s:
            diag[g] += 1
        for p in combinations(sorted(s), 2):
            pairs[p] += 1

    diag_cost, pair_cost = energy_terms(target)

    def total():
        return sum(diag_cost(g, c) for g, c in diag.items()) + sum(
            pair_cost(p, c) for p, c in pairs.items())

    e = total()
    temp = 2.0
    step = 0
    while e > 0:
        step += 1
        i = rng.randrange(n)
        g = rng.choice(goals)
        s = talks[i]
        adding = g not in s
        if not adding and len(s) == 1:
            continue
        if adding and len(s) >= 6:
            continue
        d = 1 if adding else -1
        delta = diag_cost(g, diag[g] + d) - diag_cost(g, diag[g])
        for h in s:
            if h == g:
                continue
            p = pair_key(g, h)
            delta += pair_cost(p, pairs[p] + d) - pair_cost(p, pairs[p])
        if delta <= 0 or rng.random() < pow(2.718281828, -delta / temp):
            if adding:
                s.add(g)
            else:
                s.discard(g)
            diag[g] += d
            for h in s:
                if h != g:
                    pairs[pair_key(g, h)] += d
            e += delta
        if step % 20000 == 0:
            temp = max(0.05, temp * 0.8)
    assert e == 0, (name, e)

    path = os.path.join(ROOT, "tags", f"{name}.jsonl")
    with open(path, "w", encoding="utf-8") as fh:
        for idx, s in enumerate(talks, start=1):
            fh.write(json.dumps({"video_id": f"{target['prefix']}-{idx:04d}",
                                 "sdg_types": sorted(s)}) + "\n")
    print(f"{path}: {n} talks, {sum(len(s) for s in talks)} tags, {step} steps")


# ---------------------------------------------------------------------------
# per-goal summary graphs

# (goal, initial, most_connected, final, color_variety, trend, tending, nodes, links)
PRELIMINARY_ROWS = [
    (1, "Eradicating Poverty", ["Eradicating Poverty", "Girls' Success and Empowerment"],
     "Ethical Implementation", 3, "outward", True, 24, 18),
    (2, "Zero Hunger", ["Zero Hunger", "Sustainable Rice Farming"],
     "Target Interventions and Humanitarian Assistance", 3, "inward", False, 16, 15),
    (3, "Goal 3: Good Health and Well-being", ["Goal 3: Good Health and Well-being"],
     "Environmental Issues", 3, "inward", False, 11, 10),
    (4, "SDG 4 - Quality Education", ["SDG 4 - Quality Education"],
     "Social-emotional learning", 3, "inward", False, 16, 15),
    (5, "SDG Goal 5", ["SDG Goal 5"], "Data and Evidence", 3, "outward", False, 16, 16),
    (6, "SDG 6: Clean Water and Sanitation", ["Sustainable Living"],
     "Decision-making Processes", 6, "outward", True, 26, 25),
    (7, "AI Impacts (kg_box)", ["AI Impacts (kg_box)"], "Explainable AI Solutions", 3,
     "outward", False, 14, 9),
    (8, "Decent Work and Economic Growth",
     ["Decent Work and Economic Growth", "Data Ownership", "Boredom", "AGI"],
     "Problem-Solving", 5, "inward", True, 30, 29),
    (9, "Goal 9", ["Goal 9"], "Inclusive Innovation Policies", 2, "inward", False, 14, 13),
    (10, "SDGs Goal 10: Reduced Inequalities", ["SDGs Goal 10: Reduced Inequalities"],
     "International Cooperation", 3, "inward", False, 22, 21),
    (11, "SDGs Goal 11: Sustainable Cities and Communities",
     ["SDGs Goal 11: Sustainable Cities and Communities"],
     "Promoting Social Equality in Urban Development", 2, "inward", False, 14, 13),
    (12, "SDGs Goal 12", ["SDGs Goal 12"], "International Cooperation", 2, "inward", False,
     14, 13),
    (13, "SDGs Goal 13: Climate Action", ["SDGs Goal 13: Climate Action"],
     "Circular Food System", 3, "outward", False, 15, 14),
    (14, "SDG 14 - Life Below Water", ["SDG 14 - Life Below Water"],
     "Regenerative Ocean Farming", 5, "inward", False, 16, 16),
    (15, "SDG 15: Life on Land", ["SDG 15: Life on Land"], "Global collaboration", 2,
     "inward", False, 20, 19),
    (16, "SDG 16 - Peace, Justice, and Strong Institutions",
     ["SDG 16 - Peace, Justice, and Strong Institutions"], "Citizen Diplomacy", 4, "inward",
     False, 17, 16),
    (17, "SDG 17 - Partnerships for the Goals",
     ["SDG 17 - Partnerships for the Goals", "Online Communities"],
     "Global Collaboration on Mechanisms", 3, "inward", True, 16, 14),
]

FORMAL_ROWS = [
    (1, "No Poverty", ["No Poverty"], "Philanthropic Organizations", 3, "inward", False, 14, 16),
    (2, "Zero Hunger", ["Zero Hunger"], "Cultural Food Traditions", 4, "outward", False, 19, 18),
    (3, "Goal 3: Good Health and Well-being", ["Goal 3: Good Health and Well-being"],
     "Stress Reduction Techniques", 4, "inward", False, 15, 14),
    (4, "SDGs Goal4: Quality Education", ["White Paper"],
     "Transparency and Accountability in AI", 5, "outward", True, 22, 21),
    (5, "SDGs Goal 5", ["Implementation Strategies"], "International Development", 3,
     "outward", False, 15, 14),
    (6, "SDG6", ["White Paper"], "Roles and Responsibilities", 4, "outward", False, 13, 7),
    (7, "Goal 7: Affordable and Clean Energy",
     ["Goal 7: Affordable and Clean Energy", "Progress Measurement"], "Global Challenges", 6,
     "outward", False, 31, 30),
    (8, "Decent Work and Economic Growth", ["Decent Work and Economic Growth"],
     "Well-being and Sustainability", 4, "inward", False, 18, 17),
    (9, "Innovation", ["Innovation", "Holistic Approach", "Ethical Imperative"],
     "Environmental Stewardship", 3, "outward", False, 17, 15),
    (10, "Equitable Access to Quality Education", ["Individual Action"],
     "Philanthropy and Impact Investing", 3, "outward", False, 12, 6),
    (11, "Sustainable Cities and Communities", ["Sustainable Cities and Communities"],
     "Global Collaboration", 3, "inward", False, 10, 9),
    (12, "SDG 12", ["SDG 12"], "Collaboration and Partnerships", 2, "outward", False, 11, 10),
    (13, "Climate Change", ["Climate Change"], "Vision", 4, "outward", False, 40, 39),
    (14, "Goal 14: Life Below Water", ["Goal 14: Life Below Water"], "Harmony with the Ocean",
     4, "outward", False, 14, 13),
    (15, "SDG 15", ["SDG 15"], "Education and Awareness", 2, "inward", False, 9, 8),
    (16, "SDG 16", ["Disinformation"], "White Paper", 6, "outward", True, 42, 29),
    (17, "Partnerships for the Goals", ["Partnerships for the Goals"],
     "Technology Serving Humanity", 7, "inward", True, 41, 37),
]

# most-connected concepts that surface late in the discussion
OUTER_HUBS = {("preliminary", 1), ("formal", 7), ("formal", 9), ("formal", 10)}

FILLER = [
    "Community Engagement", "Policy Frameworks", "Youth Leadership", "Data Transparency",
    "Local Innovation", "Public-Private Partnerships", "Capacity Building", "Social Safety Nets",
    "Access to Finance", "Digital Inclusion", "Behavioral Change", "Indigenous Knowledge",
    "Circular Economy", "Urban Resilience", "Green Jobs", "Open Science", "Civic Participation",
    "Health Equity", "Education Reform", "Renewable Microgrids", "Water Stewardship",
    "Food Sovereignty", "Biodiversity Corridors", "Ethical Technology", "Supply Chain Ethics",
    "Gender Budgeting", "Mental Health Support", "Participatory Budgeting", "Climate Adaptation",
    "Carbon Pricing", "Smallholder Farmers", "Universal Basic Services", "Accountability Mechanisms",
    "Trust Building", "Storytelling for Change", "Peer Learning Networks", "Impact Measurement",
    "Systems Thinking", "Cross-sector Collaboration", "Inclusive Design", "Frugal Innovation",
    "Community Health Workers", "Disaster Preparedness", "Knowledge Sharing Platforms",
    "Regenerative Agriculture", "Just Transition", "Media Literacy", "Human Rights Protection",
    "Grassroots Movements", "Microfinance", "Sustainable Procurement", "Waste Reduction",
    "Early Childhood Development", "Ocean Literacy", "Forest Restoration", "Affordable Housing",
    "Transport Access", "Rule of Law", "Anti-corruption Measures", "Conflict Mediation",
    "Philanthropic Funding", "Global Governance", "South-South Cooperation", "Technology Transfer",
    "Debt Relief", "Fair Trade", "Labor Rights", "Social Entrepreneurship", "Skills Training",
    "Lifelong Learning", "Teacher Support", "Sanitation Infrastructure", "Clean Cooking",
    "Energy Efficiency", "Air Quality Monitoring", "Heat Resilience", "Coastal Protection",
    "Soil Health", "Pollinator Protection", "Wildlife Trade Controls", "Legal Identity",
    "Inclusive Institutions", "Citizen Science", "Moral Imagination", "Hope and Agency",
    "Intergenerational Dialogue", "Cultural Heritage", "Art for Advocacy", "Evidence-based Policy",
    "Pilot Programs", "Scaling Solutions", "Feedback Loops", "Risk Sharing",
    "Insurance for the Poor", "Cash Transfers", "Nutrition Programs", "Vaccine Access",
    "Telemedicine", "Open Data Standards", "Algorithmic Fairness", "Privacy Protection",
    "Workplace Wellbeing", "Care Economy", "Migration Pathways", "Refugee Integration",
]

RELATIONS = ["supports", "enables", "requires", "informs", "is part of", "drives", "addresses",
             "depends on", "strengthens", "leads to", "is measured by", "inspires"]


def color_variety(degrees, palette=8):
    lo, hi = min(degrees), max(degrees)
    span = max(1, hi - lo + 1)
    return len({((d - lo) * palette) // span for d in degrees})


def erdos_gallai(seq):
    seq = sorted(seq, reverse=True)
    if sum(seq) % 2:
        return False
    n = len(seq)
    for k in range(1, n + 1):
        lhs = sum(seq[:k])
        rhs = k * (k - 1) + sum(min(d, k) for d in seq[k:])
        if lhs > rhs:
            return False
    return True


def havel_hakimi(degrees, rng):
    rem = dict(enumerate(degrees))
    edges = []
    while True:
        live = [v for v, d in rem.items() if d > 0]
        if not live:
            return edges
        v = max(live, key=lambda x: (rem[x], rng.random()))
        d = rem[v]
        rem[v] = 0
        others = sorted((u for u in live if u != v), key=lambda x: (-rem[x], rng.random()))
        if len(others) < d:
            return None
        for u in others[:d]:
            rem[u] -= 1
            edges.append((v, u))


def build_graph(dataset, row, rng, filler_pool):
    goal, initial, hubs, final, colors, trend, tending, n, m = row
    hub_set = list(dict.fromkeys(hubs))
    for attempt in range(200000):
        top = rng.randint(2, n - 1)
        others = n - len(hub_set)
        floor = 0 if 2 * m < n + top else 1
        span = list(range(floor, top))
        want = min(len(span), rng.choice([colors - 1, colors - 1, colors]))
        if want < 1:
            continue
        values = sorted(rng.sample(span, want))
        degs = [rng.choice(values) for _ in range(others)]
        diff = 2 * m - top * len(hub_set) - sum(degs)
        guard = 0
        while diff != 0 and guard < 20000:
            guard += 1
            i = rng.randrange(others)
            pos = values.index(degs[i])
            if diff > 0 and pos + 1 < len(values):
                step_ = values[pos + 1] - degs[i]
                if step_ <= diff:
                    degs[i] = values[pos + 1]
                    diff -= step_
            elif diff < 0 and pos > 0:
                step_ = degs[i] - values[pos - 1]
                if step_ <= -diff:
                    degs[i] = values[pos - 1]
                    diff += step_
        if diff != 0:
            continue
        seq = [top] * len(hub_set) + degs
        if color_variety(seq) != colors or not erdos_gallai(seq):
            continue
        # initial node must not be isolated; keep order-1 attached to the discussion
        edges = havel_hakimi(seq, rng)
        if edges is None or len(edges) != m:
            continue
        break
    else:
        raise RuntimeError(f"no graph for {dataset} goal {goal}")

    # slot 0..len(hubs)-1 are hubs, the rest are ordinary nodes
    orders = {}
    named = {}
    ordinary = list(range(len(hub_set), n))
    rng.shuffle(ordinary)
    for slot, name in enumerate(hub_set):
        named[slot] = name
    if initial in hub_set:
        orders[hub_set.index(initial)] = 1
    else:
        # an ordinary node with non-zero degree becomes the initial node
        cand = [s for s in ordinary if seq[s] > 0]
        s = cand[0]
        ordinary.remove(s)
        named[s] = initial
        orders[s] = 1
    if final in hub_set:
        raise RuntimeError("final node cannot be a hub")
    s = ordinary.pop()
    named[s] = final
    orders[s] = n
    remaining_orders = [o for o in range(2, n)]
    late = (dataset, goal) in OUTER_HUBS
    for slot, name in enumerate(hub_set):
        if slot in orders:
            continue
        pick = round(0.75 * n) if late else 2
        while pick not in remaining_orders:
            pick += 1 if pick < n - 1 else -(n - 3)
        remaining_orders.remove(pick)
        orders[slot] = pick
    rng.shuffle(remaining_orders)
    for s in ordinary:
        orders[s] = remaining_orders.pop()
        named[s] = filler_pool.pop()
    assert not remaining_orders

    nodes = sorted(
        ({"id": named[s], "order": orders[s],
          "details": f"{named[s]} as raised in the Goal {goal} roundtable."} for s in range(n)),
        key=lambda x: x["order"])

    # orient links: inward means later node points at earlier node
    if tending:
        gap = 1 if m % 2 else 2
    else:
        gap = max(3, m // 2) if m >= 6 else max(1, m - 2)
        gap = gap if (m - gap) % 2 == 0 else gap - 1
        gap = max(gap, 1 if m % 2 else 2)
    major = (m + gap) // 2
    minor = m - major
    assert major - minor == gap and major > minor
    inward = major if trend == "inward" else minor
    idx = list(range(m))
    rng.shuffle(idx)
    inward_set = set(idx[:inward])
    links = []
    for k, (a, b) in enumerate(edges):
        early, late_ = (a, b) if orders[a] < orders[b] else (b, a)
        src, dst = (late_, early) if k in inward_set else (early, late_)
        links.append({"source": named[src], "target": named[dst],
                      "relation": rng.choice(RELATIONS)})
    links.sort(key=lambda l: (orders[slot_of(named, l["source"])],
                              orders[slot_of(named, l["target"])]))
    return {"goal": goal, "nodes": nodes, "links": links}


def slot_of(named, name):
    for s, v in named.items():
        if v == name:
            return s
    raise KeyError(name)


def build_graphs(dataset, rows, seed):
    rng = random.Random(seed)
    graphs = []
    for row in rows:
        taken = {row[1], row[3], *row[2]}
        pool = [f for f in FILLER if f not in taken]
        rng.shuffle(pool)
        graphs.append(build_graph(dataset, row, rng, pool))
    path = os.path.join(ROOT, "graphs", f"{dataset}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"dataset": dataset, "graphs": graphs}, fh, indent=1, ensure_ascii=False)
        fh.write("\n")
    print(f"{path}: {sum(len(g['nodes']) for g in graphs)} nodes, "
          f"{sum(len(g['links']) for g in graphs)} links")


if __name__ == "__main__":
    build_tags("preliminary", TAG_TARGETS["preliminary"], 269)
    build_tags("formal", TAG_TARGETS["formal"], 1127)
    build_graphs("preliminary", PRELIMINARY_ROWS, 301)
    build_graphs("formal", FORMAL_ROWS, 343)
