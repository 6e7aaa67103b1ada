#!/usr/bin/env python3
"""Regenerate the offline demo corpus under crates/core/fixtures/corpus.

Each talk is a metadata file <id>.json plus, when captions exist, a
transcript <id>.txt. Transcripts are assembled from per-goal vocabulary so
the mock provider tags every goal in both collection windows. A handful of
records exercise the skip paths: short, long, member-only, no captions and
non-English. Seeded; reruns are byte-identical.
"""

import json
import os
import random
import shutil

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "fixtures", "corpus")

GOALS = {
    1: ("poverty", "income", "welfare", "cash"),
    2: ("hunger", "food", "farming", "crops"),
    3: ("health", "disease", "hospital", "wellbeing"),
    4: ("education", "school", "teacher", "students"),
    5: ("gender", "women", "girls", "mothers"),
    6: ("water", "sanitation", "drinking", "rivers"),
    7: ("energy", "solar", "electricity", "batteries"),
    8: ("jobs", "economy", "workers", "wages"),
    9: ("innovation", "infrastructure", "industry", "engineering"),
    10: ("inequality", "discrimination", "inclusion", "migrants"),
    11: ("cities", "urban", "housing", "transport"),
    12: ("consumption", "waste", "recycling", "plastic"),
    13: ("climate", "carbon", "emissions", "warming"),
    14: ("ocean", "marine", "fish", "coral"),
    15: ("forest", "biodiversity", "species", "wildlife"),
    16: ("justice", "peace", "institutions", "democracy"),
    17: ("partnership", "cooperation", "collaboration", "alliances"),
}

TOPICS = {
    1: "Cash Transfers That Work", 2: "Feeding a Hungry Planet", 3: "Health Without Borders",
    4: "Schools That Teach Curiosity", 5: "What Girls Can Build", 6: "Rivers Worth Drinking",
    7: "Solar for the Next Billion", 8: "Good Jobs in a Changing Economy", 9: "Engineering the Future",
    10: "Inclusion Is a Practice", 11: "Cities for People", 12: "The End of Plastic Waste",
    13: "Cutting Carbon Now", 14: "Saving the Coral", 15: "Forests Are Libraries",
    16: "Justice You Can See", 17: "Partnerships Across Borders",
}

TEMPLATES = [
    "I grew up thinking about {a} every single day.",
    "When we talk about {a}, we rarely mention {b}.",
    "The data on {a} surprised our whole team.",
    "Our project connected {a} with {b} in three villages.",
    "Nobody believed that {a} could change so quickly.",
    "We measured {a} and {b} for five years.",
    "The hardest part of {a} is the politics around it.",
    "So here is my ask: treat {a} as a shared project.",
]


def sentences(rng, goals, n):
    words = []
    for g in goals:
        words.extend(GOALS[g])
    out = []
    for i in range(n):
        g = goals[i % len(goals)]
        a = GOALS[g][rng.randrange(4)]
        b = rng.choice(words)
        out.append(rng.choice(TEMPLATES).format(a=a, b=b))
    return " ".join(out)


def talk(rng, idx, year, primary):
    others = [g for g in GOALS if g != primary]
    extra = rng.sample(others, rng.choice([0, 1, 1, 2]))
    goals = [primary] + extra
    month = rng.randint(1, 12)
    day = rng.randint(1, 28)
    return {
        "video_id": f"tk{year % 100:02d}{idx:03d}",
        "title": f"{TOPICS[primary]} ({year})",
        "published_at": f"{year}-{month:02d}-{day:02d}T15:00:00Z",
        "duration_secs": rng.randint(300, 1100),
        "channel": "UCAuUUnT6oDeKwE6v1NGQxug",
    }, sentences(rng, goals, 14 + rng.randrange(8))


def main():
    rng = random.Random(2024)
    if os.path.isdir(OUT):
        shutil.rmtree(OUT)
    os.makedirs(OUT)
    records = []
    idx = 0
    for year, per_goal in [(2021, 1), (2022, 1), (2023, 3)]:
        for rep in range(per_goal):
            for g in GOALS:
                idx += 1
                meta, text = talk(rng, idx, year, g)
                records.append((meta, text, {}))
    # Skip paths, all dated inside 2023.
    odd = [
        ("short", {"duration_secs": 120}),
        ("long", {"duration_secs": 1500}),
        ("member", {"member_only": True}),
        ("nocaps", {}),
        ("spanish", {"caption_language": "es"}),
    ]
    for name, extra in odd:
        idx += 1
        meta, text = talk(rng, idx, 2023, rng.randint(1, 17))
        meta["video_id"] = f"tk23{name}"
        if "duration_secs" in extra:
            meta["duration_secs"] = extra.pop("duration_secs")
        if name == "nocaps" or extra.get("member_only"):
            text = None
        records.append((meta, text, extra))
    for meta, text, extra in records:
        doc = dict(meta)
        doc.update(extra)
        with open(os.path.join(OUT, meta["video_id"] + ".json"), "w") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
        if text is not None:
            with open(os.path.join(OUT, meta["video_id"] + ".txt"), "w") as f:
                f.write(text + "\n")
    print(f"{len(records)} talks written to {os.path.normpath(OUT)}")


if __name__ == "__main__":
    main()
