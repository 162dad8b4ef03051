"""Deterministic synthetic corpora used across the test suite.

100 English math-word-problem CoTs ending in "The answer is N." and 100
Chinese PET-style report sections with region keywords, plus whole reports
and normal sections for the region-splitting and injection paths.
"""

from __future__ import annotations

import random

from cotseg.dataset import DEFAULT_NORMAL_TARGET, RegionSection
from cotseg.segmentation import TASK_MWP, TASK_PET, CoTSample

NAMES = ("Tom", "Lily", "Sam", "Maria", "Ken", "Ava", "Leo", "Nina")
ITEMS = ("apples", "pens", "books", "coins", "cards", "shells")

ORGAN_FINDINGS = {
    "肝": ("肝内见多发低密度影，较大者约{size}厘米，代谢增高。", "肝内多发转移可能。"),
    "肺": ("双肺见多发结节影，直径约{size}厘米，代谢活跃。", "双肺多发转移瘤。"),
    "胰": ("胰腺头部见软组织肿块，大小约{size}厘米，代谢异常增高。", "胰腺癌可能性大。"),
    "骨": ("多处骨质密度不均，局部代谢增高，范围约{size}厘米。", "多发骨转移。"),
    "淋巴": ("腹膜后见肿大淋巴结，短径约{size}厘米，代谢增高。", "腹膜后淋巴结转移。"),
}
NORMAL_FINDINGS = {
    "脾": "脾脏形态大小正常，未见异常代谢灶。",
    "肾": "双肾形态正常，代谢未见异常。",
    "胃": "胃壁未见增厚，代谢未见异常。",
    "胆": "胆囊不大，壁不厚，未见异常代谢。",
}


def make_mwp_corpus(n: int = 100, seed: int = 7) -> list[CoTSample]:
    rng = random.Random(seed)
    samples = []
    for i in range(n):
        name = rng.choice(NAMES)
        item = rng.choice(ITEMS)
        a = rng.randint(3, 40)
        b = rng.randint(2, 25)
        c = rng.randint(1, min(a + b - 1, 20))
        d = a + b - c
        query = (
            f"{name} has {a} {item}. {name} buys {b} more {item} and then "
            f"gives away {c}. How many {item} does {name} have now?"
        )
        if i % 3 == 0:
            e = rng.randint(1, d)
            target = (
                f"{name} starts with {a} {item}. Buying {b} more gives "
                f"{a} + {b} = {a + b}. Giving away {c} leaves {a + b} - {c} = {d}. "
                f"Check: {d} is {e} more than {d - e}. The answer is {d}."
            )
        else:
            target = (
                f"{name} starts with {a} {item}. Buying {b} more gives "
                f"{a} + {b} = {a + b}. Giving away {c} leaves {a + b} - {c} = {d}. "
                f"The answer is {d}."
            )
        samples.append(CoTSample(id=f"mwp-{i:04d}", query=query, target=target, task=TASK_MWP))
    return samples


def make_pet_corpus(n: int = 100, seed: int = 11) -> list[CoTSample]:
    rng = random.Random(seed)
    organs = sorted(ORGAN_FINDINGS)
    samples = []
    for i in range(n):
        k = 1 + (i % 3)
        chosen = rng.sample(organs, k)
        findings_parts = []
        impression_parts = []
        for organ in chosen:
            finding_tpl, impression = ORGAN_FINDINGS[organ]
            findings_parts.append(finding_tpl.format(size=f"{rng.randint(8, 45) / 10:.1f}"))
            impression_parts.append(impression)
        normal_organ = rng.choice(sorted(NORMAL_FINDINGS))
        findings_parts.append(NORMAL_FINDINGS[normal_organ])
        samples.append(
            CoTSample(
                id=f"pet-{i:04d}",
                query="".join(findings_parts),
                target="".join(impression_parts),
                task=TASK_PET,
            )
        )
    return samples


def make_fixture_corpus() -> list[CoTSample]:
    return make_mwp_corpus(100, seed=7) + make_pet_corpus(100, seed=11)


def make_normal_sections(n: int = 20, seed: int = 5) -> list[RegionSection]:
    rng = random.Random(seed)
    organs = sorted(NORMAL_FINDINGS)
    return [
        RegionSection(
            report_id=f"report-{i:04d}",
            region=rng.choice(organs),
            findings=NORMAL_FINDINGS[rng.choice(organs)],
            impression=DEFAULT_NORMAL_TARGET,
        )
        for i in range(n)
    ]


def make_pet_reports(n: int = 20, seed: int = 13) -> list[dict]:
    """Whole reports with impressions, for the region-splitting command."""
    rng = random.Random(seed)
    organs = sorted(ORGAN_FINDINGS)
    rows = []
    for i in range(n):
        anomalous = rng.sample(organs, 1 + (i % 2))
        normal = rng.sample(sorted(NORMAL_FINDINGS), 2)
        report_parts = [
            ORGAN_FINDINGS[o][0].format(size=f"{rng.randint(8, 45) / 10:.1f}")
            for o in anomalous
        ] + [NORMAL_FINDINGS[o] for o in normal]
        impression = "".join(ORGAN_FINDINGS[o][1] for o in anomalous)
        rows.append(
            {"id": f"rep-{i:04d}", "report": "".join(report_parts), "impression": impression}
        )
    return rows
