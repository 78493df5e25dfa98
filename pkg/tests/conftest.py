"""Shared fixtures: a tiny PNG writer and a synthetic fixture corpus."""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import pytest

HERB_POOL = [
    "Sheng Di Huang", "Mu Dan Pi", "Chi Shao", "Zi Cao", "Bai Mao Gen",
    "Jin Yin Hua", "Lian Qiao", "Ku Shen", "Tu Fu Ling", "Yi Yi Ren",
    "Huang Qin", "Fang Feng",
]

SYNDROMES = ["血热证", "血燥证", "湿热蕴结证"]
TREATMENTS = ["清热凉血，解毒止痒", "养血润燥，祛风止痒", "清热利湿，解毒止痒"]
FORMULAS = ["凉血活血汤", "养血润肤饮", "清热除湿汤"]


def tiny_png(r: int = 200, g: int = 30, b: int = 40) -> bytes:
    """Minimal 1x1 truecolor PNG; different colors give different bytes."""

    def chunk(tag: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + tag
            + data
            + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", 1, 1, 8, 2, 0, 0, 0)
    idat = zlib.compress(bytes([0, r, g, b]))
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", idat) + chunk(b"IEND", b"")


def case_doc(i: int, images_per_case: int = 2) -> dict:
    cid = f"c{i:03d}"
    herbs = [HERB_POOL[(i + j) % len(HERB_POOL)] for j in range(4 + i % 3)]
    prescription = ", ".join(
        f"{name} (raw, {10 + 5 * (j % 3)} g)" if j == 0 else f"{name} ({10 + 5 * (j % 3)} g)"
        for j, name in enumerate(herbs)
    )
    images = [
        {
            "id": f"img{j + 1}",
            "path": f"images/{cid}_{j + 1}.png",
            "view_tag": ["trunk", "limbs", "scalp"][j % 3],
            "annotation": f"红色斑块覆鳞屑 view {j + 1} of {cid}",
        }
        for j in range(images_per_case)
    ]
    return {
        "case_id": cid,
        "visit_index": 1,
        "history": f"病程{i}年，冬重夏轻。Recurrent plaques for {i} years.",
        "physical_signs": f"舌红苔黄，脉滑数。Signs of case {cid}.",
        "symptoms": f"瘙痒明显，口干。Itch level {i}.",
        "images": images,
        "gold": {
            "per_image_descriptions": {
                img["id"]: f"红斑鳞屑，边界清楚 {cid} {img['id']}" for img in images
            },
            "patient_description": f"躯干四肢散在红色斑块，覆银白色鳞屑 case {cid}",
            "pathogenesis": f"血热内蕴，外发肌肤 case {cid}",
            "overall_pathogenesis": f"血热炽盛，兼夹湿邪，日久伤阴 case {cid}",
            "syndrome": SYNDROMES[i % len(SYNDROMES)],
            "treatment_principle": TREATMENTS[i % len(TREATMENTS)],
            "formula_name": FORMULAS[i % len(FORMULAS)],
            "prescription": prescription,
        },
    }


def write_corpus(
    root: Path,
    n_cases: int = 6,
    images_per_case: int = 2,
    mutate=None,
) -> list[dict]:
    """Write a manifest + case files + images; returns the raw case docs."""
    root.mkdir(parents=True, exist_ok=True)
    (root / "images").mkdir(exist_ok=True)
    docs = [case_doc(i, images_per_case) for i in range(1, n_cases + 1)]
    if mutate:
        mutate(docs)
    names = []
    for doc in docs:
        for j, img in enumerate(doc["images"]):
            img_path = root / img["path"]
            if not img_path.exists():
                seed = hash((doc["case_id"], j)) % 200
                img_path.write_bytes(tiny_png(seed, (seed * 7) % 256, (seed * 13) % 256))
        name = f"{doc['case_id']}.json"
        (root / name).write_text(
            json.dumps(doc, ensure_ascii=False, indent=2), encoding="utf-8"
        )
        names.append(name)
    (root / "manifest.json").write_text(
        json.dumps({"version": 1, "cases": names}, indent=2), encoding="utf-8"
    )
    return docs


@pytest.fixture
def corpus_dir(tmp_path: Path) -> Path:
    write_corpus(tmp_path / "corpus")
    return tmp_path / "corpus"


@pytest.fixture
def kb_dir(tmp_path: Path) -> Path:
    d = tmp_path / "kb"
    d.mkdir()
    (d / "patterns.md").write_text(
        "# Patterns\n\n## Blood heat\n\n血热证 lesions are bright red with scales.\n\n"
        "## Blood dryness\n\n血燥证 lesions are pale and dry.\n",
        encoding="utf-8",
    )
    (d / "herbs.md").write_text(
        "# Herbs\n\nSheng Di Huang cools the blood. Mu Dan Pi invigorates it.\n",
        encoding="utf-8",
    )
    return d


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if getattr(report, "when", None) != "call":
                continue
            if "test_acceptance" in report.nodeid:
                rows.append((report.nodeid.split("::")[-1], outcome))
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, outcome in sorted(rows):
            status = "PASS" if outcome == "passed" else "FAIL"
            terminalreporter.write_line(f"{status} {name}")
