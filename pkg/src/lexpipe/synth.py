"""Synthetic judgment corpus for offline runs and tests.

Documents are assembled from sentence templates with known element values,
so the gold features are exact. A few rulings, an old judgment and an
``other`` document are mixed in to exercise the filters.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .elements import ElementCatalog

__all__ = ["PROVINCES", "SynthDoc", "make_documents", "write_fixture", "LAWS", "description_corpus"]

PROVINCES = ("Zhejiang", "Jiangsu", "Guangdong", "Sichuan", "Shandong")

_NUMS = "零一二三四五六七八九十"
_SURNAMES = "张王李赵刘陈杨黄周吴"

LAWS = (
    {
        "source": "刑法第二百三十四条",
        "text": "故意伤害他人身体的，处三年以下有期徒刑、拘役或者管制。致人重伤的，处三年以上十年以下有期徒刑。",
    },
    {
        "source": "刑法第六十七条",
        "text": "犯罪以后自动投案，如实供述自己的罪行的，是自首。对于自首的犯罪分子，可以从轻或者减轻处罚。",
    },
    {
        "source": "刑法第七十二条",
        "text": "对于被判处拘役、三年以下有期徒刑的犯罪分子，同时符合下列条件的，可以宣告缓刑。宣告缓刑，对犯罪分子可以同时禁止其在缓刑考验期限内从事特定活动。",
    },
)


def _cn(n: int) -> str:
    """Chinese numeral for 0 <= n < 100."""
    if n < 10:
        return _NUMS[n]
    tens, ones = divmod(n, 10)
    head = "" if tens == 1 else _NUMS[tens]
    return head + "十" + (_NUMS[ones] if ones else "")


def _duration(months: int) -> str:
    years, rest = divmod(months, 12)
    out = f"{_cn(years)}年" if years else ""
    if rest:
        out += f"{_cn(rest)}个月"
    return out


@dataclass(frozen=True)
class SynthDoc:
    id: str
    body: str
    meta: dict


def _judgment_body(rng: random.Random, name: str) -> tuple[str, dict]:
    features: dict[str, str] = {}
    injured = rng.randint(1, 2)
    armed = rng.random() < 0.4
    facts = f"本院查明，被告人{name}与被害人因琐事发生争执，"
    facts += "持木棍" if armed else "徒手"
    facts += f"将被害人打伤，经鉴定轻伤二级人数{_cn(injured)}人。"
    features["轻伤二级人数"] = str(injured)
    if armed:
        features["持械"] = "是"

    mitig = []
    if rng.random() < 0.5:
        mitig.append("自首")
        features["自首"] = "是"
    if rng.random() < 0.5:
        amount = rng.choice((5000, 12000, 30000, 8500))
        mitig.append(f"赔偿金额{amount}元")
        features["赔偿金额"] = str(amount)
        if rng.random() < 0.7:
            mitig.append("谅解")
            features["谅解"] = "是"
    if rng.random() < 0.5:
        mitig.append("认罪认罚")
        features["认罪认罚"] = "是"
    view = f"本院认为，被告人{name}故意伤害他人身体，其行为已构成故意伤害罪。"
    if mitig:
        view += "被告人具有以下情节：" + "，".join(mitig) + "。依法从轻处罚。"
        features["从轻处罚"] = "是"

    months = rng.choice((6, 8, 10, 12, 14, 18, 24, 30, 36))
    verdict = f"判决如下：被告人{name}犯故意伤害罪，判处有期徒刑{_duration(months)}"
    features["有期徒刑"] = _duration(months)
    if months <= 36 and rng.random() < 0.5:
        probation = months + rng.choice((6, 12))
        verdict += f"，缓刑{_duration(probation)}"
        features["缓刑"] = _duration(probation)
    verdict += "。"
    return facts + view + verdict, features


def make_documents(n: int = 20, seed: int = 0) -> list[SynthDoc]:
    """``n`` documents: mostly recent judgments plus a few filter cases."""
    rng = random.Random(seed)
    docs = []
    for k in range(n):
        name = rng.choice(_SURNAMES) + "某"
        doc_id = f"doc{k:03d}"
        province = PROVINCES[k % len(PROVINCES)]
        body, features = _judgment_body(rng, name)
        doc_type, year = "judgment", rng.randint(2020, 2023)
        if k % 10 == 3:
            doc_type = "ruling"
            body = f"审理查明，被告人{name}不服一审判决提出上诉。裁判结果：准许上诉人撤回上诉。"
            features = {}
        elif k % 10 == 7:
            year = 2018
        elif k == n - 1 and n >= 10:
            doc_type = "other"
        header = "某县人民法院刑事判决书\n"
        meta = {
            "id": doc_id,
            "doc_type": doc_type,
            "year": year,
            "province": province,
            "crime_type": "故意伤害罪",
            "procedure": "一审",
            "features": features,
        }
        docs.append(SynthDoc(doc_id, header + body, meta))
    return docs


def write_fixture(out_dir: str | Path, n: int = 20, seed: int = 0) -> dict[str, Path]:
    """Write ``texts/<id>.txt``, ``meta.jsonl`` and ``laws.jsonl`` under ``out_dir``."""
    out = Path(out_dir)
    texts = out / "texts"
    texts.mkdir(parents=True, exist_ok=True)
    docs = make_documents(n, seed)
    for d in docs:
        (texts / f"{d.id}.txt").write_text(d.body, encoding="utf-8")
    meta = out / "meta.jsonl"
    meta.write_text("".join(json.dumps(d.meta, ensure_ascii=False) + "\n" for d in docs), encoding="utf-8")
    laws = out / "laws.jsonl"
    laws.write_text("".join(json.dumps(x, ensure_ascii=False) + "\n" for x in LAWS), encoding="utf-8")
    return {"texts": texts, "meta": meta, "laws": laws}


def description_corpus(
    catalog: ElementCatalog,
    n_docs: int = 20,
    elements_per_doc: int = 5,
    seed: int = 0,
    noise: float = 0.0,
) -> list[tuple[str, list[str], list[str]]]:
    """Documents whose chunks are element descriptions.

    Returns ``(doc_id, chunk_texts, true_element_names)``. With ``noise > 0``
    each chunk gets that fraction of its characters replaced by characters
    drawn from other descriptions.
    """
    rng = random.Random(seed)
    pool = "".join(e.description for e in catalog)
    out = []
    for k in range(n_docs):
        chosen = rng.sample(catalog.names, min(elements_per_doc, len(catalog)))
        chunks = []
        for name in chosen:
            text = list(catalog.get(name).description)
            for i in range(len(text)):
                if rng.random() < noise:
                    text[i] = rng.choice(pool)
            chunks.append("".join(text))
        out.append((f"desc{k:03d}", chunks, chosen))
    return out
