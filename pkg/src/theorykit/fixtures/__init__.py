"""Bundled offline fixture: a small tutoring-systems literature with scripted model behaviour.

``fixture_provider`` returns a MockProvider whose responders answer every prompt
asset the pipeline uses. Scripted answers come from ``its_fixture.json``; anything
not scripted is produced from the per-request seeded generator, so results are
reproducible for a given run seed.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any

from ..gateway import MockCall, MockProvider
from ..model import KnowledgeWindow, PaperRecord, TheoryQuery, from_data
from ..synthesis import KNOWLEDGE_MODES, OBJECTIVE_INSTRUCTIONS
from ..text import jaccard, slugify

FIXTURE_FILE = "its_fixture.json"

_DEGREES = ("genuinely_new", "derivable_unstated", "explicit_peripheral", "explicit_established")
_DEGREE_WEIGHTS = (0.45, 0.35, 0.12, 0.08)
# laws grounded in the corpus overlap it more, so their per-paper degrees lean less novel
_GROUNDED_WEIGHTS = (0.22, 0.30, 0.28, 0.20)


@lru_cache(maxsize=None)
def _raw(name: str = FIXTURE_FILE) -> str:
    return resources.files(__package__).joinpath(name).read_text(encoding="utf-8")


def fixture_data(name: str = FIXTURE_FILE) -> dict[str, Any]:
    return json.loads(_raw(name))


@dataclass(frozen=True)
class Fixture:
    data: dict[str, Any]

    @property
    def query(self) -> TheoryQuery:
        return from_data(TheoryQuery, self.data["query"])

    @property
    def window(self) -> KnowledgeWindow:
        return from_data(KnowledgeWindow, self.data["window"])

    @property
    def papers(self) -> list[PaperRecord]:
        out = []
        for p in self.data["papers"]:
            p = {k: v for k, v in p.items() if k != "mentions"}
            out.append(from_data(PaperRecord, p))
        return out

    def paper(self, paper_id: str) -> PaperRecord:
        for p in self.papers:
            if p.paper_id == paper_id:
                return p
        raise KeyError(paper_id)

    @property
    def seed_papers(self) -> list[PaperRecord]:
        return [self.paper(pid) for pid in self.data["seed_papers"]]


def load_fixture(name: str = FIXTURE_FILE) -> Fixture:
    return Fixture(fixture_data(name))


def _dump(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def _json_var(call: MockCall, name: str) -> dict[str, Any]:
    return json.loads(call.variables[name])


class FixtureResponders:
    """Per-asset responder functions backed by the fixture data."""

    def __init__(self, data: dict[str, Any]):
        self.data = data
        self.mentions = {p["paper_id"]: p.get("mentions", []) for p in data["papers"]}
        self.rubrics = data.get("rubrics", {})
        self.judgments = data.get("judgments", {})
        self.scripted_predictions = {p["short_name"] for preds in self.rubrics.values() for p in preds}
        self.dup_verdicts = data.get("duplicates", {}).get("verdicts", {})
        self.queries = data.get("queries", {})
        self.grounded = {
            law["name"]
            for slug, theories in data.get("theories", {}).items()
            if slug.startswith("literature-")
            for t in theories
            for law in t["laws"]
        }

    def table(self) -> dict[str, Any]:
        return {
            "reformulate_query": self.reformulate_query,
            "extract_references": self.extract_references,
            "generate_schema": self.generate_schema,
            "extract_evidence": self.extract_evidence,
            "merge_extractions": self.merge_extractions,
            "generate_theories": self.generate_theories,
            "reflect_theory": self.reflect_theory,
            "judge_law": self.judge_law,
            "generate_rubric": self.generate_rubric,
            "judge_evidence": self.judge_evidence,
            "self_belief": self.self_belief,
            "novelty_per_paper": self.novelty_per_paper,
            "novelty_consolidate": self.novelty_consolidate,
            "judge_duplicate": self.judge_duplicate,
            "generate_queries": self.generate_queries,
        }

    # -- theorize -------------------------------------------------------------

    def reformulate_query(self, call: MockCall) -> str:
        return self.data["search_query"]

    def extract_references(self, call: MockCall) -> str:
        text = call.variables["full_text"]
        _, sep, tail = text.partition("\nReferences\n")
        titles = [line[2:].strip() for line in tail.splitlines() if line.startswith("- ")] if sep else []
        return _dump({"references": [{"title": t, "year": None} for t in titles]})

    def generate_schema(self, call: MockCall) -> str:
        return _dump(self.data["schema"])

    def extract_evidence(self, call: MockCall) -> str:
        return _dump({"mentions": self.mentions.get(call.variables["paper_id"], [])})

    def merge_extractions(self, call: MockCall) -> str:
        partials = json.loads(call.variables["partials"])
        merged = [m for part in partials for m in part.get("mentions", [])]
        return _dump({"mentions": merged})

    def _condition(self, call: MockCall) -> str:
        knowledge = next(k for k, v in KNOWLEDGE_MODES.items() if v == call.variables["knowledge_mode"])
        objective = next(o for o, v in OBJECTIVE_INSTRUCTIONS.items() if v == call.variables["objective_instructions"])
        return f"{knowledge.value}-{objective.value}"

    def generate_theories(self, call: MockCall) -> str:
        by_paper: dict[str, list[str]] = {}
        for line in call.variables["evidence"].splitlines():
            if line.strip():
                rec = json.loads(line)
                by_paper.setdefault(rec["paper_id"], []).append(rec["uuid"])
        theories = []
        for t in self.data["theories"][self._condition(call)]:
            laws = []
            for law in t["laws"]:
                law = dict(law)
                evidence = []
                for item in law.get("evidence", []):
                    uuids = [u for pid in item["papers"] for u in by_paper.get(pid, [])]
                    if uuids:
                        evidence.append({"description": item["description"], "uuids": uuids})
                law["evidence"] = evidence
                laws.append(law)
            theories.append({"name": t["name"], "description": t["description"], "laws": laws})
        return _dump({"theories": theories})

    def reflect_theory(self, call: MockCall) -> str:
        # the fixture generator is already self-consistent; reflection returns it unchanged
        return call.variables["theory"]

    # -- evaluate -------------------------------------------------------------

    def judge_law(self, call: MockCall) -> str:
        law = _json_var(call, "law")
        score = call.rng.randint(4, 8) + (1 if law.get("evidence") else 0)
        return _dump({"score": min(score, 10), "rationale": f"Rated on {call.variables['dimension']}."})

    def generate_rubric(self, call: MockCall) -> str:
        law = _json_var(call, "law")
        if law["name"] in self.rubrics:
            return _dump({"predictions": self.rubrics[law["name"]]})
        base = slugify(law["name"], 3)
        preds = []
        for i in range(5):
            preds.append(
                {
                    "short_name": f"{base}_p{i + 1}",
                    "specific_prediction": f"{law['statement']} (prediction {i + 1})",
                    "operational_signals": [f"measured outcome {i + 1} for {law['name']}"],
                    "strong_test_requirement": "A controlled comparison within the law's scope.",
                    "support_criteria": "The predicted direction is observed.",
                    "contradiction_criteria": "The opposite direction is observed.",
                }
            )
        return _dump({"predictions": preds})

    def judge_evidence(self, call: MockCall) -> str:
        pred = _json_var(call, "prediction")
        name, paper_id = pred["short_name"], call.variables["paper_id"]
        none = {"verdict": "no_evidence", "evidence_locator": "", "rationale": "The paper does not test this prediction."}
        if name in self.scripted_predictions:
            return _dump(self.judgments.get(paper_id, {}).get(name, none))
        r = call.rng.random()
        if r < 0.06:
            return _dump({"verdict": "support", "evidence_locator": "Section 5, results table", "rationale": "Reported effect matches."})
        if r < 0.08:
            return _dump({"verdict": "contradict", "evidence_locator": "Section 5, results table", "rationale": "Reported effect is opposite."})
        return _dump(none)

    def self_belief(self, call: MockCall) -> str:
        return "yes" if call.rng.random() < 0.8 else "no"

    def novelty_per_paper(self, call: MockCall) -> str:
        law = _json_var(call, "law")
        if law["statement"] in call.variables["full_text"]:
            return _dump({"degree": "explicit_established", "rationale": "The paper states the law directly."})
        weights = _GROUNDED_WEIGHTS if law["name"] in self.grounded else _DEGREE_WEIGHTS
        degree = call.rng.choices(_DEGREES, weights=weights)[0]
        return _dump({"degree": degree, "rationale": f"Assessed on {call.variables['dimension']}."})

    def novelty_consolidate(self, call: MockCall) -> str:
        lines = [json.loads(l) for l in call.variables["assessments"].splitlines() if l.startswith("{")]
        counts = Counter(a["degree"] for a in lines)
        if counts:
            # most frequent degree; ties go to the more novel label
            degree = max(_DEGREES, key=lambda d: (counts[d], -_DEGREES.index(d)))
        else:
            degree = "genuinely_new"
        return _dump(
            {
                "what_is_known": f"{len(lines)} reference papers were assessed.",
                "what_introduced": "The law's claim restricted to its stated scope.",
                "what_novel": f"Majority assessment: {degree}.",
                "degree": degree,
            }
        )

    def judge_duplicate(self, call: MockCall) -> str:
        a, b = _json_var(call, "law_a"), _json_var(call, "law_b")
        key = "|".join(sorted((a["name"], b["name"])))
        if key in self.dup_verdicts:
            return _dump(self.dup_verdicts[key])
        same = jaccard(a["statement"], b["statement"]) >= 0.5
        return _dump(
            {
                "core_claim_a": a["statement"],
                "core_claim_b": b["statement"],
                "similarities": [{"text": "Shared vocabulary and outcome.", "tag": "ESSENTIAL" if same else "NON_ESSENTIAL"}],
                "differences": [{"text": "Different scope wording.", "tag": "NON_ESSENTIAL" if same else "ESSENTIAL"}],
                "reasoning": "Lexical overlap of the core claims.",
                "verdict": "duplicates" if same else "not_duplicates",
            }
        )

    def generate_queries(self, call: MockCall) -> str:
        pid = call.variables["paper_id"]
        if pid in self.queries:
            return _dump(self.queries[pid])
        title = re.sub(r"\s+", " ", call.variables["title"]).strip().rstrip(".")
        return _dump(
            {
                "general": f"Build a theory of the research area of {title[0].lower() + title[1:]}.",
                "specific": f"Build a theory of the specific mechanisms reported in {title}.",
            }
        )


def fixture_provider(name: str = FIXTURE_FILE, **kwargs: Any) -> MockProvider:
    data = fixture_data(name)
    fx = Fixture(data)
    kwargs.setdefault("min_shared_terms", data.get("min_shared_terms", 1))
    return MockProvider(FixtureResponders(data).table(), papers=fx.papers, **kwargs)
