"""Live provider: an OpenAI-compatible chat endpoint plus the Semantic Scholar graph API."""
from __future__ import annotations

import os
from datetime import timedelta

import httpx

from ..model import PaperRecord, RecordError, parse_date
from .core import ChatRequest, ChatResponse, PermanentError, SearchFilter, SearchHit, TransientError, Usage

S2_FIELDS = "paperId,title,authors,publicationDate,year,venue,abstract,openAccessPdf"


def _raise_for_status(resp: httpx.Response, what: str) -> None:
    if resp.status_code == 429 or resp.status_code >= 500:
        raise TransientError(f"{what}: HTTP {resp.status_code}")
    if resp.status_code >= 400:
        raise PermanentError(f"{what}: HTTP {resp.status_code}: {resp.text[:200]}")


class HttpProvider:
    def __init__(
        self,
        chat_base_url: str,
        chat_api_key: str | None,
        search_base_url: str = "https://api.semanticscholar.org/graph/v1",
        search_api_key: str | None = None,
        fulltext_url_template: str | None = None,
        client: httpx.Client | None = None,
        timeout: float = 120.0,
    ):
        self.chat_base_url = chat_base_url.rstrip("/")
        self.chat_api_key = chat_api_key
        self.search_base_url = search_base_url.rstrip("/")
        self.search_api_key = search_api_key
        self.fulltext_url_template = fulltext_url_template
        self.client = client or httpx.Client(timeout=timeout)

    @classmethod
    def from_env(cls, client: httpx.Client | None = None) -> "HttpProvider":
        return cls(
            chat_base_url=os.environ.get("THEORYKIT_CHAT_BASE_URL", "https://api.openai.com/v1"),
            chat_api_key=os.environ.get("THEORYKIT_CHAT_API_KEY") or os.environ.get("OPENAI_API_KEY"),
            search_api_key=os.environ.get("S2_API_KEY"),
            fulltext_url_template=os.environ.get("THEORYKIT_FULLTEXT_URL"),
            client=client,
        )

    def _get(self, url: str, **kw) -> httpx.Response:
        try:
            return self.client.get(url, **kw)
        except httpx.TransportError as exc:
            raise TransientError(f"GET {url}: {exc}") from exc

    def complete(self, prompt: str, request: ChatRequest, model_id: str, seed: int) -> ChatResponse:
        if not self.chat_api_key:
            raise PermanentError("no chat API key configured (set THEORYKIT_CHAT_API_KEY)")
        body = {
            "model": model_id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "seed": seed,
        }
        if request.response_contract == "structured":
            body["response_format"] = {"type": "json_object"}
        try:
            resp = self.client.post(
                f"{self.chat_base_url}/chat/completions",
                json=body,
                headers={"Authorization": f"Bearer {self.chat_api_key}"},
            )
        except httpx.TransportError as exc:
            raise TransientError(f"chat: {exc}") from exc
        _raise_for_status(resp, "chat")
        data = resp.json()
        try:
            text = data["choices"][0]["message"]["content"] or ""
            usage = data.get("usage", {})
            return ChatResponse(
                text,
                Usage(int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0))),
                data.get("model", model_id),
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise PermanentError(f"chat: malformed provider response: {exc}") from exc

    def search(self, query: str, filters: SearchFilter) -> list[SearchHit]:
        params = {"query": query, "limit": min(filters.limit, 100), "fields": S2_FIELDS}
        if filters.after or filters.until:
            lo = (filters.after + timedelta(days=1)).isoformat() if filters.after else ""
            hi = filters.until.isoformat() if filters.until else ""
            params["publicationDateOrYear"] = f"{lo}:{hi}"
        headers = {"x-api-key": self.search_api_key} if self.search_api_key else {}
        resp = self._get(f"{self.search_base_url}/paper/search", params=params, headers=headers)
        _raise_for_status(resp, "search")
        rows = resp.json().get("data") or []
        hits = []
        for rank, row in enumerate(rows):
            when = row.get("publicationDate") or (f"{row['year']}-01-01" if row.get("year") else None)
            if not when or not row.get("paperId") or not row.get("title"):
                continue
            try:
                paper = PaperRecord(
                    paper_id=row["paperId"],
                    title=row["title"],
                    publication_date=parse_date(when),
                    authors=tuple(a.get("name", "") for a in row.get("authors") or []),
                    venue=row.get("venue") or "",
                    abstract=row.get("abstract") or "",
                    source_url=(row.get("openAccessPdf") or {}).get("url"),
                )
            except RecordError:
                continue
            hits.append(SearchHit(paper, 1.0 - rank / max(len(rows), 1)))
        return hits

    def fetch(self, paper_id: str) -> str | None:
        if not self.fulltext_url_template:
            return None
        resp = self._get(self.fulltext_url_template.format(paper_id=paper_id))
        if resp.status_code == 404:
            return None
        _raise_for_status(resp, "fetch")
        return resp.text or None
