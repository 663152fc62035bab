"""Shared test fixtures: scripted endpoint doubles behind a real Gateway.

The fakes speak the gateway's wire formats through httpx.MockTransport, so
every test exercises the actual HTTP client, cache, and retry code without
sockets. Classifier behavior is driven by a small marker-word list;
embeddings are deterministic functions of the text, so identical texts
always embed identically.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

import httpx
import pytest

from detoxforge.gateway import EndpointKind, EndpointSpec, Gateway

DATA_DIR = Path(__file__).parent / "data"

TOXIC_MARKERS = ("idiot", "stupid", "hate", "moron", "trash", "awful", "retarded")

FAKE_DETOX_MAP = {
    "retarded": "not intellectually inclined",
    "idiot": "person",
    "stupid": "misguided",
    "moron": "individual",
    "hate": "dislike",
    "trash": "poor content",
    "awful": "unpleasant",
}


def fake_embedding(text: str, dim: int = 8) -> list[float]:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [digest[i] / 255.0 + 0.01 for i in range(dim)]


def fake_toxicity_score(text: str) -> float:
    return 0.9 if any(m in text.lower() for m in TOXIC_MARKERS) else 0.1


def fake_rewrite(text: str) -> str:
    out = text
    for bad, good in FAKE_DETOX_MAP.items():
        out = re.sub(bad, good, out, flags=re.IGNORECASE)
    return out


_INPUT_LINE = re.compile(r"Input Text:\s*(.*)")


def extract_input(rendered: str) -> str:
    matches = _INPUT_LINE.findall(rendered)
    return matches[-1].strip() if matches else rendered.strip()


def chat_reply_cot(rendered: str) -> str:
    text = extract_input(rendered)
    return ("Explanation: The text contains a derogatory term aimed at a person.\n"
            f"Non-toxic: {fake_rewrite(text)}")


def default_chat_reply(rendered: str) -> str:
    """Route on template markers so one fake model serves every prompt kind."""
    if "Semantically similar:" in rendered:
        return "yes"
    if "at most three sentences" in rendered:
        return "The text attacks a person with an insult. That makes it toxic."
    if "Explanation:" in rendered and "Non-toxic:" in rendered:
        return chat_reply_cot(rendered)
    return fake_rewrite(extract_input(rendered))


def make_handler(*, chat_reply=default_chat_reply, paraphrase_score=None,
                 translate=None, fluency_score=0.9, fail_first=None):
    """One MockTransport handler covering every fake endpoint route.

    fail_first: {"count": n} makes the first n chat calls return HTTP 500.
    """
    if paraphrase_score is None:
        paraphrase_score = lambda text, pair: 0.9
    if translate is None:
        translate = lambda text, src, tgt: text if tgt == "en" else f"[{tgt}] {text}"
    state = {"failures_left": (fail_first or {}).get("count", 0), "calls": []}

    def handler(request: httpx.Request) -> httpx.Response:
        url = str(request.url)
        payload = json.loads(request.content.decode("utf-8"))
        state["calls"].append(url)
        if url.endswith("/chat/completions"):
            if state["failures_left"] > 0:
                state["failures_left"] -= 1
                return httpx.Response(500, text="scripted transient failure")
            rendered = payload["messages"][0]["content"]
            return httpx.Response(200, json={
                "choices": [{"message": {"content": chat_reply(rendered)},
                             "finish_reason": "stop"}],
                "usage": {"prompt_tokens": 1, "completion_tokens": 1, "total_tokens": 2},
            })
        if "/classify/toxicity" in url:
            return httpx.Response(200, json={"label": "raw",
                                             "score": fake_toxicity_score(payload["text"])})
        if "/classify/fluency" in url:
            return httpx.Response(200, json={"label": "raw", "score": fluency_score})
        if "/classify/paraphrase" in url:
            score = paraphrase_score(payload["text"], payload.get("text_pair"))
            return httpx.Response(200, json={"label": "raw", "score": score})
        if "/embed" in url:
            return httpx.Response(200, json={"vector": fake_embedding(payload["text"])})
        if "/translate" in url:
            out = translate(payload["text"], payload["source_lang"], payload["target_lang"])
            return httpx.Response(200, json={"text": out})
        return httpx.Response(404, text=f"no fake route for {url}")

    handler.state = state
    return handler


def fake_registry() -> dict[str, EndpointSpec]:
    base = "http://fake.test"
    specs = [
        EndpointSpec(id="detox_model", kind=EndpointKind.CHAT, base_url=base,
                     model="fake-detox", max_retries=2),
        EndpointSpec(id="chat", kind=EndpointKind.CHAT, base_url=base, max_retries=2),
        EndpointSpec(id="paraphrase_classifier", kind=EndpointKind.CLASSIFIER,
                     base_url=f"{base}/classify/paraphrase",
                     positive_label="paraphrase", negative_label="non_paraphrase"),
        EndpointSpec(id="style_classifier", kind=EndpointKind.CLASSIFIER,
                     base_url=f"{base}/classify/toxicity"),
        EndpointSpec(id="fluency_classifier", kind=EndpointKind.CLASSIFIER,
                     base_url=f"{base}/classify/fluency",
                     positive_label="fluent", negative_label="nonfluent"),
        EndpointSpec(id="bertscore_embedder", kind=EndpointKind.EMBEDDER,
                     base_url=f"{base}/embed/bertscore", dimension=8),
        EndpointSpec(id="sim_embedder", kind=EndpointKind.EMBEDDER,
                     base_url=f"{base}/embed/sim", dimension=8),
        EndpointSpec(id="translator", kind=EndpointKind.TRANSLATOR,
                     base_url=f"{base}/translate"),
    ]
    for name in ("fb_yt", "fox", "twitter", "stormfront", "wiki", "hatecheck"):
        specs.append(EndpointSpec(id=name, kind=EndpointKind.CLASSIFIER,
                                  base_url=f"{base}/classify/toxicity"))
    return {s.id: s for s in specs}


class RaisingTransport(httpx.BaseTransport):
    """Fails the test on any attempted network I/O."""

    def handle_request(self, request):
        raise AssertionError(f"network I/O attempted: {request.method} {request.url}")


@pytest.fixture
def fake_gateway(tmp_path):
    """Gateway over the scripted fakes, fresh cache per test."""
    handler = make_handler()
    gw = Gateway(fake_registry(), tmp_path / "cache",
                 transport=httpx.MockTransport(handler), retry_base_delay=0.0)
    gw.fake_handler = handler
    yield gw
    gw.close()


@pytest.fixture
def gateway_factory(tmp_path):
    """Build gateways with custom fake behavior but a shared cache dir."""

    def build(cache_name="cache", replay=False, transport=None, **handler_kwargs):
        if transport is None:
            handler = make_handler(**handler_kwargs)
            transport = httpx.MockTransport(handler)
        else:
            handler = None
        gw = Gateway(fake_registry(), tmp_path / cache_name,
                     replay=replay, transport=transport, retry_base_delay=0.0)
        gw.fake_handler = handler
        return gw

    return build


def load_fixture_texts(name: str) -> list[str]:
    return [json.loads(line)["text"]
            for line in (DATA_DIR / name).read_text(encoding="utf-8").splitlines()
            if line.strip()]


# -- real socket server for CLI / subprocess integration -------------------------------

def _serve_fake_endpoints():
    import http.server
    import threading

    handler_logic = make_handler()

    class Handler(http.server.BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            request = httpx.Request("POST", f"http://localhost{self.path}", content=body)
            response = handler_logic(request)
            self.send_response(response.status_code)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(response.content)

        def do_GET(self):
            self.send_response(200)
            self.end_headers()
            self.wfile.write(b"ok")

        def log_message(self, *args):
            pass

    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


@pytest.fixture(scope="session")
def fake_server():
    """Real HTTP server speaking every fake endpoint route; yields base URL."""
    server = _serve_fake_endpoints()
    host, port = server.server_address
    yield f"http://{host}:{port}"
    server.shutdown()


def write_endpoints_config(path: Path, base_url: str, ensemble=False) -> Path:
    """Endpoint registry JSON aimed at the fake server."""
    entries = [
        {"id": "detox_model", "kind": "chat", "base_url": base_url, "model": "fake"},
        {"id": "chat", "kind": "chat", "base_url": base_url},
        {"id": "paraphrase_classifier", "kind": "classifier",
         "base_url": f"{base_url}/classify/paraphrase",
         "positive_label": "paraphrase", "negative_label": "non_paraphrase"},
        {"id": "style_classifier", "kind": "classifier",
         "base_url": f"{base_url}/classify/toxicity"},
        {"id": "fluency_classifier", "kind": "classifier",
         "base_url": f"{base_url}/classify/fluency",
         "positive_label": "fluent", "negative_label": "nonfluent"},
        {"id": "bertscore_embedder", "kind": "embedder",
         "base_url": f"{base_url}/embed/bertscore", "dimension": 8},
        {"id": "sim_embedder", "kind": "embedder",
         "base_url": f"{base_url}/embed/sim", "dimension": 8},
        {"id": "translator", "kind": "translator", "base_url": f"{base_url}/translate"},
    ]
    doc = {"endpoints": entries}
    if ensemble:
        for name in ("fb_yt", "fox", "twitter", "stormfront", "wiki", "hatecheck"):
            entries.append({"id": name, "kind": "classifier",
                            "base_url": f"{base_url}/classify/toxicity"})
        doc["ensemble"] = ["fb_yt", "fox", "twitter", "stormfront", "wiki", "hatecheck"]
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return path
