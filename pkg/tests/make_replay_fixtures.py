"""Regenerate the committed replay fixtures under tests/data/replay_cache/.

Run from the repo root after changing prompt templates or gateway wire
formats (fixture keys hash the request payload, so they go stale):

    python3 tests/make_replay_fixtures.py

The fixtures script one CoT detox exchange for the masked-token sample
"Dj Nick is retarded" plus its paraphrase-gate call, so the runtime replay
test can run with networking hard-disabled.
"""

import json
import shutil
import sys
from pathlib import Path

import httpx

sys.path.insert(0, str(Path(__file__).parent))

from conftest import fake_registry  # noqa: E402

from detoxforge.gateway import Gateway  # noqa: E402
from detoxforge.runtime import DetoxMode, DetoxRequest, DetoxRuntime  # noqa: E402

FIXTURE_DIR = Path(__file__).parent / "data" / "replay_cache"

SAMPLE_TEXT = "Dj Nick is retarded"
SAMPLE_REWRITE = "Dj Nick is not intellectually inclined."
SAMPLE_EXPLANATION = ("The input text is toxic because it contains a derogatory "
                      "term targeting an individual.")


def scripted_handler(request: httpx.Request) -> httpx.Response:
    url = str(request.url)
    if url.endswith("/chat/completions"):
        reply = f"Explanation: {SAMPLE_EXPLANATION}\nNon-toxic: {SAMPLE_REWRITE}"
        return httpx.Response(200, json={
            "choices": [{"message": {"content": reply}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 20, "total_tokens": 30}})
    if "/classify/paraphrase" in url:
        return httpx.Response(200, json={"label": "raw", "score": 0.92})
    return httpx.Response(404, text=f"unscripted route {url}")


def main():
    if FIXTURE_DIR.exists():
        shutil.rmtree(FIXTURE_DIR)
    gw = Gateway(fake_registry(), FIXTURE_DIR,
                 transport=httpx.MockTransport(scripted_handler))
    runtime = DetoxRuntime(gw)
    result = runtime.detoxify(DetoxRequest(text=SAMPLE_TEXT, mode=DetoxMode.COT_EXPL))
    print(json.dumps(result.to_json(), indent=2))
    print(f"fixtures in {FIXTURE_DIR}:")
    for p in sorted(FIXTURE_DIR.glob("*.json")):
        print(" ", p.name)


if __name__ == "__main__":
    main()
