"""Regenerate the committed API schema document (docs/openapi.json).

Run after changing service routes or request/response models:

    python3 scripts/export_openapi.py
"""

import json
import tempfile
from pathlib import Path

from detoxforge.service import ServiceSettings, create_app

DOCS = Path(__file__).resolve().parent.parent / "docs"


def main():
    with tempfile.TemporaryDirectory() as td:
        app = create_app(ServiceSettings(data_dir=Path(td)))
        schema = app.openapi()
    DOCS.mkdir(exist_ok=True)
    out = DOCS / "openapi.json"
    with open(out, "w", encoding="utf-8") as f:
        json.dump(schema, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
