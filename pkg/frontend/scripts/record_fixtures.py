"""Record real service exchanges into tests/fixtures/recorded.json.

Drives the same synthetic three-region scenario the Python service tests
use, over the service's HTTP interface, and captures every request/response
pair the console contract tests replay. Re-run after any service change:

    python3 scripts/record_fixtures.py
"""

import json
import sys
import tempfile
import time
from datetime import timedelta
from pathlib import Path

from fastapi.testclient import TestClient

REPO_ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(REPO_ROOT / "tests"))

from test_service import DIST, create_body  # noqa: E402

from vacsim.service.app import create_app  # noqa: E402

OUT_PATH = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "recorded.json"

exchanges: dict[str, object] = {}


def record(name: str, method: str, path: str, resp, request_body=None) -> dict:
    doc = {
        "method": method,
        "path": path,
        "request": request_body,
        "status": resp.status_code,
        "body": resp.json(),
    }
    exchanges[name] = doc
    return doc["body"]


def main() -> None:
    data_dir = tempfile.mkdtemp(prefix="vacsim-recorder-")
    client = TestClient(create_app(data_dir))

    body = create_body()
    created = record("create", "POST", "/api/v1/scenarios",
                     client.post("/api/v1/scenarios", json=body), request_body=body)
    sid = created["id"]

    record("scenario_draft", "GET", f"/api/v1/scenarios/{sid}",
           client.get(f"/api/v1/scenarios/{sid}"))
    record("allocation_unready", "GET", f"/api/v1/scenarios/{sid}/allocation?bucket=20",
           client.get(f"/api/v1/scenarios/{sid}/allocation?bucket=20"))

    record("train_accepted", "POST", f"/api/v1/scenarios/{sid}/train",
           client.post(f"/api/v1/scenarios/{sid}/train"))

    # poll like the console does and keep the first doc seen per status
    sequence = []
    deadline = time.time() + 180
    while time.time() < deadline:
        resp = client.get(f"/api/v1/scenarios/{sid}")
        doc = resp.json()
        if not sequence or sequence[-1]["body"]["status"] != doc["status"]:
            sequence.append({
                "method": "GET", "path": f"/api/v1/scenarios/{sid}",
                "request": None, "status": resp.status_code, "body": doc,
            })
        if doc["status"] in ("ready", "failed"):
            break
        time.sleep(0.25)
    assert sequence[-1]["body"]["status"] == "ready", sequence[-1]
    exchanges["status_sequence"] = sequence

    record("scenario_ready", "GET", f"/api/v1/scenarios/{sid}",
           client.get(f"/api/v1/scenarios/{sid}"))
    run_id = exchanges["scenario_ready"]["body"]["run_id"]  # type: ignore[index]

    record("allocation_b20", "GET", f"/api/v1/scenarios/{sid}/allocation?bucket=20",
           client.get(f"/api/v1/scenarios/{sid}/allocation?bucket=20"))
    record("allocation_b60", "GET", f"/api/v1/scenarios/{sid}/allocation?bucket=60",
           client.get(f"/api/v1/scenarios/{sid}/allocation?bucket=60"))
    record("allocation_bad_bucket", "GET", f"/api/v1/scenarios/{sid}/allocation?bucket=37",
           client.get(f"/api/v1/scenarios/{sid}/allocation?bucket=37"))
    record("rewards", "GET", f"/api/v1/scenarios/{sid}/runs/{run_id}/rewards",
           client.get(f"/api/v1/scenarios/{sid}/runs/{run_id}/rewards"))

    whatif_default = {"bucket_size": 20}
    first = client.post(f"/api/v1/scenarios/{sid}/whatif", json=whatif_default)
    again = client.post(f"/api/v1/scenarios/{sid}/whatif", json=whatif_default)
    assert first.json() == again.json(), "what-if is not read-only"
    record("whatif_default", "POST", f"/api/v1/scenarios/{sid}/whatif",
           first, request_body=whatif_default)

    doses0 = {"bucket_size": 20, "doses": 0}
    record("whatif_doses0", "POST", f"/api/v1/scenarios/{sid}/whatif",
           client.post(f"/api/v1/scenarios/{sid}/whatif", json=doses0),
           request_body=doses0)

    eff05 = {"bucket_size": 20, "efficacy": 0.5}
    record("whatif_eff05", "POST", f"/api/v1/scenarios/{sid}/whatif",
           client.post(f"/api/v1/scenarios/{sid}/whatif", json=eff05),
           request_body=eff05)

    bad_overrides = {"bucket_size": 20, "context_overrides": {"atlantis": {"susceptible": 1.0}}}
    record("whatif_invalid", "POST", f"/api/v1/scenarios/{sid}/whatif",
           client.post(f"/api/v1/scenarios/{sid}/whatif", json=bad_overrides),
           request_body=bad_overrides)

    observed = {"valley": 500.0, "port": 120.0, "plains": 280.0}
    alloc = exchanges["allocation_b20"]["body"]  # type: ignore[index]

    def feedback_body(day):
        return {
            "date": day.isoformat(),
            "bucket_size": 20,
            "chosen": alloc["percentages"],
            "susceptible_change": observed,
        }

    fb1 = feedback_body(DIST + timedelta(days=1))
    record("feedback_1", "POST", f"/api/v1/scenarios/{sid}/feedback",
           client.post(f"/api/v1/scenarios/{sid}/feedback", json=fb1), request_body=fb1)
    record("allocation_after_feedback1", "GET",
           f"/api/v1/scenarios/{sid}/allocation?bucket=20",
           client.get(f"/api/v1/scenarios/{sid}/allocation?bucket=20"))

    fb2 = feedback_body(DIST + timedelta(days=2))
    record("feedback_2", "POST", f"/api/v1/scenarios/{sid}/feedback",
           client.post(f"/api/v1/scenarios/{sid}/feedback", json=fb2), request_body=fb2)
    record("allocation_after_feedback2", "GET",
           f"/api/v1/scenarios/{sid}/allocation?bucket=20",
           client.get(f"/api/v1/scenarios/{sid}/allocation?bucket=20"))

    fb_dup = feedback_body(DIST + timedelta(days=2))
    record("feedback_out_of_order", "POST", f"/api/v1/scenarios/{sid}/feedback",
           client.post(f"/api/v1/scenarios/{sid}/feedback", json=fb_dup), request_body=fb_dup)

    # a scenario whose training fails at ingest: config names a ghost region
    ghost_body = create_body(regions=["valley", "port", "plains", "ghost"],
                             env={"bucket_size": 20, "batch_size": 30_000,
                                  "recipients_per_day": 4, "reward_width": 4e-3})
    ghost = client.post("/api/v1/scenarios", json=ghost_body).json()
    client.post(f"/api/v1/scenarios/{ghost['id']}/train")
    for _ in range(400):
        doc = client.get(f"/api/v1/scenarios/{ghost['id']}").json()
        if doc["status"] in ("ready", "failed"):
            break
        time.sleep(0.1)
    assert doc["status"] == "failed", doc
    record("scenario_failed", "GET", f"/api/v1/scenarios/{ghost['id']}",
           client.get(f"/api/v1/scenarios/{ghost['id']}"))

    record("scenario_unknown", "GET", "/api/v1/scenarios/s9999",
           client.get("/api/v1/scenarios/s9999"))

    OUT_PATH.parent.mkdir(parents=True, exist_ok=True)
    OUT_PATH.write_text(
        json.dumps({"scenario_id": sid, "exchanges": exchanges}, indent=1, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {OUT_PATH} with {len(exchanges)} exchanges")


if __name__ == "__main__":
    main()
