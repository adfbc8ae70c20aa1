"""Drive the HTTP service end to end from Python: create a session, upload
inputs, step chunk by chunk, and read back memory/tracks/metrics.

Run: python demos/08_service_session.py
"""

import json
import threading
import urllib.request

import numpy as np

from worldtraj.fixtures import pan_away_fixture
from worldtraj.geometry import camera_script_to_records
from worldtraj.service import make_server
from worldtraj.trajectory import trajectory_to_record
from worldtraj.worldsim import scene_to_record

server = make_server("./demo-service-data", port=0)
threading.Thread(target=server.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{server.server_address[1]}"
print("service at", base)


def call(method, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(base + path, data=data, method=method)
    with urllib.request.urlopen(req, timeout=30) as resp:
        raw = resp.read()
        return json.loads(raw) if "json" in resp.headers.get("Content-Type", "") else raw


scene, sketch, cameras, cfg_kwargs, t1 = pan_away_fixture()
session = call("POST", "/sessions", {
    "horizon": cfg_kwargs["horizon"], "chunk_size": cfg_kwargs["chunk_size"],
    "tau": cfg_kwargs["tau"], "preexit_k": cfg_kwargs["preexit_k"], "refine_depth": False,
})
sid = session["id"]
print("session", sid, "chunk size", session["config"]["chunk_size"])

call("POST", f"/sessions/{sid}/scene", scene_to_record(scene))
call("POST", f"/sessions/{sid}/camera", camera_script_to_records(cameras))
resolved = call("POST", f"/sessions/{sid}/trajectory", trajectory_to_record(sketch))
print("click resolved to object:", resolved["object_id"])

while True:
    chunk = call("POST", f"/sessions/{sid}/step")
    if chunk.get("done"):
        break
    seg = chunk["tracks"]["t0"]
    vis = sum(1 for p in seg if p["visible"])
    print(f"chunk {chunk['chunk']}: frames [{chunk['frame_start']},{chunk['frame_end']}) "
          f"visible {vis}/{len(seg)}  events={chunk['events']}")

memory = call("GET", f"/sessions/{sid}/memory")
masked = [e["frame"] for c in memory["chunks"] for e in c["entries"] if not e["retained"]]
print("masked memory frames:", sorted(set(masked)))
metrics = call("GET", f"/sessions/{sid}/metrics")
print("metrics:", {k: metrics[k] for k in ("te", "psnr", "ssim")})
png = call("GET", f"/sessions/{sid}/frames/0")
print("frame 0 PNG bytes:", len(png))

server.shutdown()
server.server_close()
