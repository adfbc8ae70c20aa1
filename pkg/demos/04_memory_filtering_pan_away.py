"""The pan-away scenario: an object keeps moving while the camera looks
elsewhere. With state persistence on, it re-enters at the updated position
and the stale pre-exit memory frames are masked; with persistence off, the
world model re-anchors it to where memory last saw it.

Run: python demos/04_memory_filtering_pan_away.py
"""

import numpy as np

from worldtraj import RolloutConfig, run_rollout
from worldtraj.fixtures import pan_away_fixture
from worldtraj.rollout import reentry_position

scene, sketch, cameras, cfg_kwargs, t1 = pan_away_fixture()

for persist in (True, False):
    cfg = RolloutConfig(state_persistence=persist, refine_depth=False, **cfg_kwargs)
    result = run_rollout(scene, [sketch], cameras, cfg)
    event = result.events[0]
    anchored = reentry_position(result.tracks["t0"], event)
    rendered = dict(result.rendered_track("obj"))[event.t1]
    err = np.linalg.norm(rendered - anchored)
    label = "persistence ON " if persist else "stale baseline "
    print(f"{label} off-screen t0={event.t0} re-entry t1={event.t1} "
          f"re-entry error = {err:6.2f} px")

    reentry_chunk = result.memory_log[event.t1 // cfg.chunk_size]
    print(f"{'':16s}memory at re-entry chunk (frame: similarity, retained):")
    for e in reentry_chunk["entries"][:12]:
        mark = "KEPT" if e["retained"] else "MASKED"
        print(f"{'':18s}{e['frame']:3d}: {e['similarity']:.3f}  {mark}")
    print()
