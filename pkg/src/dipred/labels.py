"""Per-frame action labels, segment views, and the timeline CSV format."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

# Reserved ids; real action classes are non-negative.
GAP = -1
END = -2

RESERVED_NAMES = {GAP: "gap", END: "end"}


@dataclass
class LabelTimeline:
    """Per-frame class ids plus a name table.

    Segments are derived on demand, so they always partition the frame range
    and adjacent segments always carry different classes.
    """

    frames: np.ndarray
    class_names: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        for cid, name in RESERVED_NAMES.items():
            self.class_names.setdefault(cid, name)

    def __len__(self):
        return len(self.frames)

    def name_of(self, class_id):
        return self.class_names.get(class_id, str(class_id))

    def segments(self):
        """Maximal constant runs as (class_id, start_frame, end_frame) triples."""
        out = []
        n = len(self.frames)
        if n == 0:
            return out
        boundaries = np.flatnonzero(np.diff(self.frames)) + 1
        starts = np.concatenate(([0], boundaries))
        ends = np.concatenate((boundaries, [n]))
        for s, e in zip(starts, ends):
            out.append((int(self.frames[s]), int(s), int(e)))
        return out

    def action_starts(self):
        """(class_id, start_frame) for every real-action segment."""
        return [(c, s) for c, s, _ in self.segments() if c >= 0]

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "class_id"])
            for i, cid in enumerate(self.frames):
                writer.writerow([i, int(cid)])

    @classmethod
    def load_csv(cls, path, class_names=None):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["frame", "class_id"]:
                raise ValueError(f"unexpected timeline header {header}")
            rows = [(int(a), int(b)) for a, b in reader]
        rows.sort()
        if [r[0] for r in rows] != list(range(len(rows))):
            raise ValueError("timeline frames are not contiguous from 0")
        frames = np.array([b for _, b in rows], dtype=np.int64)
        return cls(frames, dict(class_names or {}))
