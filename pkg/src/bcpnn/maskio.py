"""Mask snapshots as plain-text PGM images plus a JSON index.

One P2 graymap per HCU per epoch (a 1 x n_inputs row of 0/1 pixels), so
receptive-field development can be inspected with any image viewer or a
text editor, no toolchain required.  ``index.json`` maps each epoch to its
file list; stacking an epoch's images row-wise reproduces the full
(n_hcus x n_inputs) mask grid losslessly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class SnapshotError(ValueError):
    """A mask snapshot file is malformed."""


def write_pgm(path, values: np.ndarray, comment: str = "") -> None:
    """Write a 0/1 array (1-D row or 2-D grid) as a plain-text P2 PGM."""
    grid = np.atleast_2d(np.asarray(values).astype(np.uint8))
    h, w = grid.shape
    lines = ["P2"]
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"{w} {h}")
    lines.append("1")
    lines.extend(" ".join(str(v) for v in row) for row in grid)
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    """Read a plain-text P2 PGM back into a (height, width) uint8 array."""
    tokens: list[str] = []
    for line in Path(path).read_text().splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            tokens.extend(body.split())
    if len(tokens) < 4 or tokens[0] != "P2":
        raise SnapshotError(f"{path} is not a plain-text P2 graymap")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pixels = np.asarray([int(t) for t in tokens[4:]], dtype=np.uint8)
    if pixels.size != w * h or np.any(pixels > maxval):
        raise SnapshotError(f"{path} has inconsistent pixel data")
    return pixels.reshape(h, w)


def snapshot_mask(layer, out_dir, epoch: int, comment: str = "") -> list[str]:
    """Write one PGM per HCU for this epoch and update the JSON index.

    Returns the relative paths of the files written.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for h in range(layer.geometry.n_hcus):
        name = f"epoch{epoch:04d}_hcu{h:03d}.pgm"
        tag = f"epoch={epoch} hcu={h}"
        write_pgm(out_dir / name, layer.mask[h], comment=f"{tag} {comment}".strip())
        names.append(name)

    index_path = out_dir / "index.json"
    index = json.loads(index_path.read_text()) if index_path.exists() else {"epochs": {}}
    index["epochs"][str(epoch)] = names
    index_path.write_text(json.dumps(index, indent=2, sort_keys=True))
    return names


def read_snapshot(out_dir, epoch: int) -> np.ndarray:
    """Reassemble one epoch's snapshot into the (n_hcus, n_inputs) mask grid."""
    out_dir = Path(out_dir)
    index = json.loads((out_dir / "index.json").read_text())
    try:
        names = index["epochs"][str(epoch)]
    except KeyError:
        raise SnapshotError(f"no snapshot for epoch {epoch} in {out_dir}") from None
    rows = [read_pgm(out_dir / name) for name in names]
    return np.vstack(rows)
