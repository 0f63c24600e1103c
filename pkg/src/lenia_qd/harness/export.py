"""PNG export of archive members and rollout frames."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from ..measures import GrowthConstraints
from ..sim import KernelBank, RetentionPolicy, SimConfig, Trajectory, rollout


def to_rgb_bytes(pixels: np.ndarray) -> np.ndarray:
    """(h, w, C) floats in [0, 1] to (h, w, 3) uint8 via floor(255 v + 0.5).

    One channel is repeated to grey, two channels get a zero blue plane and
    extra channels beyond three are dropped.
    """
    v = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    if v.ndim == 2:
        v = v[..., None]
    c = v.shape[-1]
    if c == 1:
        v = np.repeat(v, 3, axis=-1)
    elif c == 2:
        v = np.concatenate([v, np.zeros_like(v[..., :1])], axis=-1)
    else:
        v = v[..., :3]
    return np.floor(255.0 * v + 0.5).astype(np.uint8)


def write_png(pixels: np.ndarray, path, scale: int = 1) -> Path:
    img = Image.fromarray(to_rgb_bytes(pixels), mode="RGB")
    if scale != 1:
        img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path)
    return path


def member_filename(index: int, generation: int) -> str:
    return f"member-{index}-gen-{generation}.png"


def export_members(archive, out_dir, scale: int = 1) -> list[Path]:
    """One PNG per member (its final crop); an empty archive writes nothing."""
    members = archive.members() if hasattr(archive, "members") else list(archive)
    return [
        write_png(m.representative_crop, Path(out_dir) / member_filename(i, m.birth_generation), scale)
        for i, m in enumerate(members)
    ]


def export_frames(traj: Trajectory, out_dir, scale: int = 1) -> list[Path]:
    """Full-world frames when the trajectory kept them, retained crops otherwise."""
    out_dir = Path(out_dir)
    if traj.worlds:
        frames = [(step, w.cells) for step, w in traj.worlds]
    else:
        frames = [(c.source_step, c.pixels) for c in traj.crops]
    return [write_png(f, out_dir / f"frame-{step:05d}.png", scale) for step, f in frames]


def export_member_rollout(member, config: SimConfig, bank: KernelBank, out_dir, scale: int = 1,
                          stride: int = 1) -> list[Path]:
    """Re-simulate a member with every world kept and write each step as a PNG."""
    keep_all = GrowthConstraints(discard_n=0, m_min=0.0)
    traj = rollout(member.genotype, config, keep_all, RetentionPolicy(stride=stride, keep_worlds=True), bank)
    if not isinstance(traj, Trajectory):
        raise RuntimeError(f"rollout stopped early: {traj}")
    return export_frames(traj, out_dir, scale)
