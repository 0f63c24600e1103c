"""Self-describing snapshot files for archives and run state.

Layout::

    magic   8 bytes  b"LQDSNAP\\n"
    version u32 little-endian
    length  u64 little-endian, payload byte count
    sha256  32 bytes of the payload
    payload npz: "meta" (JSON text) plus member arrays

The encoder checkpoint (AURORA runs) lives next to the snapshot in
``<snapshot>.vae.npz``; the meta block records its file name and sha256.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..genotype import Genotype
from ..metrics import MetricsRecord
from ..qd import DescriptorSpec, Individual, MapElitesGrid, UnstructuredRepertoire
from .. import vae as vae_mod
from .config import RunConfig
from .pattern import parse_pattern, pattern_to_dict

MAGIC = b"LQDSNAP\n"
VERSION = 1
_HEADER = struct.Struct("<8sIQ32s")


class SnapshotError(Exception):
    pass


class CorruptSnapshot(SnapshotError):
    pass


class VersionMismatch(SnapshotError):
    pass


@dataclass
class Snapshot:
    config: RunConfig
    archive: MapElitesGrid | UnstructuredRepertoire
    generation: int
    evaluations: int
    cumulative_elites: int
    records: list[MetricsRecord]
    pattern: dict
    vae_checkpoint: bytes | None = None
    extra: dict = field(default_factory=dict)


def _members_payload(members: list[Individual]) -> dict[str, np.ndarray]:
    n = len(members)
    if n == 0:
        return {"genes": np.zeros((0, 0)), "fitness": np.zeros(0), "descriptors": np.zeros((0, 0)),
                "crops": np.zeros((0, 0, 0, 0), np.float32), "crop_counts": np.zeros(0, np.int64)}
    crops = [m.crops if m.crops is not None else np.zeros((0,) + members[0].crops.shape[1:], np.float32) for m in members]
    return {
        "genes": np.stack([m.genotype.genes for m in members]),
        "fitness": np.array([m.fitness for m in members], dtype=np.float64),
        "descriptors": np.stack([m.descriptor for m in members]),
        "crops": np.concatenate(crops).astype(np.float32),
        "crop_counts": np.array([len(c) for c in crops], dtype=np.int64),
    }


def encode_snapshot(snap: Snapshot, vae_file: str | None = None) -> bytes:
    archive = snap.archive
    members = archive.members()
    meta = {
        "config": snap.config.to_dict(),
        "generation": snap.generation,
        "evaluations": snap.evaluations,
        "cumulative_elites": snap.cumulative_elites,
        "records": [json.loads(r.to_json()) for r in snap.records],
        "pattern": snap.pattern,
        "summaries": [m.summary for m in members],
        "birth_generations": [m.birth_generation for m in members],
        "archive": {
            "kind": "grid" if isinstance(archive, MapElitesGrid) else "unstructured",
            "capacity": archive.capacity,
            "threshold": getattr(archive, "threshold", None),
            "resolution": list(archive.resolution) if isinstance(archive, MapElitesGrid) else None,
            "keys": archive.keys() if isinstance(archive, MapElitesGrid) else None,
        },
        "vae": None,
        "extra": snap.extra,
    }
    if snap.vae_checkpoint is not None:
        meta["vae"] = {"file": vae_file, "sha256": hashlib.sha256(snap.vae_checkpoint).hexdigest()}
    arrays = _members_payload(members)
    arrays["meta"] = np.array(json.dumps(_jsonable(meta)))
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    payload = buf.getvalue()
    return _HEADER.pack(MAGIC, VERSION, len(payload), hashlib.sha256(payload).digest()) + payload


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, float) and obj in (float("inf"), float("-inf")):
        return "inf" if obj > 0 else "-inf"
    return obj


def _unjson_config(data: dict) -> dict:
    c = dict(data["constraints"])
    for k, v in c.items():
        if v in ("inf", "-inf"):
            c[k] = float(v)
    sim = dict(data["sim"])
    data = dict(data, constraints=c, sim=sim)
    return data


def decode_snapshot(blob: bytes, vae_loader=None) -> Snapshot:
    if len(blob) < _HEADER.size:
        raise CorruptSnapshot(f"file is {len(blob)} bytes, shorter than the {_HEADER.size}-byte header")
    magic, version, length, digest = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CorruptSnapshot("bad magic bytes; not a snapshot file")
    if version != VERSION:
        raise VersionMismatch(f"snapshot version {version}, this build reads version {VERSION}")
    payload = blob[_HEADER.size:]
    if len(payload) != length:
        raise CorruptSnapshot(f"payload is {len(payload)} bytes, header says {length} (truncated?)")
    if hashlib.sha256(payload).digest() != digest:
        raise CorruptSnapshot("payload checksum mismatch")
    try:
        with np.load(io.BytesIO(payload), allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
        meta = json.loads(str(arrays.pop("meta")))
    except Exception as exc:
        raise CorruptSnapshot(f"unreadable payload: {exc}") from exc

    config = RunConfig.from_dict(_unjson_config(meta["config"]))
    pattern = parse_pattern(meta["pattern"])
    layout = pattern.layout()
    info = meta["archive"]
    if info["kind"] == "grid":
        spec = DescriptorSpec.named(config.descriptor, channels=config.sim.channels)
        archive = MapElitesGrid(spec, info["capacity"], tuple(info["resolution"]))
    else:
        archive = UnstructuredRepertoire(config.aurora.latent_dim, info["capacity"], info["threshold"])

    members = []
    offsets = np.concatenate([[0], np.cumsum(arrays["crop_counts"])])
    for i in range(len(arrays["fitness"])):
        members.append(Individual(
            genotype=Genotype(arrays["genes"][i], layout),
            fitness=float(arrays["fitness"][i]),
            descriptor=arrays["descriptors"][i].copy(),
            crops=arrays["crops"][offsets[i]: offsets[i + 1]].copy(),
            summary=meta["summaries"][i],
            birth_generation=int(meta["birth_generations"][i]),
        ))
    if isinstance(archive, MapElitesGrid):
        for key, m in zip(info["keys"], members):
            if archive.index(m.descriptor) != key:
                raise CorruptSnapshot(f"member in cell {key} does not map back to its cell")
            archive.cells[key] = m
    else:
        archive._members = members
        archive._rebuild()

    checkpoint = None
    if meta["vae"] is not None:
        if vae_loader is None:
            raise SnapshotError("snapshot references an encoder checkpoint but no loader was given")
        checkpoint = vae_loader(meta["vae"]["file"])
        if hashlib.sha256(checkpoint).hexdigest() != meta["vae"]["sha256"]:
            raise CorruptSnapshot(f"encoder checkpoint {meta['vae']['file']} does not match its recorded checksum")

    return Snapshot(
        config=config, archive=archive, generation=int(meta["generation"]),
        evaluations=int(meta["evaluations"]), cumulative_elites=int(meta["cumulative_elites"]),
        records=[MetricsRecord(**r) for r in meta["records"]], pattern=meta["pattern"],
        vae_checkpoint=checkpoint, extra=meta.get("extra", {}),
    )


def vae_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".vae.npz")


def write_snapshot(snap: Snapshot, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vae_file = None
    if snap.vae_checkpoint is not None:
        side = vae_path(path)
        side.write_bytes(snap.vae_checkpoint)
        vae_file = side.name
    path.write_bytes(encode_snapshot(snap, vae_file))
    return path


def read_snapshot(path) -> Snapshot:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise
    return decode_snapshot(blob, vae_loader=lambda name: (path.parent / name).read_bytes())


def snapshot_save(experiment, path) -> Path:
    """Write the archive and the full run state of ``experiment``."""
    checkpoint = None
    if experiment.model is not None:
        checkpoint = vae_mod.checkpoint_bytes(experiment.model, experiment.optimizer)
    snap = Snapshot(
        config=experiment.config, archive=experiment.archive, generation=experiment.generation,
        evaluations=experiment.evaluations, cumulative_elites=experiment.cumulative_elites,
        records=experiment.records, pattern=pattern_to_dict(experiment.pattern), vae_checkpoint=checkpoint,
    )
    return write_snapshot(snap, path)


def snapshot_load(path):
    """Archive stored in a snapshot file."""
    return read_snapshot(path).archive


def restore_experiment(path, out_dir=None, generations: int | None = None):
    from dataclasses import replace

    from .loop import Experiment

    snap = read_snapshot(path)
    config = snap.config if generations is None else replace(snap.config, generations=generations)
    exp = Experiment(config, out_dir, pattern=parse_pattern(snap.pattern))
    exp.archive = snap.archive
    exp.generation = snap.generation
    exp.evaluations = snap.evaluations
    exp.cumulative_elites = snap.cumulative_elites
    exp.records = list(snap.records)
    if snap.vae_checkpoint is not None:
        exp.model, exp.optimizer = vae_mod.load_checkpoint_bytes(snap.vae_checkpoint, exp.vae_config, config.vae)
    return exp
