"""Deterministic synthetic audio-visual scenes and their on-disk format.

Each scene is a small RGB image of flat-colored shapes over a dark
background plus a 1 s waveform that sums one tone chord per visible
class, so the sounding classes and the visible classes always coincide.
A separate noise pool holds off-screen waveforms (tones at frequency
bins disjoint from every class tone, plus broadband bursts).

A dataset directory is ``manifest.json`` plus one ``.arr`` file per
stored array; the manifest records class specs, seeds, per-file SHA-256
checksums and the train/test split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio
from .arrayio import load_array, save_array, sha256_file

FORMAT_VERSION = 1
BACKGROUND = 0
BACKGROUND_COLOR = (0.12, 0.12, 0.12)
SHAPE_KINDS = ("disc", "square", "triangle")


class GenerationError(ValueError):
    pass


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ClassSpec:
    """One semantic class: how it looks and how it sounds."""

    class_id: int
    shape: str
    color: tuple
    tone_bins: tuple
    tone_amps: tuple

    def to_json(self) -> dict:
        return {
            "class_id": self.class_id,
            "shape": self.shape,
            "color": list(self.color),
            "tone_bins": list(self.tone_bins),
            "tone_amps": list(self.tone_amps),
        }

    @staticmethod
    def from_json(d: dict) -> "ClassSpec":
        return ClassSpec(
            class_id=int(d["class_id"]),
            shape=str(d["shape"]),
            color=tuple(float(c) for c in d["color"]),
            tone_bins=tuple(int(b) for b in d["tone_bins"]),
            tone_amps=tuple(float(a) for a in d["tone_amps"]),
        )


def default_classes() -> list:
    return [
        ClassSpec(1, "disc", (0.85, 0.15, 0.15), (24, 48), (1.0, 0.5)),
        ClassSpec(2, "square", (0.15, 0.80, 0.20), (56, 112), (1.0, 0.5)),
        ClassSpec(3, "triangle", (0.20, 0.35, 0.90), (88, 176), (1.0, 0.5)),
        ClassSpec(4, "disc", (0.90, 0.85, 0.20), (120, 240), (1.0, 0.4)),
    ]


DEFAULT_NOISE_BINS = (16, 36, 68, 100, 140, 160, 200, 220)


@dataclass
class DataConfig:
    height: int = 32
    width: int = 32
    num_scenes: int = 2000
    multi_source_fraction: float = 0.5
    max_sources: int = 2
    image_noise: float = 0.02
    train_fraction: float = 0.8
    noise_pool_size: int = 32
    classes: list = field(default_factory=default_classes)
    noise_bins: tuple = DEFAULT_NOISE_BINS

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def to_json(self) -> dict:
        d = {
            "height": self.height,
            "width": self.width,
            "num_scenes": self.num_scenes,
            "multi_source_fraction": self.multi_source_fraction,
            "max_sources": self.max_sources,
            "image_noise": self.image_noise,
            "train_fraction": self.train_fraction,
            "noise_pool_size": self.noise_pool_size,
            "classes": [c.to_json() for c in self.classes],
            "noise_bins": list(self.noise_bins),
        }
        return d

    @staticmethod
    def from_json(d: dict) -> "DataConfig":
        cfg = DataConfig(
            height=int(d.get("height", 32)),
            width=int(d.get("width", 32)),
            num_scenes=int(d.get("num_scenes", 2000)),
            multi_source_fraction=float(d.get("multi_source_fraction", 0.5)),
            max_sources=int(d.get("max_sources", 2)),
            image_noise=float(d.get("image_noise", 0.02)),
            train_fraction=float(d.get("train_fraction", 0.8)),
            noise_pool_size=int(d.get("noise_pool_size", 32)),
            noise_bins=tuple(int(b) for b in d.get("noise_bins", DEFAULT_NOISE_BINS)),
        )
        if "classes" in d:
            cfg.classes = [ClassSpec.from_json(c) for c in d["classes"]]
        return cfg

    def validate(self) -> None:
        if self.num_classes < 2:
            raise GenerationError("need at least 2 classes")
        if self.height < 16 or self.width < 16:
            raise GenerationError("grid must be at least 16x16")
        if self.num_scenes < 1:
            raise GenerationError("need at least one scene")
        if not 1 <= self.max_sources <= self.num_classes:
            raise GenerationError("max_sources must be in [1, num_classes]")
        ids = [c.class_id for c in self.classes]
        if ids != list(range(1, self.num_classes + 1)):
            raise GenerationError("class ids must be 1..C (0 is background)")
        for c in self.classes:
            if c.shape not in SHAPE_KINDS:
                raise GenerationError(f"unknown shape kind {c.shape!r}")
            if len(c.tone_bins) != len(c.tone_amps):
                raise GenerationError("tone_bins and tone_amps must align")
        bins = sorted(b for c in self.classes for b in c.tone_bins)
        if any(b2 - b1 < 2 for b1, b2 in zip(bins, bins[1:])):
            raise GenerationError("class tone bins overlap (need >= 2 bins apart)")
        if any(b < 1 or b > audio.N_BINS for b in bins):
            raise GenerationError("tone bin outside spectrogram range")
        for nb in self.noise_bins:
            if any(abs(nb - b) < 2 for b in bins):
                raise GenerationError(f"noise bin {nb} collides with a class tone")
        # Largest bounding boxes for max_sources shapes must plausibly fit.
        if self.max_sources * 15 * 15 > 0.7 * self.height * self.width:
            raise GenerationError("too many shapes for this grid size")


@dataclass
class Scene:
    index: int
    image: np.ndarray
    labels: np.ndarray
    audio_samples: np.ndarray
    sounding: tuple

    _spec: np.ndarray = None

    def spectrogram(self) -> np.ndarray:
        if self._spec is None:
            self._spec = audio.stft_magnitude(self.audio_samples)
        return self._spec

    def audio_label(self, num_classes: int) -> np.ndarray:
        t = np.zeros(num_classes, dtype=np.int64)
        for k in self.sounding:
            t[k - 1] = 1
        return t


@dataclass
class SynthDataset:
    config: DataConfig
    seed: int
    scenes: list
    noise_waveforms: list
    noise_kinds: list
    train_indices: list
    test_indices: list
    root: Path = None

    _noise_specs: dict = field(default_factory=dict)

    def scenes_for(self, split: str) -> list:
        idx = {"train": self.train_indices, "test": self.test_indices}[split]
        return [self.scenes[i] for i in idx]

    def noise_spectrogram(self, j: int) -> np.ndarray:
        if j not in self._noise_specs:
            self._noise_specs[j] = audio.stft_magnitude(self.noise_waveforms[j])
        return self._noise_specs[j]


# -- rendering ----------------------------------------------------------------


def _shape_mask(kind: str, h: int, w: int, cy: int, cx: int, ext: int) -> np.ndarray:
    ys, xs = np.mgrid[0:h, 0:w]
    if kind == "disc":
        return (ys - cy) ** 2 + (xs - cx) ** 2 <= ext**2
    if kind == "square":
        return (np.abs(ys - cy) <= ext) & (np.abs(xs - cx) <= ext)
    if kind == "triangle":
        # Filled isoceles triangle pointing up, apex at (cy - ext, cx).
        dy = ys - (cy - ext)
        return (dy >= 0) & (dy <= 2 * ext) & (np.abs(xs - cx) <= dy * 0.62)
    raise GenerationError(f"unknown shape kind {kind!r}")


def _place_shapes(cfg: DataConfig, class_ids, rng) -> np.ndarray:
    """Render non-overlapping shapes; returns the (H, W) label map."""
    for _ in range(200):
        labels = np.zeros((cfg.height, cfg.width), dtype=np.int64)
        boxes = []
        ok = True
        for cid in class_ids:
            spec = cfg.classes[cid - 1]
            placed = False
            for _ in range(50):
                ext = int(rng.integers(4, 7))
                cy = int(rng.integers(ext + 1, cfg.height - ext - 1))
                cx = int(rng.integers(ext + 1, cfg.width - ext - 1))
                box = (cy - ext - 1, cy + ext + 1, cx - ext - 1, cx + ext + 1)
                if all(
                    box[1] < b[0] or b[1] < box[0] or box[3] < b[2] or b[3] < box[2]
                    for b in boxes
                ):
                    mask = _shape_mask(spec.shape, cfg.height, cfg.width, cy, cx, ext)
                    labels[mask] = cid
                    boxes.append(box)
                    placed = True
                    break
            if not placed:
                ok = False
                break
        if ok:
            return labels
    raise GenerationError("impossible placement: too many shapes for grid")


def _tone_waveform(bins, amps, scale: float, rng) -> np.ndarray:
    t = np.arange(audio.SAMPLE_RATE) / audio.SAMPLE_RATE
    wave = np.zeros(audio.SAMPLE_RATE)
    for b, a in zip(bins, amps):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave += scale * a * np.sin(2.0 * np.pi * audio.frequency_of_bin(b) * t + phase)
    return wave


def _make_scene(cfg: DataConfig, index: int, seed: int) -> Scene:
    rng = np.random.default_rng([seed, 0, index])
    multi = cfg.max_sources > 1 and rng.random() < cfg.multi_source_fraction
    n_src = int(rng.integers(2, cfg.max_sources + 1)) if multi else 1
    class_ids = sorted(
        int(c) + 1 for c in rng.choice(cfg.num_classes, size=n_src, replace=False)
    )
    labels = _place_shapes(cfg, class_ids, rng)

    image = np.empty((cfg.height, cfg.width, 3), dtype=np.float64)
    image[:] = BACKGROUND_COLOR
    for cid in class_ids:
        image[labels == cid] = cfg.classes[cid - 1].color
    image += rng.normal(0.0, cfg.image_noise, size=image.shape)
    image = np.clip(image, 0.0, 1.0).astype(np.float32)

    wave = np.zeros(audio.SAMPLE_RATE)
    for cid in class_ids:
        spec = cfg.classes[cid - 1]
        amp = rng.uniform(0.6, 1.0)
        wave += _tone_waveform(spec.tone_bins, spec.tone_amps, 0.4 * amp, rng)
    return Scene(
        index=index,
        image=image,
        labels=labels,
        audio_samples=wave.astype(np.float32),
        sounding=tuple(class_ids),
    )


def _make_noise(cfg: DataConfig, j: int, seed: int):
    rng = np.random.default_rng([seed, 1, j])
    if j % 4 == 3:
        kind = "burst"
        envelope = audio.hann_window(audio.SAMPLE_RATE)
        wave = rng.normal(0.0, 1.0, audio.SAMPLE_RATE) * envelope * 0.08
    else:
        kind = "tone"
        n = int(rng.integers(1, 3))
        bins = rng.choice(len(cfg.noise_bins), size=n, replace=False)
        wave = _tone_waveform(
            [cfg.noise_bins[b] for b in bins],
            [1.0] * n,
            0.4 * rng.uniform(0.5, 1.0),
            rng,
        )
    return wave.astype(np.float32), kind


# -- generation + persistence ---------------------------------------------------


def generate(cfg: DataConfig, seed: int, out_dir) -> SynthDataset:
    """Generate the dataset deterministically and write it under out_dir."""
    cfg.validate()
    out = Path(out_dir)
    (out / "scenes").mkdir(parents=True, exist_ok=True)
    (out / "noise").mkdir(parents=True, exist_ok=True)

    scenes = [_make_scene(cfg, i, seed) for i in range(cfg.num_scenes)]
    noise = [_make_noise(cfg, j, seed) for j in range(cfg.noise_pool_size)]

    order = np.random.default_rng([seed, 2]).permutation(cfg.num_scenes)
    n_train = int(round(cfg.train_fraction * cfg.num_scenes))
    train_idx = sorted(int(i) for i in order[:n_train])
    test_idx = sorted(int(i) for i in order[n_train:])
    split_of = {i: "train" for i in train_idx}
    split_of.update({i: "test" for i in test_idx})

    scene_entries = []
    for sc in scenes:
        stem = f"scenes/scene_{sc.index:05d}"
        files = {
            "image": f"{stem}_image.arr",
            "labels": f"{stem}_labels.arr",
            "audio": f"{stem}_audio.arr",
        }
        save_array(out / files["image"], sc.image)
        save_array(out / files["labels"], sc.labels.astype(np.float32))
        save_array(out / files["audio"], sc.audio_samples)
        scene_entries.append(
            {
                "index": sc.index,
                "split": split_of[sc.index],
                "sounding": list(sc.sounding),
                "files": files,
                "sha256": {k: sha256_file(out / v) for k, v in files.items()},
            }
        )

    noise_entries = []
    for j, (wave, kind) in enumerate(noise):
        fname = f"noise/noise_{j:03d}.arr"
        save_array(out / fname, wave)
        noise_entries.append({"file": fname, "kind": kind, "sha256": sha256_file(out / fname)})

    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": seed,
        "config": cfg.to_json(),
        "scenes": scene_entries,
        "noise": noise_entries,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)

    return SynthDataset(
        config=cfg,
        seed=seed,
        scenes=scenes,
        noise_waveforms=[w for w, _ in noise],
        noise_kinds=[k for _, k in noise],
        train_indices=train_idx,
        test_indices=test_idx,
        root=out,
    )


def load(path) -> SynthDataset:
    """Load a dataset directory, verifying version and checksums."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"missing manifest: {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetError(f"unsupported dataset format version {version}")
    cfg = DataConfig.from_json(manifest["config"])

    scenes = []
    train_idx, test_idx = [], []
    for entry in manifest["scenes"]:
        files = entry["files"]
        for key, rel in files.items():
            fpath = root / rel
            if not fpath.exists():
                raise DatasetError(f"missing array file: {fpath}")
            if sha256_file(fpath) != entry["sha256"][key]:
                raise DatasetError(f"checksum mismatch for {fpath}")
        labels = load_array(root / files["labels"]).astype(np.int64)
        scenes.append(
            Scene(
                index=int(entry["index"]),
                image=load_array(root / files["image"]),
                labels=labels,
                audio_samples=load_array(root / files["audio"]),
                sounding=tuple(int(c) for c in entry["sounding"]),
            )
        )
        (train_idx if entry["split"] == "train" else test_idx).append(int(entry["index"]))

    noise_waveforms, noise_kinds = [], []
    for entry in manifest["noise"]:
        fpath = root / entry["file"]
        if not fpath.exists():
            raise DatasetError(f"missing array file: {fpath}")
        if sha256_file(fpath) != entry["sha256"]:
            raise DatasetError(f"checksum mismatch for {fpath}")
        noise_waveforms.append(load_array(fpath).reshape(-1))
        noise_kinds.append(entry["kind"])

    return SynthDataset(
        config=cfg,
        seed=int(manifest["seed"]),
        scenes=scenes,
        noise_waveforms=noise_waveforms,
        noise_kinds=noise_kinds,
        train_indices=sorted(train_idx),
        test_indices=sorted(test_idx),
        root=root,
    )
