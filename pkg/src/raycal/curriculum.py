"""Three-stage curriculum trainer.

Stage progression by epoch::

    epoch < e1        GEOMETRY_ONLY    encoder + hypernetwork
    e1 <= epoch < e2  PLUS_FOCAL       + intrinsics
    epoch >= e2       PLUS_DISTORTION  + distortion net

Each of the four parameter groups (encoder, hypernet, distortion,
intrinsics) has its own Adam learning rate and is clipped to a global
gradient norm of ``grad_clip`` before its update. Frozen groups have
``requires_grad`` switched off, so they never receive a gradient.
"""

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tape, Tensor, adam_step
from .camera import DistortionNet, intrinsics_init, pixels_to_rays
from .checkpoint import load_buffers, save_buffers
from .config import TrainConfig
from .errors import ConfigurationError, DimensionError, NumericError
from .geometry import SE3Pose, relative_pose, rot6d_to_matrix
from .losses import LossParts, latent_loss, photometric_loss, pose_loss, total_loss
from .nets import Encoder, Hypernetwork, LFNArchitecture, lfn_render, split_pose9
from .simscene import DatasetManifest, label_subset

GROUPS = ("encoder", "hypernet", "distortion", "intrinsics")
HISTORY_HEADER = ("epoch", "step", "stage", "L_ph", "L_trans", "L_rot", "L_enc", "total", "f")


class Stage(enum.IntEnum):
    GEOMETRY_ONLY = 0
    PLUS_FOCAL = 1
    PLUS_DISTORTION = 2


def curriculum_advance(epoch: int, config: TrainConfig) -> Stage:
    if config.e1 > config.e2:
        raise ConfigurationError(f"stage boundary e1={config.e1} exceeds e2={config.e2}")
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < config.e1:
        return Stage.GEOMETRY_ONLY
    if epoch < config.e2:
        return Stage.PLUS_FOCAL
    return Stage.PLUS_DISTORTION


class Model:
    """All learnable pieces: encoder, hypernetwork, intrinsics, distortion net."""

    def __init__(self, config: TrainConfig, width: int, height: int):
        self.config = config
        self.width, self.height = width, height
        seed = config.seed
        self.arch = LFNArchitecture(config.lfn_width, config.lfn_layers)
        self.encoder = Encoder(channels=config.encoder_channels, strides=config.encoder_strides,
                               pose_hidden=config.pose_hidden, scene_width=config.scene_width,
                               latent_dim=config.latent_dim, seed=[seed, 1])
        self.hypernet = Hypernetwork(self.arch, config.latent_dim, config.hyper_width,
                                     config.hyper_layers, seed=[seed, 2])
        self.intrinsics = intrinsics_init(width, height, config.separate_focal)
        self.distortion = DistortionNet(width, height, config.distortion_width,
                                        config.distortion_layers, seed=[seed, 3])

    def groups(self) -> dict:
        intr = self.intrinsics.focal_params()
        if self.config.learn_principal_point:
            intr = intr + self.intrinsics.principal_params()
        return {
            "encoder": self.encoder.parameters(),
            "hypernet": self.hypernet.parameters(),
            "distortion": self.distortion.parameters(),
            "intrinsics": intr,
        }

    def named_parameters(self) -> dict:
        out = {}
        out.update(self.encoder.named_parameters())
        out.update(self.hypernet.named_parameters())
        out.update(self.distortion.named_parameters())
        out.update(self.intrinsics.named_parameters())
        return out

    def state_dict(self) -> dict:
        return {k: p.data.copy() for k, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict) -> None:
        params = self.named_parameters()
        for k, p in params.items():
            if k not in state:
                raise DimensionError(f"checkpoint lacks parameter {k}")
            if state[k].shape != p.shape:
                raise DimensionError(f"{k}: checkpoint shape {state[k].shape} != model {p.shape}")
            p.data = np.array(state[k], dtype=np.float64)

    @property
    def focal(self) -> float:
        return self.intrinsics.f.item()

    def predict_pose(self, frame_i, frame_j):
        """Differentiable relative pose ``(R, t, pose9, z)`` for a frame pair."""
        pose9, z = self.encoder.encode(frame_i, frame_j)
        t, r6 = split_pose9(pose9)
        R = rot6d_to_matrix(r6[0:3], r6[3:6])
        return R, t, pose9, z

    def render(self, psi, pixels, pose=None) -> Tensor:
        rays = pixels_to_rays(pixels, self.intrinsics, self.distortion, pose)
        return lfn_render(psi, rays, self.arch)


@dataclass
class StepReport:
    epoch: int
    step: int
    stage: Stage
    losses: dict
    total: float
    grad_norms: dict
    f: float

    def history_row(self) -> str:
        v = self.losses
        vals = [self.epoch, self.step, self.stage.name, v["photometric"], v["trans"], v["rot"],
                v["enc"], self.total, self.f]
        return "\t".join(repr(float(x)) if isinstance(x, float) else str(x) for x in vals)


@dataclass
class Checkpoint:
    params: dict
    adam: dict
    meta: dict

    @property
    def epoch(self) -> int:
        return self.meta["epoch"]

    @property
    def stage(self) -> Stage:
        return Stage(self.meta["stage"])

    @property
    def config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.meta["config"])

    def save(self, path) -> None:
        buffers = {f"param/{k}": v for k, v in self.params.items()}
        counters = {}
        for k, (m, v, count) in self.adam.items():
            buffers[f"adam.m/{k}"] = m
            buffers[f"adam.v/{k}"] = v
            counters[k] = count
        save_buffers(path, buffers, dict(self.meta, adam_steps=counters))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        buffers, meta = load_buffers(path)
        params = {k[6:]: v for k, v in buffers.items() if k.startswith("param/")}
        counters = meta.pop("adam_steps", {})
        adam = {k: (buffers[f"adam.m/{k}"], buffers[f"adam.v/{k}"], int(n)) for k, n in counters.items()}
        return cls(params, adam, meta)

    def model(self) -> Model:
        m = Model(self.config, self.meta["width"], self.meta["height"])
        m.load_state_dict(self.params)
        return m


def labelled_pairs(manifest: DatasetManifest):
    """Relative-pose targets for pairs ``(i, i+1)`` whose second frame is labelled."""
    out = {}
    for i in range(len(manifest) - 1):
        a, b = manifest.frames[i], manifest.frames[i + 1]
        if b.labelled and a.t is not None and b.t is not None:
            out[i] = relative_pose(a.pose, b.pose)
    return out


class Trainer:
    """Holds the model, optimiser state, data and RNG of one training run."""

    def __init__(self, manifest: DatasetManifest, config: TrainConfig, frames=None):
        config.validate()
        self.config = config
        if config.labelled_fraction is not None:
            manifest = label_subset(manifest, config.labelled_fraction, config.seed)
        self.manifest = manifest
        self.frames = manifest.load_frames() if frames is None else np.asarray(frames, dtype=np.float64)
        if len(self.frames) < 2:
            raise ConfigurationError("need at least two frames to form a pair")
        _, _, self.height, self.width = self.frames.shape
        self.colors = self.frames.reshape(len(self.frames), 3, -1).transpose(0, 2, 1)
        self.labels = labelled_pairs(manifest)
        w = config.weights
        if (w.trans > 0 or w.rot > 0) and not self.labels:
            raise ConfigurationError(
                "pose loss weights are non-zero but no labelled pairs exist; metric scale is unobservable")
        self.model = Model(config, self.width, self.height)
        self.lrs = {"encoder": config.lr_encoder, "hypernet": config.lr_hypernet,
                    "distortion": config.lr_distortion, "intrinsics": config.lr_intrinsics}
        self.adam = {}
        for g, params in self.model.groups().items():
            for p in params:
                self.adam[p.name] = AdamState.for_param(p, self.lrs[g])
        self.rng = np.random.default_rng([config.seed, 7])
        self.epoch = 0
        self.step = 0
        self.stage = Stage.GEOMETRY_ONLY

    # -- bookkeeping --------------------------------------------------------
    def active_groups(self, stage: Stage):
        cfg = self.config
        active = ["encoder"]
        if cfg.photometric:
            active.append("hypernet")
            if stage >= Stage.PLUS_FOCAL and cfg.train_intrinsics:
                active.append("intrinsics")
            if stage >= Stage.PLUS_DISTORTION and cfg.train_distortion:
                active.append("distortion")
        return active

    def _set_trainable(self, active):
        groups = self.model.groups()
        for name, params in groups.items():
            for p in params:
                p.requires_grad = name in active
                p.grad = None
        # principal point is a tensor too; keep it frozen unless it is in a group
        if not self.config.learn_principal_point:
            for p in self.model.intrinsics.principal_params():
                p.requires_grad = False

    def training_pairs(self):
        n = len(self.frames) - 1
        if self.config.photometric:
            return list(range(n))
        return sorted(self.labels)

    # -- one optimisation step ---------------------------------------------
    def _sample_pixels(self, n):
        idx = self.rng.choice(self.width * self.height, size=n, replace=False)
        px = np.stack([idx % self.width + 0.5, idx // self.width + 0.5], axis=1)
        return idx, px

    def forward(self, pairs):
        """Build the loss graph for a batch of pair indices on the active tape.

        The hypernetwork runs once on the stacked latents, which amortises its
        large output layer over the batch.
        """
        cfg, model = self.config, self.model
        poses, zs = [], []
        pred_t, true_t, pred_R, true_R = [], [], [], []
        for i in pairs:
            R, t, _, z = model.predict_pose(self.frames[i], self.frames[i + 1])
            poses.append((R, t))
            zs.append(z)
            if i in self.labels:
                gt = self.labels[i]
                pred_t.append(t)
                true_t.append(gt.t)
                pred_R.append(R)
                true_R.append(gt.R)
        parts = LossParts(enc=latent_loss(zs, cfg.latent_mode))
        if cfg.photometric:
            psis = model.hypernet(ad.stack(zs, axis=0))
            n = cfg.rays_per_step // 2
            for k, i in enumerate(pairs):
                psi = psis[k]
                idx_i, px_i = self._sample_pixels(n)
                idx_j, px_j = self._sample_pixels(cfg.rays_per_step - n)
                pred = ad.concat([model.render(psi, px_i), model.render(psi, px_j, poses[k])], axis=0)
                truth = np.concatenate([self.colors[i][idx_i], self.colors[i + 1][idx_j]], axis=0)
                term = photometric_loss(pred, truth)
                parts.photometric = term if parts.photometric is None else parts.photometric + term
        if pred_t:
            parts.trans, parts.rot = pose_loss(pred_t, true_t, pred_R, true_R)
        return parts

    def train_step(self, pairs, stage: Optional[Stage] = None) -> StepReport:
        stage = self.stage if stage is None else stage
        active = self.active_groups(stage)
        self._set_trainable(active)
        with Tape() as tape:
            parts = self.forward(pairs)
            loss = total_loss(parts, self.config.weights)
        if not np.isfinite(loss.item()):
            bad = tape.first_nonfinite()
            where = f"op '{bad[1]}' (node {bad[0]})" if bad else "an unrecorded op"
            raise NumericError(f"non-finite loss at step {self.step}; first non-finite value from {where}")
        ad.backward(loss, tape)
        norms = {}
        groups = self.model.groups()
        for name in active:
            params = [p for p in groups[name] if p.grad is not None]
            norm = ad.grad_norm(params)
            norms[name] = norm
            scale = min(1.0, self.config.grad_clip / norm) if norm > 0 else 1.0
            for p in params:
                adam_step(p, self.adam[p.name], scale=scale)
        for params in groups.values():
            for p in params:
                p.grad = None
        report = StepReport(self.epoch, self.step, stage, parts.values(), loss.item(), norms,
                            self.model.focal)
        self.step += 1
        return report

    def run_epoch(self):
        self.stage = curriculum_advance(self.epoch, self.config)
        pairs = self.training_pairs()
        order = self.rng.permutation(len(pairs))
        bs = self.config.batch_size
        reports = []
        for s in range(0, len(order), bs):
            reports.append(self.train_step([pairs[k] for k in order[s:s + bs]], self.stage))
        self.epoch += 1
        return reports

    # -- checkpoints ----------------------------------------------------------
    def checkpoint(self) -> Checkpoint:
        adam = {k: (s.m.copy(), s.v.copy(), s.step_count) for k, s in self.adam.items()}
        meta = {"epoch": self.epoch, "step": self.step, "stage": int(self.stage),
                "rng_state": self.rng.bit_generator.state, "config": self.config.to_dict(),
                "width": self.width, "height": self.height}
        return Checkpoint(self.model.state_dict(), adam, meta)

    def restore(self, ckpt: Checkpoint) -> None:
        self.model.load_state_dict(ckpt.params)
        for k, (m, v, count) in ckpt.adam.items():
            st = self.adam[k]
            st.m[...] = m
            st.v[...] = v
            st.step_count = count
        self.rng.bit_generator.state = ckpt.meta["rng_state"]
        self.epoch = ckpt.meta["epoch"]
        self.step = ckpt.meta["step"]
        self.stage = Stage(ckpt.meta["stage"])


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list = field(default_factory=list)
    trainer: Optional[Trainer] = None


def write_history(reports, path, append=False) -> None:
    mode = "a" if append else "w"
    with open(path, mode) as fh:
        if not append:
            fh.write("\t".join(HISTORY_HEADER) + "\n")
        for r in reports:
            fh.write(r.history_row() + "\n")


def read_history(path):
    rows = []
    lines = Path(path).read_text().splitlines()
    for line in lines[1:]:
        c = line.split("\t")
        rows.append({"epoch": int(c[0]), "step": int(c[1]), "stage": c[2],
                     **{k: float(v) for k, v in zip(HISTORY_HEADER[3:], c[3:])}})
    return rows


def train_run(manifest: DatasetManifest, config: TrainConfig, out_dir=None, resume=None,
              frames=None, progress=None) -> TrainResult:
    """Train for ``config.epochs`` epochs over consecutive-frame pairs.

    With ``out_dir`` the history (``history.tsv``), periodic checkpoints
    (``checkpoints/epoch_NNNN.ckpt``) and ``final.ckpt`` are written there.
    ``resume`` is a :class:`Checkpoint` (or path) to continue from.
    """
    trainer = Trainer(manifest, config, frames)
    if resume is not None:
        trainer.restore(resume if isinstance(resume, Checkpoint) else Checkpoint.load(resume))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_history([], out / "history.tsv", append=resume is not None and (out / "history.tsv").exists())
    history = []
    while trainer.epoch < config.epochs:
        reports = trainer.run_epoch()
        history.extend(reports)
        if out is not None:
            write_history(reports, out / "history.tsv", append=True)
            if config.checkpoint_every and trainer.epoch % config.checkpoint_every == 0:
                (out / "checkpoints").mkdir(exist_ok=True)
                trainer.checkpoint().save(out / "checkpoints" / f"epoch_{trainer.epoch:04d}.ckpt")
        if progress is not None:
            progress(trainer, reports)
    ckpt = trainer.checkpoint()
    if out is not None:
        ckpt.save(out / "final.ckpt")
    return TrainResult(ckpt, history, trainer)


def infer_odometry(frame_i, frame_j, model) -> SE3Pose:
    """Relative pose of ``frame_j`` in the frame of ``frame_i`` (encoder only)."""
    if isinstance(model, Checkpoint):
        model = model.model()
    fi, fj = np.asarray(frame_i, dtype=float), np.asarray(frame_j, dtype=float)
    if fi.shape != fj.shape or fi.shape != (3, model.height, model.width):
        raise DimensionError(f"frames must be (3, {model.height}, {model.width}), got {fi.shape}, {fj.shape}")
    R, t, _, _ = model.predict_pose(fi, fj)
    return SE3Pose(R.data, t.data)
