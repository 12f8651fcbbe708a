"""Mainline loops interleaving denoising with transform re-fitting.

Four modes:

* ``free_pixel``  - N prompts co-create an image and the transforms relating
  the prompt views; per-step lookahead rollouts feed dynamic matching.
* ``fixed_pixel`` - a source image's tiles are rearranged toward each prompt;
  rollouts run to completion from a re-noised arrangement and are matched
  back against the source.
* ``free_latent`` / ``fixed_latent`` - same loops with diffusion in a latent
  space: encode, fixed-ratio noise mixing, full-length rollouts, decode, and
  matching in pixel space.

All randomness is drawn from counter-based generators keyed by
(seed, purpose, step, prompt), so worker-pool size never changes results.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .assignment import (
    CopySpec,
    cross_cost_matrix,
    best_flip_config,
    best_ring_rotation,
    fit_energy,
    solve_rectangular,
)
from .denoise import DenoiseRequest, rollout
from .errors import BackendError, ConfigError
from .grids import Tiling, as_array, tiles_of
from .schedule import NoiseSchedule, denoise_update, fixed_ratio_weights, mix, weights_at
from .transforms import (
    FlipConfig,
    Identity,
    RingRotation,
    TilePermutation,
    TileSelection,
    apply,
    invert,
    relative,
)

MODES = ("free_pixel", "fixed_pixel", "free_latent", "fixed_latent")
TRANSFORM_KINDS = ("permutation", "rings", "flips")
OUTPUT_COMBINATIONS = ("first_rollout", "averaged")

DEFAULT_MAINLINE_STEPS = 15
DEFAULT_PIXEL_LOOKAHEAD = 5
DEFAULT_LATENT_ROLLOUT_STEPS = 50
DEFAULT_MIXING_RATIO = 0.02


def prompt_key(prompt: str) -> tuple[int, int]:
    """Stable 2x32-bit RNG key for a prompt, independent of its position."""
    d = hashlib.sha256(prompt.encode("utf-8")).digest()
    return int.from_bytes(d[:4], "little"), int.from_bytes(d[4:8], "little")


@dataclass
class EngineConfig:
    mode: str
    prompts: tuple
    transform_kind: str = "permutation"
    tiles: int = 8
    ring_count: int = 8
    ring_step: float = 5.0
    flip_divisions: tuple = (1, 4)
    mainline_steps: int = DEFAULT_MAINLINE_STEPS
    rollout_steps: int | None = None
    mixing_ratio: float = DEFAULT_MIXING_RATIO
    copies: object = None  # None, int, or per-tile sequence
    source_images: tuple = ()
    image_size: tuple | None = None
    seed: int = 0
    output_combination: str = "averaged"
    guidance_scale: float = 7.5
    schedule_kind: str = "linear"
    workers: int = 1

    @property
    def is_fixed(self) -> bool:
        return self.mode.startswith("fixed")

    @property
    def is_latent(self) -> bool:
        return self.mode.endswith("latent")

    @property
    def resolved_rollout_steps(self) -> int:
        if self.rollout_steps is not None:
            return self.rollout_steps
        return DEFAULT_LATENT_ROLLOUT_STEPS if self.is_latent else DEFAULT_PIXEL_LOOKAHEAD

    def resolved_image_shape(self) -> tuple:
        if self.is_fixed:
            return as_array(self.source_images[0]).shape
        if self.image_size is None:
            raise ConfigError("free modes require image_size (H, W, C)")
        h, w, *rest = self.image_size
        c = rest[0] if rest else 3
        return (int(h), int(w), int(c))

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.transform_kind not in TRANSFORM_KINDS:
            raise ConfigError(f"transform_kind must be one of {TRANSFORM_KINDS}")
        if self.output_combination not in OUTPUT_COMBINATIONS:
            raise ConfigError(f"output_combination must be one of {OUTPUT_COMBINATIONS}")
        if self.mainline_steps <= 0 or self.resolved_rollout_steps <= 0:
            raise ConfigError("step counts must be positive")
        if not 0.0 < self.mixing_ratio < 1.0:
            raise ConfigError("mixing_ratio must be in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        n = len(self.prompts)
        if self.is_fixed:
            if n < 1:
                raise ConfigError("fixed modes require at least one prompt")
            if not self.source_images:
                raise ConfigError("fixed modes require at least one source image")
            shapes = {as_array(s).shape for s in self.source_images}
            if len(shapes) != 1:
                raise ConfigError("all source images must share one shape")
        else:
            if n < 2:
                raise ConfigError("free modes require at least two prompts")
            if self.copies is not None:
                raise ConfigError("copy counts only apply to fixed modes")
            if self.source_images:
                raise ConfigError("free modes take no source image")
        h, w, c = self.resolved_image_shape()
        if self.transform_kind == "permutation":
            Tiling.for_image(h, w, self.tiles)  # raises with the divisibility rule
        elif self.transform_kind == "flips":
            if h != w:
                raise ConfigError("flip transforms require square images")
            for d in self.flip_divisions:
                if h % d:
                    raise ConfigError(
                        f"image side {h} is not divisible by flip division {d}"
                    )
        elif self.transform_kind == "rings":
            if self.ring_count <= 0 or 360.0 % self.ring_step:
                raise ConfigError("ring_count must be positive and ring_step divide 360")
        return self


@dataclass
class RunResult:
    images: list
    transforms: list
    change_trace: list
    per_prompt_trace: list
    energies: list
    shared_image: np.ndarray | None = None
    config: EngineConfig | None = None


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _map_parallel(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _params_of(t) -> np.ndarray:
    if isinstance(t, (TilePermutation, TileSelection)):
        return t.mapping
    if isinstance(t, RingRotation):
        return t.rotations
    if isinstance(t, FlipConfig):
        return np.concatenate([g.reshape(-1) for g in t.ops])
    if isinstance(t, Identity):
        return np.zeros(0, np.int64)
    raise TypeError(type(t).__name__)


def change_trace(history) -> list:
    """Per-step count of changed tile assignments along a permutation history."""
    maps = []
    for h in history:
        if isinstance(h, (TilePermutation, TileSelection)):
            maps.append(h.mapping)
        else:
            maps.append(np.asarray(h))
    return [int(np.sum(a != b)) for a, b in zip(maps, maps[1:])]


def _identity_transform(cfg: EngineConfig, shape) -> object:
    h, w, _ = shape
    if cfg.transform_kind == "permutation":
        tiling = Tiling.for_image(h, w, cfg.tiles)
        return TilePermutation(tiling=tiling, mapping=np.arange(tiling.tile_count))
    if cfg.transform_kind == "rings":
        return RingRotation(
            ring_count=cfg.ring_count,
            rotations=np.zeros(cfg.ring_count),
            angular_step=cfg.ring_step,
        )
    return FlipConfig(divisions=tuple(cfg.flip_divisions))


def _initial_free_transforms(cfg: EngineConfig, shape) -> list:
    """psi_T per prompt: identity anchor plus seeded random permutations."""
    psis = [Identity()]
    for i in range(1, len(cfg.prompts)):
        if cfg.transform_kind == "permutation":
            tiling = Tiling.for_image(shape[0], shape[1], cfg.tiles)
            mapping = rng.random_permutation(tiling.tile_count, cfg.seed, rng.TRANSFORM, i)
            psis.append(TilePermutation(tiling=tiling, mapping=mapping))
        else:
            psis.append(_identity_transform(cfg, shape))
    return psis


def _fit_transform(cfg: EngineConfig, anchor, target, shape):
    """Best transform taking `anchor` toward `target`; returns (transform, energy)."""
    h, w, _ = shape
    if cfg.transform_kind == "permutation":
        tiling = Tiling.for_image(h, w, cfg.tiles)
        src = tiles_of(anchor, tiling)
        dst = tiles_of(target, tiling)
        d = cross_cost_matrix(src, dst)
        assignment = solve_rectangular(d, CopySpec.uniform(tiling.tile_count, 1))
        t = TilePermutation(tiling=tiling, mapping=assignment.mapping)
        return t, assignment.total_cost
    if cfg.transform_kind == "rings":
        template = RingRotation(
            ring_count=cfg.ring_count,
            rotations=np.zeros(cfg.ring_count),
            angular_step=cfg.ring_step,
        )
        t = best_ring_rotation(anchor, target, template)
        return t, fit_energy(t, anchor, target)
    t = best_flip_config(anchor, target, cfg.flip_divisions)
    return t, fit_energy(t, anchor, target)


# --------------------------------------------------------------------------
# fixed-mode tile bank
# --------------------------------------------------------------------------


@dataclass
class _TileBank:
    tiling: Tiling
    tiles: np.ndarray  # (bank, th, tw, C), all basis images concatenated
    copies: CopySpec

    @classmethod
    def build(cls, cfg: EngineConfig, shape):
        h, w, _ = shape
        tiling = Tiling.for_image(h, w, cfg.tiles)
        stacks = [tiles_of(as_array(s), tiling) for s in cfg.source_images]
        bank = np.concatenate(stacks, axis=0)
        n = bank.shape[0]
        if cfg.copies is None:
            copies = CopySpec.uniform(n, 1)
        elif np.isscalar(cfg.copies):
            copies = CopySpec.uniform(n, int(cfg.copies))
        else:
            arr = np.asarray(cfg.copies, dtype=np.int64)
            if arr.shape != (n,):
                raise ConfigError(
                    f"per-tile copies must have length {n} "
                    f"({len(cfg.source_images)} source image(s) x {tiling.tile_count} tiles)"
                )
            copies = CopySpec(arr)
        return cls(tiling=tiling, tiles=bank, copies=copies)

    @property
    def plain_permutation(self) -> bool:
        return (
            self.tiles.shape[0] == self.tiling.tile_count
            and bool(np.all(self.copies.copies_per_tile == 1))
        )

    def identity_selection(self):
        n = self.tiling.tile_count
        if self.plain_permutation:
            return TilePermutation(tiling=self.tiling, mapping=np.arange(n))
        return TileSelection(
            tiling=self.tiling, mapping=np.arange(n), bank_size=self.tiles.shape[0]
        )

    def compose(self, sel) -> np.ndarray:
        if isinstance(sel, TileSelection):
            return sel.compose_from(self.tiles)
        from .grids import untile

        return untile(self.tiles[sel.mapping], self.tiling)

    def fit(self, target) -> tuple:
        dst = tiles_of(target, self.tiling)
        d = cross_cost_matrix(self.tiles, dst)
        assignment = solve_rectangular(d, self.copies)
        if self.plain_permutation:
            t = TilePermutation(tiling=self.tiling, mapping=assignment.mapping)
        else:
            t = TileSelection(
                tiling=self.tiling, mapping=assignment.mapping, bank_size=self.tiles.shape[0]
            )
        return t, assignment.total_cost


# --------------------------------------------------------------------------
# the Visual-Anagrams-style joint denoise step
# --------------------------------------------------------------------------


def anagram_step(x, transforms, sessions, t, sched: NoiseSchedule,
                 guidance_scale: float = 7.5, seed: int = 0,
                 workers: int = 1) -> np.ndarray:
    """One joint denoise update of the shared image.

    Each prompt's guidance is computed on its transformed view, pulled back
    through the inverse transform into the shared space, averaged, and applied
    as a single update.
    """

    def one(item):
        tr, session = item
        req = DenoiseRequest(
            image=apply(tr, x),
            prompt_id=session.prompt,
            step=t,
            total_steps=sched.steps,
            guidance_scale=guidance_scale,
            rng_seed=seed,
        )
        g = session.guidance_step(req).guidance
        if np.asarray(g).shape != x.shape:
            raise BackendError(f"guidance shape {np.asarray(g).shape} != {x.shape}")
        return apply(invert(tr), np.asarray(g, dtype=np.float32))

    pulls = _map_parallel(one, list(zip(transforms, sessions)), workers)
    eps = np.mean(np.stack(pulls), axis=0, dtype=np.float64).astype(np.float32)
    ab_t = float(sched.alpha_bar[t])
    ab_prev = float(sched.alpha_bar[t - 1]) if t > 0 else 1.0
    return denoise_update(x, eps, ab_t, ab_prev)


# --------------------------------------------------------------------------
# mainlines
# --------------------------------------------------------------------------


def mainline_free(cfg: EngineConfig, sessions, trace_hook=None) -> RunResult:
    cfg.validate()
    if cfg.mode != "free_pixel":
        raise ConfigError(f"mainline_free requires free_pixel mode, got {cfg.mode}")
    shape = cfg.resolved_image_shape()
    T = cfg.mainline_steps
    sched = NoiseSchedule.of_kind(cfg.schedule_kind, T)
    lookahead = cfg.resolved_rollout_steps
    n = len(cfg.prompts)

    x = rng.noise_field(shape, cfg.seed, rng.INIT)
    psis = _initial_free_transforms(cfg, shape)
    per_prompt_trace = [[] for _ in range(n)]
    change_counts, energies = [], []

    for t in range(T - 1, -1, -1):
        rels = [relative(psis[i], psis[0]) for i in range(n)]

        def one(i):
            return rollout(
                sessions[i],
                apply(rels[i], x),
                from_step=t + 1,
                schedule=sched,
                lookahead=lookahead,
                rng_seed=cfg.seed,
                guidance_scale=cfg.guidance_scale,
            )

        qs = _map_parallel(one, list(range(n)), cfg.workers)
        if trace_hook is not None:
            for i, q in enumerate(qs):
                trace_hook(t, i, q)
        # re-fit every non-anchor transform against the first idealized image;
        # the idealized images are then discarded
        new_psis = [Identity()]
        step_energy = 0.0
        for i in range(1, n):
            fitted, energy = _fit_transform(cfg, qs[0], qs[i], shape)
            new_psis.append(fitted)
            step_energy += energy
        changed = 0
        for i in range(n):
            delta = int(np.sum(_params_of(new_psis[i]) != _params_of(psis[i]))) if i else 0
            per_prompt_trace[i].append(delta)
            changed += delta
        change_counts.append(changed)
        energies.append(step_energy)
        psis = new_psis
        x = anagram_step(
            x, [relative(psis[i], psis[0]) for i in range(n)], sessions, t, sched,
            guidance_scale=cfg.guidance_scale, seed=cfg.seed, workers=cfg.workers,
        )

    finals = [relative(psis[i], psis[0]) for i in range(n)]
    images = [np.clip(apply(f, x), 0.0, 1.0) for f in finals]
    return RunResult(
        images=images,
        transforms=finals,
        change_trace=change_counts,
        per_prompt_trace=per_prompt_trace,
        energies=energies,
        shared_image=x,
        config=cfg,
    )


def mainline_fixed(cfg: EngineConfig, sessions, trace_hook=None, codec=None) -> RunResult:
    cfg.validate()
    if not cfg.is_fixed:
        raise ConfigError(f"mainline_fixed requires a fixed mode, got {cfg.mode}")
    if cfg.is_latent and codec is None:
        raise ConfigError("latent modes require a codec")
    shape = cfg.resolved_image_shape()
    beta = as_array(cfg.source_images[0])
    T = cfg.mainline_steps
    use_bank = cfg.transform_kind == "permutation"
    bank = _TileBank.build(cfg, shape) if use_bank else None

    if cfg.is_latent:
        roll_sched = NoiseSchedule.of_kind(cfg.schedule_kind, cfg.resolved_rollout_steps)
        w_start = fixed_ratio_weights(cfg.mixing_ratio, roll_sched)
        latent_shape = codec.encode(beta).shape
    else:
        roll_sched = NoiseSchedule.of_kind(cfg.schedule_kind, T)

    def run_prompt(i):
        session = sessions[i]
        pk = prompt_key(cfg.prompts[i])
        psi = bank.identity_selection() if use_bank else _identity_transform(cfg, shape)
        trace, prompt_energies = [], []
        for t in range(T - 1, -1, -1):
            base = bank.compose(psi) if use_bank else apply(psi, beta)
            if cfg.is_latent:
                z = codec.encode(base)
                noise = rng.noise_field(latent_shape, cfg.seed, rng.ROLLOUT, t, *pk)
                start = mix(z, noise, w_start)
                q = codec.decode(
                    rollout(session, start, from_step=roll_sched.steps, schedule=roll_sched,
                            rng_seed=cfg.seed, guidance_scale=cfg.guidance_scale)
                )
            else:
                noise = rng.noise_field(shape, cfg.seed, rng.ROLLOUT, t, *pk)
                start = mix(base, noise, weights_at(roll_sched, t))
                q = rollout(session, start, from_step=t + 1, schedule=roll_sched,
                            rng_seed=cfg.seed, guidance_scale=cfg.guidance_scale)
            if trace_hook is not None:
                trace_hook(t, i, q)
            if use_bank:
                new_psi, energy = bank.fit(q)
            else:
                new_psi, energy = _fit_transform(cfg, beta, q, shape)
            trace.append(int(np.sum(_params_of(new_psi) != _params_of(psi))))
            prompt_energies.append(float(energy))
            psi = new_psi
        out = bank.compose(psi) if use_bank else apply(psi, beta)
        return psi, out, trace, prompt_energies

    results = _map_parallel(run_prompt, list(range(len(cfg.prompts))), cfg.workers)
    transforms = [r[0] for r in results]
    images = [r[1] for r in results]
    per_prompt_trace = [r[2] for r in results]
    change_counts = [int(sum(step)) for step in zip(*per_prompt_trace)]
    energies = [float(sum(step)) for step in zip(*(r[3] for r in results))]
    return RunResult(
        images=images,
        transforms=transforms,
        change_trace=change_counts,
        per_prompt_trace=per_prompt_trace,
        energies=energies,
        shared_image=None,
        config=cfg,
    )


def mainline_latent(cfg: EngineConfig, sessions, codec, trace_hook=None) -> RunResult:
    cfg.validate()
    if not cfg.is_latent:
        raise ConfigError(f"mainline_latent requires a latent mode, got {cfg.mode}")
    if cfg.is_fixed:
        return mainline_fixed(cfg, sessions, trace_hook=trace_hook, codec=codec)

    shape = cfg.resolved_image_shape()
    T = cfg.mainline_steps
    S = cfg.resolved_rollout_steps
    n = len(cfg.prompts)
    roll_sched = NoiseSchedule.of_kind(cfg.schedule_kind, S)
    w_start = fixed_ratio_weights(cfg.mixing_ratio, roll_sched)

    latent_probe = np.zeros(shape, np.float32)
    latent_shape = codec.encode(latent_probe).shape
    x = codec.decode(rng.noise_field(latent_shape, cfg.seed, rng.INIT))
    psis = _initial_free_transforms(cfg, shape)
    per_prompt_trace = [[] for _ in range(n)]
    change_counts, energies = [], []

    for t in range(T - 1, -1, -1):
        rels = [relative(psis[i], psis[0]) for i in range(n)]

        def one(i):
            z = codec.encode(apply(rels[i], x))
            noise = rng.noise_field(latent_shape, cfg.seed, rng.ROLLOUT, t, i)
            start = mix(z, noise, w_start)
            return codec.decode(
                rollout(sessions[i], start, from_step=S, schedule=roll_sched,
                        rng_seed=cfg.seed, guidance_scale=cfg.guidance_scale)
            )

        qs = _map_parallel(one, list(range(n)), cfg.workers)
        if trace_hook is not None:
            for i, q in enumerate(qs):
                trace_hook(t, i, q)
        new_psis = [Identity()]
        step_energy = 0.0
        for i in range(1, n):
            fitted, energy = _fit_transform(cfg, qs[0], qs[i], shape)
            new_psis.append(fitted)
            step_energy += energy
        changed = 0
        for i in range(n):
            delta = int(np.sum(_params_of(new_psis[i]) != _params_of(psis[i]))) if i else 0
            per_prompt_trace[i].append(delta)
            changed += delta
        change_counts.append(changed)
        energies.append(step_energy)
        if cfg.output_combination == "first_rollout" or n == 1:
            x = qs[0]
        else:
            pulls = [apply(invert(rels[i]), qs[i]) for i in range(n)]
            x = np.mean(np.stack(pulls), axis=0, dtype=np.float64).astype(np.float32)
        psis = new_psis

    finals = [relative(psis[i], psis[0]) for i in range(n)]
    images = [np.clip(apply(f, x), 0.0, 1.0) for f in finals]
    return RunResult(
        images=images,
        transforms=finals,
        change_trace=change_counts,
        per_prompt_trace=per_prompt_trace,
        energies=energies,
        shared_image=x,
        config=cfg,
    )


def run(cfg: EngineConfig, sessions, codec=None, trace_hook=None) -> RunResult:
    """Dispatch to the mainline for cfg.mode."""
    cfg.validate()
    if len(sessions) != len(cfg.prompts):
        raise ConfigError("need one denoise session per prompt")
    if cfg.mode == "free_pixel":
        return mainline_free(cfg, sessions, trace_hook=trace_hook)
    if cfg.mode == "fixed_pixel":
        return mainline_fixed(cfg, sessions, trace_hook=trace_hook)
    if codec is None:
        raise ConfigError("latent modes require a codec")
    return mainline_latent(cfg, sessions, codec, trace_hook=trace_hook)
